use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn tem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tem"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

const CASE1: &str = r#"{
  "num_topics": 4, "num_words": 80, "num_docs": 1500,
  "max_topics_per_doc": 2, "rho": 0.1, "seed": 3
}"#;

fn generate(dir: &Path, config: &str, out: &str) -> (Output, String) {
    let cfg = write(dir, "config.json", config);
    let path = dir.join(out).display().to_string();
    (tem(&["generate", "--config", &cfg, "--out", &path]), path)
}

#[test]
fn generate_minimal_config_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (out, a) = generate(
        dir.path(),
        r#"{"num_topics": 2, "num_words": 30, "num_docs": 400, "max_topics_per_doc": 2, "rho": 0.1, "seed": 1}"#,
        "a.json",
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let (_, b) = generate(
        dir.path(),
        r#"{"num_topics": 2, "num_words": 30, "num_docs": 400, "max_topics_per_doc": 2, "rho": 0.1, "seed": 1}"#,
        "b.json",
    );
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
    assert_eq!(v["beta"].as_array().unwrap().len(), 2);
    assert!(v["docs"][0]["words"][0].is_array());
}

#[test]
fn infeasible_case2_gap_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let (out, _) = generate(
        dir.path(),
        r#"{"num_topics": 3, "num_words": 60, "num_docs": 100, "max_topics_per_doc": 2, "rho": 0.1,
            "case2": {"anchor_mass": 0.8, "dynamic_range": 2.0, "c_large": 0.6, "c_small": 0.3}}"#,
        "x.json",
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("gap inequality"));
}

#[test]
fn oracle_run_reaches_target_and_evaluates() {
    let dir = TempDir::new().unwrap();
    let (out, inst) = generate(dir.path(), CASE1, "inst.json");
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let run_dir = dir.path().join("run").display().to_string();
    let out = tem(&["run", "--instance", &inst, "--init", "oracle-support", "--iters", "30", "--out-dir", &run_dir]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.path().join("run/trace.csv")).unwrap();
    assert!(trace.starts_with("t,C_beta,C_gamma,kl_beta_max,dominant_acc,estep_objective_mean\n"));
    let last: Vec<&str> = trace.lines().last().unwrap().split(',').collect();
    assert!(last[1].parse::<f64>().unwrap() <= 1.1);
    for f in ["final_state.json", "manifest.json"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }

    let trace_path = dir.path().join("run/trace.csv").display().to_string();
    let out = tem(&["eval", "--trace", &trace_path, "--instance", &inst]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));

    // Same inputs, same bytes.
    let again = dir.path().join("again").display().to_string();
    tem(&["run", "--instance", &inst, "--init", "oracle-support", "--iters", "30", "--out-dir", &again]);
    for f in ["trace.csv", "final_state.json"] {
        assert_eq!(
            fs::read(dir.path().join("run").join(f)).unwrap(),
            fs::read(dir.path().join("again").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn vanilla_run_emits_a_trace() {
    let dir = TempDir::new().unwrap();
    let (_, inst) = generate(dir.path(), CASE1, "inst.json");
    let run_dir = dir.path().join("v").display().to_string();
    let out = tem(&[
        "run", "--instance", &inst, "--init", "oracle-support", "--variant", "vanilla", "--iters", "5", "--out-dir",
        &run_dir, "--no-early-stop",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.path().join("v/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 7);
}

#[test]
fn missing_instance_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("o").display().to_string();
    let out = tem(&["run", "--instance", "/nonexistent/inst.json", "--init", "oracle-support", "--out-dir", &out_dir]);
    assert_eq!(code(&out), 2);
}

#[test]
fn eval_flags_a_non_contracting_trace() {
    let dir = TempDir::new().unwrap();
    let (_, inst) = generate(dir.path(), CASE1, "inst.json");
    let trace = write(
        dir.path(),
        "bad.csv",
        "t,C_beta,C_gamma,kl_beta_max,dominant_acc,estep_objective_mean\n0,4,1,0.1,1,0\n1,3.9,1,0.1,1,0\n2,3.8,1,0.1,1,0\n",
    );
    let out = tem(&["eval", "--trace", &trace, "--instance", &inst]);
    assert_eq!(code(&out), 1);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("t=0 C_beta"), "{stdout}");

    let garbage = write(dir.path(), "garbage.csv", "a,b\n1,2\n");
    assert_eq!(code(&tem(&["eval", "--trace", &garbage, "--instance", &inst])), 2);
}

#[test]
fn seeded_run_writes_a_phase_report() {
    let dir = TempDir::new().unwrap();
    let (out, inst) = generate(
        dir.path(),
        r#"{"num_topics": 3, "num_words": 90, "num_docs": 1500, "max_topics_per_doc": 2, "rho": 0.1, "seed": 2,
            "case2": {"anchor_mass": 0.8, "dynamic_range": 2.0, "c_large": 0.9, "c_small": 0.05,
                      "delta": 0.02, "heavy_frac": 0.5}}"#,
        "c2.json",
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let run_dir = dir.path().join("s").display().to_string();
    let out = tem(&["run", "--instance", &inst, "--init", "seeded", "--iters", "10", "--out-dir", &run_dir, "--no-early-stop"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("s/phase_report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 11);
}

#[test]
fn experiment_suites_write_aggregate_tables() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("e").display().to_string();
    let out = tem(&["experiment", "dirichlet_checks", "--out-dir", &out_dir, "--seeds", "7", "--scale", "quick"]);
    assert!(matches!(code(&out), 0 | 1));
    let table = fs::read_to_string(dir.path().join("e/aggregate.csv")).unwrap();
    assert!(table.starts_with("seed,run,success,iterations_to_target,final_c_beta\n7,dirichlet_checks,"));
    assert!(dir.path().join("e/seed_7_dirichlet_checks.json").exists());

    assert_eq!(code(&tem(&["experiment", "nope", "--out-dir", &out_dir])), 2);
}

#[test]
fn support_initialization_runs_without_ground_truth_supports() {
    let dir = TempDir::new().unwrap();
    let (out, inst) = generate(
        dir.path(),
        r#"{"num_topics": 3, "num_words": 60, "num_docs": 3000, "max_topics_per_doc": 2, "rho": 0.1,
            "dominant_min": 0.8, "seed": 4}"#,
        "s.json",
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let run_dir = dir.path().join("r").display().to_string();
    let out = tem(&["run", "--instance", &inst, "--init", "support", "--iters", "30", "--out-dir", &run_dir]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.path().join("r/trace.csv")).unwrap();
    let last: Vec<&str> = trace.lines().last().unwrap().split(',').collect();
    assert!(last[1].parse::<f64>().unwrap() <= 1.1, "{trace}");
}
