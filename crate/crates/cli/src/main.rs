//! `tem`: generate synthetic instances, run thresholded EM, evaluate traces
//! and run the scripted experiment suites.
//!
//! Exit codes: 0 pass, 1 property failure, 2 input error, 3 inference error.

mod io;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use tem_core::diagnostics::{check_error_evolution, match_topics, ErrorTrace, TraceWriter};
use tem_core::experiments::{
    self, run_suite, support_initial_state, Scale, Suite, SuiteDetail, EVOLUTION_CAP, EVOLUTION_TOL,
};
use tem_core::generator::{add_common_words, gen_case1, gen_case2, verify_assumptions, AssumptionCase};
use tem_core::inference::{run_tem, InferenceState, IterationView, RunConfig, Truth, Variant};
use tem_core::init_seeded::{phase_monitor, seeded_init, select_seed_docs, PhaseSettings, SeedPolicy, SEED_FLOOR};
use tem_core::init_support::oracle_initial_state;
use tem_core::model::{DocMode, Document, GenerationParams, Instance, TopicWordMatrix};

use io::{num, read_instance, read_json, state_json, write_json, InstanceFile};

#[derive(Debug)]
pub enum CliError {
    /// Some checked property does not hold.
    Property(String),
    /// Unreadable or invalid input.
    Input(String),
    /// Inference failed part-way.
    Inference(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Property(_) => 1,
            CliError::Input(_) => 2,
            CliError::Inference(_) => 3,
        }
    }
}

impl From<tem_core::Error> for CliError {
    fn from(e: tem_core::Error) -> Self {
        use tem_core::Error as E;
        match e {
            E::Inference(_) | E::EmptyTopic { .. } | E::NoSeedDocument { .. } => CliError::Inference(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

impl OnOff {
    fn on(self) -> bool {
        self == OnOff::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InitKind {
    /// Topic and document supports recovered from the corpus.
    Support,
    /// Rows seeded from nearly pure documents (Case-2 instances).
    Seeded,
    /// True supports of the instance.
    OracleSupport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    KlTem,
    Iterative,
    Incomplete,
    Vanilla,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::KlTem => Variant::KlTem,
            VariantArg::Iterative => Variant::Iterative,
            VariantArg::Incomplete => Variant::Incomplete,
            VariantArg::Vanilla => Variant::Vanilla,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Purest,
    LeastPure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScaleArg {
    Full,
    Quick,
}

#[derive(Parser, Debug)]
#[command(name = "tem", version, about = "Thresholded variational EM for topic models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an instance from a JSON config and check its assumptions.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// `on` forces exact frequencies; `off` requires a multinomial doc_mode.
        #[arg(long, value_enum)]
        exact_docs: Option<OnOff>,
    },
    /// Run a tEM variant on an instance file.
    Run {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum)]
        init: InitKind,
        #[arg(long, value_enum, default_value = "kl-tem")]
        variant: VariantArg,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long)]
        out_dir: PathBuf,
        /// Target accuracy: runs stop once C_beta <= 1 + epsilon'.
        #[arg(long, default_value_t = 0.1)]
        epsilon_prime: f64,
        /// Keep iterating after the target is reached.
        #[arg(long)]
        no_early_stop: bool,
        #[arg(long, value_enum, default_value = "on")]
        renormalize: OnOff,
        #[arg(long)]
        threads: Option<usize>,
        /// Seed for pair sampling in support initialization.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "purest")]
        seed_policy: PolicyArg,
    },
    /// Check a trace against the error-evolution law and the final accuracy.
    Eval {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        instance: PathBuf,
        /// Document accuracy; defaults to the instance's achieved value.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        epsilon_prime: f64,
    },
    /// Run a scripted multi-seed experiment suite.
    Experiment {
        /// One of case1_support, case1_tem, case2_seeded, common_words, dirichlet_checks.
        suite: String,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long, value_enum, default_value = "full")]
        scale: ScaleArg,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            config,
            out,
            seed,
            exact_docs,
        } => cmd_generate(&config, &out, seed, exact_docs),
        Command::Run {
            instance,
            init,
            variant,
            iters,
            out_dir,
            epsilon_prime,
            no_early_stop,
            renormalize,
            threads,
            seed,
            seed_policy,
        } => cmd_run(RunArgs {
            instance,
            init,
            variant: variant.into(),
            iters,
            out_dir,
            epsilon_prime,
            early_stop: !no_early_stop,
            renormalize: renormalize.on(),
            threads,
            seed,
            policy: match seed_policy {
                PolicyArg::Purest => SeedPolicy::Purest,
                PolicyArg::LeastPure => SeedPolicy::LeastPure,
            },
        }),
        Command::Eval {
            trace,
            instance,
            epsilon,
            epsilon_prime,
        } => cmd_eval(&trace, &instance, epsilon, epsilon_prime),
        Command::Experiment {
            suite,
            out_dir,
            seeds,
            scale,
            threads,
        } => cmd_experiment(&suite, &out_dir, &seeds, scale, threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Property(m) => eprintln!("property failure: {m}"),
                CliError::Input(m) => eprintln!("input error: {m}"),
                CliError::Inference(m) => eprintln!("inference error: {m}"),
            }
            ExitCode::from(e.code())
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn generate(params: &GenerationParams) -> tem_core::Result<(Instance, AssumptionCase)> {
    let (base, case) = match params.case2 {
        Some(_) => (gen_case2(params)?, AssumptionCase::Case2),
        None => (gen_case1(params)?, AssumptionCase::Case1),
    };
    match &params.common {
        Some(common) => Ok((add_common_words(&base, common)?, AssumptionCase::CommonWords)),
        None => Ok((base, case)),
    }
}

fn cmd_generate(config: &Path, out: &Path, seed: Option<u64>, exact_docs: Option<OnOff>) -> Result<(), CliError> {
    let mut params: GenerationParams = read_json(config)?;
    if let Some(s) = seed {
        params.seed = s;
    }
    match exact_docs {
        Some(OnOff::On) => params.doc_mode = DocMode::Exact,
        Some(OnOff::Off) if params.doc_mode == DocMode::Exact => {
            return Err(CliError::Input(
                "--exact-docs off needs a multinomial doc_mode in the config".into(),
            ))
        }
        _ => {}
    }
    let (instance, case) = generate(&params).map_err(|e| CliError::Input(e.to_string()))?;
    write_json(out, &InstanceFile::from_instance(&instance))?;

    let mut reports = vec![verify_assumptions(&instance, case)];
    if case == AssumptionCase::CommonWords {
        let base_case = if params.case2.is_some() { AssumptionCase::Case2 } else { AssumptionCase::Case1 };
        reports.insert(0, verify_assumptions(&instance, base_case));
    }
    let mut failed = Vec::new();
    for report in &reports {
        for check in &report.checks {
            let verdict = if check.passed { "pass" } else { "FAIL" };
            println!(
                "{verdict:>4}  {:<32} measured {:.6} threshold {:.6}{}",
                check.name,
                check.measured,
                check.threshold,
                check.witness.as_deref().map_or(String::new(), |w| format!(" ({w})"))
            );
            if !check.passed {
                failed.push(check.name.clone());
            }
        }
    }
    println!(
        "wrote {} ({} topics, {} words, {} documents, epsilon {:.3e})",
        out.display(),
        instance.num_topics(),
        instance.num_words(),
        instance.docs.len(),
        instance.epsilon_achieved
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Property(format!("assumptions failed: {}", failed.join(", "))))
    }
}

struct RunArgs {
    instance: PathBuf,
    init: InitKind,
    variant: Variant,
    iters: usize,
    out_dir: PathBuf,
    epsilon_prime: f64,
    early_stop: bool,
    renormalize: bool,
    threads: Option<usize>,
    seed: u64,
    policy: SeedPolicy,
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let instance = read_instance(&args.instance)?;
    create_dir(&args.out_dir)?;
    let k = instance.num_topics();

    let mut seed_docs = None;
    let init: InferenceState = match args.init {
        InitKind::OracleSupport => oracle_initial_state(&instance)?,
        InitKind::Support => support_initial_state(
            &instance.docs,
            k,
            instance.params.max_topics_per_doc,
            args.seed,
        )?,
        InitKind::Seeded => {
            let c_large = instance
                .params
                .case2
                .as_ref()
                .map(|c| c.c_large)
                .ok_or_else(|| CliError::Input("seeded initialization needs a Case-2 instance".into()))?;
            let seeds = select_seed_docs(&instance, c_large, args.policy)?;
            let docs: Vec<&Document> = seeds.iter().map(|&d| &instance.docs[d]).collect();
            seed_docs = Some(seeds);
            seeded_init(&docs, instance.docs.len(), SEED_FLOOR)?
        }
    };
    // Recovered supports come in arbitrary order; match them once up front.
    let permutation = match args.init {
        InitKind::Support => match_topics(&init.beta, &instance.beta_true)?,
        _ => (0..k).collect(),
    };
    let truth = Truth {
        instance: &instance,
        permutation,
        beta_mask: (!instance.common_words.is_empty()).then(|| instance.non_common_mask()),
    };

    let mut config = RunConfig::new(args.variant, args.iters);
    config.renormalize = args.renormalize;
    config.threads = args.threads;
    if args.early_stop {
        config.target = Some(1.0 + args.epsilon_prime);
    }

    let trace_path = args.out_dir.join("trace.csv");
    let mut writer = TraceWriter::new(create_file(&trace_path)?)?;
    let mut history: Vec<TopicWordMatrix> = Vec::new();
    let keep_history = args.init == InitKind::Seeded;
    let mut observer = |view: &IterationView<'_>| -> tem_core::Result<()> {
        if let Some(row) = view.row {
            writer.write_row(row)?;
        }
        if keep_history {
            history.push(view.state.beta.clone());
        }
        Ok(())
    };
    let outcome = run_tem(&instance.docs, init, &config, Some(&truth), &mut observer);
    let outcome = outcome.map_err(|e| CliError::Inference(format!("{e} (partial trace in {})", trace_path.display())))?;

    write_json(&args.out_dir.join("final_state.json"), &state_json(&outcome.state))?;
    if keep_history {
        let settings = PhaseSettings {
            c_large: instance.params.case2.as_ref().map_or(0.9, |c| c.c_large),
            epsilon: instance.epsilon_achieved,
            halving_floor: experiments::CASE2_OFF_ANCHOR_TARGET,
            ..PhaseSettings::default()
        };
        write_json(
            &args.out_dir.join("phase_report.json"),
            &phase_monitor(&history, &instance, &settings),
        )?;
    }
    let final_c_beta = outcome.trace.rows.last().map_or(f64::INFINITY, |r| r.c_beta);
    let manifest = json!({
        "command": "run",
        "instance": args.instance.display().to_string(),
        "instance_seed": instance.params.seed,
        "init": args.init.to_possible_value().map(|v| v.get_name().to_string()),
        "variant": args.variant.name(),
        "iters": args.iters,
        "epsilon_prime": args.epsilon_prime,
        "early_stop": args.early_stop,
        "renormalize": args.renormalize,
        "threads": args.threads,
        "seed": args.seed,
        "seed_policy": args.policy,
        "seed_docs": seed_docs,
        "estep": config.estep,
        "iterations_run": outcome.state.iteration,
        "reached_target_at": outcome.reached_target_at,
        "final_c_beta": num(final_c_beta),
        "wall_time_secs": started.elapsed().as_secs_f64(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_json(&args.out_dir.join("manifest.json"), &manifest)?;
    println!(
        "{} from {:?}: {} iterations, final C_beta {final_c_beta:.6}, outputs in {}",
        args.variant.name(),
        args.init,
        outcome.state.iteration,
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_eval(trace_path: &Path, instance_path: &Path, epsilon: Option<f64>, epsilon_prime: f64) -> Result<(), CliError> {
    let file = File::open(trace_path).map_err(|e| CliError::Input(format!("{}: {e}", trace_path.display())))?;
    let trace = ErrorTrace::read_csv(file).map_err(|e| CliError::Input(format!("{}: {e}", trace_path.display())))?;
    if trace.rows.is_empty() {
        return Err(CliError::Input(format!("{}: trace has no rows", trace_path.display())));
    }
    let instance = read_instance(instance_path)?;
    let epsilon = epsilon.unwrap_or(instance.epsilon_achieved);

    let mut failures = Vec::new();
    let evolution = check_error_evolution(&trace, epsilon, EVOLUTION_TOL, Some(EVOLUTION_CAP));
    let verdict = |ok: bool| if ok { "pass" } else { "FAIL" };
    println!(
        "{}  error evolution ({} iterations checked, {} violations)",
        verdict(evolution.passed()),
        evolution.checked,
        evolution.violations.len()
    );
    for v in &evolution.violations {
        println!("      t={} {} = {} exceeds {}", v.t, v.which, v.value, v.bound);
    }
    if !evolution.passed() {
        failures.push("error evolution");
    }
    let last = trace.rows.last().expect("nonempty");
    let target = 1.0 + epsilon_prime;
    let accurate = last.c_beta <= target;
    println!("{}  final C_beta {} <= {target}", verdict(accurate), last.c_beta);
    if !accurate {
        failures.push("final accuracy");
    }
    let dominant = trace.rows.iter().map(|r| r.dominant_acc).fold(1.0, f64::min);
    println!("{}  dominant accuracy {dominant} at every iteration", verdict(dominant == 1.0));
    if dominant != 1.0 {
        failures.push("dominant topic");
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Property(failures.join(", ")))
    }
}

fn cmd_experiment(
    suite: &str,
    out_dir: &Path,
    seeds: &[u64],
    scale: ScaleArg,
    threads: Option<usize>,
) -> Result<(), CliError> {
    let started = Instant::now();
    let suite = Suite::parse(suite).map_err(|e| CliError::Input(e.to_string()))?;
    let scale = match scale {
        ScaleArg::Full => Scale::Full,
        ScaleArg::Quick => Scale::Quick,
    };
    create_dir(out_dir)?;
    let entries = run_suite(suite, seeds, scale, threads)?;

    let mut table = String::from("seed,run,success,iterations_to_target,final_c_beta\n");
    for entry in &entries {
        let r = &entry.result;
        let stem = format!("seed_{}_{}", r.seed, r.run);
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            r.seed,
            r.run,
            r.success,
            r.iterations_to_target.map_or(String::new(), |t| t.to_string()),
            fmt_value(r.final_c_beta)
        ));
        let detail = match &entry.detail {
            SuiteDetail::Tem(run) => {
                run.outcome.trace.write_csv(create_file(&out_dir.join(format!("{stem}_trace.csv")))?)?;
                json!({
                    "evolution_checked": run.evolution.checked,
                    "evolution_violations": run.evolution.violations.iter().map(|v| json!({
                        "t": v.t, "which": v.which, "value": num(v.value), "bound": num(v.bound)
                    })).collect::<Vec<_>>(),
                    "min_dominant_acc": run.min_dominant_acc,
                })
            }
            SuiteDetail::Seeded(s) => {
                s.run.outcome.trace.write_csv(create_file(&out_dir.join(format!("{stem}_trace.csv")))?)?;
                write_json(&out_dir.join(format!("{stem}_phase_report.json")), &s.phase)?;
                json!({
                    "seed_docs": s.seeds,
                    "off_anchor_below_target_at": s.off_anchor_below_at(experiments::CASE2_OFF_ANCHOR_TARGET),
                    "halving_violations": s.phase.halving_violations,
                    "gamma_bound_violations": s.gamma_bound_violations(),
                    "gamma_bound_max_excess": num(s.gamma_bounds.iter().map(|b| b.max_excess).fold(f64::NEG_INFINITY, f64::max)),
                    "min_dominant_acc": s.run.min_dominant_acc,
                })
            }
            SuiteDetail::Support(run) => serde_json::to_value(run).map_err(|e| CliError::Input(e.to_string()))?,
            SuiteDetail::Failed(message) => json!({ "error": message }),
            SuiteDetail::Dirichlet(res) => json!({
                "sparsity_violation_rate": res.sparsity_violation_rate,
                "sparsity_bound": experiments::dirichlet_sparsity_bound(experiments::dirichlet_config(scale).num_topics),
                "mean_large_coords": res.mean_large_coords,
                "max_tail_prob_ratio": num(res.max_tail_prob_ratio),
                "correlation_deviation": num(res.correlation_deviation),
            }),
        };
        let mut record = json!({
            "seed": r.seed,
            "run": r.run,
            "success": r.success,
            "iterations_to_target": r.iterations_to_target,
            "final_c_beta": num(r.final_c_beta),
        });
        record["detail"] = detail;
        write_json(&out_dir.join(format!("{stem}.json")), &record)?;
    }
    fs::write(out_dir.join("aggregate.csv"), &table).map_err(|e| CliError::Input(e.to_string()))?;
    write_json(
        &out_dir.join("manifest.json"),
        &json!({
            "command": "experiment",
            "suite": suite.name(),
            "seeds": seeds,
            "scale": scale,
            "threads": threads,
            "wall_time_secs": started.elapsed().as_secs_f64(),
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    print!("{table}");
    let ok = entries.iter().filter(|e| e.result.success).count();
    println!("{}: {ok}/{} runs succeeded", suite.name(), entries.len());
    if ok == entries.len() {
        Ok(())
    } else {
        Err(CliError::Property(format!("{} of {} runs failed", entries.len() - ok, entries.len())))
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v == f64::INFINITY {
        "inf".into()
    } else {
        v.to_string()
    }
}
