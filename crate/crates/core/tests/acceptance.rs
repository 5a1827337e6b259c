//! Acceptance criteria 1-11. Each test prints one PASS/FAIL line.
//!
//! Run with `cargo test -p tem-core --test acceptance -- --nocapture`.

use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng as _;
use rand_distr::{Distribution, Exp1};

use tem_core::diagnostics::oracle_estep;
use tem_core::experiments::{
    self, case1_support_params, case1_tem_params, case2_seeded_params, common_words_params, dirichlet_config,
    run_oracle_tem, run_seeded, run_support_recovery, Scale, SeededRun, TemRun, CASE1_TEM_ITERS, CASE1_VARIANTS,
    CASE2_ITERS, CASE2_OFF_ANCHOR_TARGET, CASE2_SEED_POLICY, CASE2_PHASE1_ITERS, COMMON_WORDS_ITERS, EPSILON_PRIME,
};
use tem_core::generator::{
    add_common_words, dirichlet_property_check, gen_case1, gen_case2, verify_assumptions, AssumptionCase,
};
use tem_core::inference::{estep_kl, run_tem, EStepSettings, InferenceState, RunConfig, Variant};
use tem_core::model::{Document, GenerationParams, Instance, TopicProportions, TopicWordMatrix, WordCount};
use tem_core::rng;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n:>2} {name}: {verdict} {detail}");
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

struct Case1Runs {
    instances: Vec<Instance>,
    /// runs[s][v] for seed index s and variant index v of CASE1_VARIANTS.
    runs: Vec<Vec<TemRun>>,
    secs_per_variant: [f64; 3],
}

fn case1_runs() -> &'static Case1Runs {
    static RUNS: OnceLock<Case1Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut secs = [0.0; 3];
        let mut instances = Vec::new();
        let mut runs = Vec::new();
        for seed in SEEDS {
            let inst = gen_case1(&case1_tem_params(seed, Scale::Full)).unwrap();
            let report = verify_assumptions(&inst, AssumptionCase::Case1);
            assert!(report.all_passed(), "seed {seed}: {report:#?}");
            let mut per_seed = Vec::new();
            for (v, variant) in CASE1_VARIANTS.into_iter().enumerate() {
                let start = Instant::now();
                per_seed.push(run_oracle_tem(&inst, variant, CASE1_TEM_ITERS, None, None).unwrap());
                secs[v] += start.elapsed().as_secs_f64();
            }
            instances.push(inst);
            runs.push(per_seed);
        }
        Case1Runs {
            instances,
            runs,
            secs_per_variant: secs,
        }
    })
}

struct Case2Runs {
    runs: Vec<SeededRun>,
}

fn case2_runs() -> &'static Case2Runs {
    static RUNS: OnceLock<Case2Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let runs = SEEDS
            .iter()
            .map(|&seed| {
                let inst = gen_case2(&case2_seeded_params(seed, Scale::Full)).unwrap();
                let report = verify_assumptions(&inst, AssumptionCase::Case2);
                assert!(report.all_passed(), "seed {seed}: {report:#?}");
                run_seeded(&inst, CASE2_ITERS, CASE2_SEED_POLICY, None).unwrap()
            })
            .collect();
        Case2Runs { runs }
    })
}

fn random_row(n: usize, r: &mut rng::Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| Exp1.sample(r)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Largest |g_i - 1| over positive coordinates, where g_i = sum_j f~_j beta_ij / f_j.
fn kkt_positive(doc: &Document, beta: &TopicWordMatrix, gamma: &TopicProportions) -> f64 {
    let k = beta.num_topics();
    let mut worst: f64 = 0.0;
    for i in (0..k).filter(|&i| gamma.get(i) > 0.0) {
        let mut g = 0.0;
        for &j in doc.nonzero() {
            let f: f64 = (0..k).map(|l| gamma.get(l) * beta.get(l, j)).sum();
            g += doc.freqs()[j] * beta.get(i, j) / f;
        }
        worst = worst.max((g - 1.0).abs());
    }
    worst
}

fn kl_objective(doc: &Document, beta: &TopicWordMatrix, gamma: &TopicProportions) -> f64 {
    let k = beta.num_topics();
    doc.nonzero()
        .iter()
        .map(|&j| {
            let f: f64 = (0..k).map(|l| gamma.get(l) * beta.get(l, j)).sum();
            let ft = doc.freqs()[j];
            ft * (ft / f).ln()
        })
        .sum()
}

#[test]
fn criterion_01_estep_matches_reference_solver() {
    let start = Instant::now();
    let mut r = rng::seeded(101);
    let n = 10;
    let (mut worst_gap, mut worst_kkt) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let k = r.random_range(2..=4);
        let beta = TopicWordMatrix::from_rows((0..k).map(|_| random_row(n, &mut r)).collect()).unwrap();
        // Half realizable documents, half arbitrary ones.
        let freqs = if r.random_bool(0.5) {
            let g = TopicProportions::new(random_row(k, &mut r)).unwrap();
            tem_core::model::predicted_freqs(&g, &beta).unwrap()
        } else {
            random_row(n, &mut r)
        };
        let doc = Document::new(freqs, WordCount::Exact, None).unwrap();
        let all: Vec<usize> = (0..k).collect();
        let init = TopicProportions::uniform_on(k, &all);
        let ours = estep_kl(&doc, &beta, &init, &EStepSettings::default()).unwrap();
        let reference = oracle_estep(&doc, &beta, &all, 0.02).unwrap();
        let gap = ours.objective - kl_objective(&doc, &beta, &reference);
        worst_gap = worst_gap.max(gap.abs());
        worst_kkt = worst_kkt.max(kkt_positive(&doc, &beta, &ours.gamma));
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "E-step oracle equivalence",
        worst_gap <= 1e-6 && worst_kkt <= 1e-8 && secs < 60.0,
        &format!("max |objective gap| = {worst_gap:.2e} (<= 1e-6), max KKT residual = {worst_kkt:.2e} (<= 1e-8), {secs:.1}s (< 60s)"),
    );
}

#[test]
fn criterion_02_truth_is_a_fixed_point() {
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let mut p = GenerationParams::new(5, 120, 600, 3, 0.1, 1000 + seed);
        p.min_entry = Some(1e-4);
        let inst = gen_case1(&p).unwrap();
        let k = inst.num_topics();
        let all: Vec<usize> = (0..k).collect();
        let mut state = InferenceState::new(inst.beta_true.clone(), vec![all; inst.docs.len()], None);
        state.gammas = inst.gammas_true();
        let out = run_tem(&inst.docs, state, &RunConfig::new(Variant::KlTem, 1), None, &mut ()).unwrap();
        for (a, b) in out.state.beta.as_slice().iter().zip(inst.beta_true.as_slice()) {
            worst = worst.max((a - b).abs());
        }
        for (g, doc) in out.state.gammas.iter().zip(&inst.docs) {
            for (a, b) in g.weights().iter().zip(doc.truth().unwrap().weights()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    report(
        2,
        "fixed point",
        worst <= 1e-9,
        &format!("max entrywise change over 50 instances = {worst:.2e} (<= 1e-9)"),
    );
}

#[test]
fn criterion_03_case1_replication() {
    let c = case1_runs();
    let mut pass = true;
    let mut parts = Vec::new();
    for (v, variant) in CASE1_VARIANTS.into_iter().enumerate() {
        let ok = c.runs.iter().filter(|s| s[v].reached_at.is_some_and(|t| t <= CASE1_TEM_ITERS)).count();
        let iters: Vec<String> = c
            .runs
            .iter()
            .map(|s| s[v].reached_at.map_or("-".into(), |t| t.to_string()))
            .collect();
        let secs = c.secs_per_variant[v];
        pass &= ok == SEEDS.len() && secs < 600.0;
        parts.push(format!("{} {ok}/5 at t=[{}] {secs:.0}s", variant.name(), iters.join(",")));
    }
    report(
        3,
        "Case-1 tEM replication",
        pass,
        &format!("C_beta <= {} within {CASE1_TEM_ITERS}: {}", 1.0 + EPSILON_PRIME, parts.join("; ")),
    );
}

#[test]
fn criterion_04_error_evolution() {
    let c = case1_runs();
    let mut checked = 0;
    let mut violations = Vec::new();
    for (s, per_seed) in c.runs.iter().enumerate() {
        for (v, run) in per_seed.iter().enumerate() {
            checked += run.evolution.checked;
            for viol in &run.evolution.violations {
                violations.push(format!(
                    "seed {s} {} t={} {} {:.4} > {:.4}",
                    CASE1_VARIANTS[v].name(),
                    viol.t,
                    viol.which,
                    viol.value,
                    viol.bound
                ));
            }
        }
    }
    report(
        4,
        "error-evolution law",
        violations.is_empty() && checked > 0,
        &format!("{checked} iterations checked, {} violations {:?}", violations.len(), violations),
    );
}

#[test]
fn criterion_05_dominant_topic_identification() {
    let c1 = case1_runs();
    let c2 = case2_runs();
    let min1 = c1.runs.iter().flatten().map(|r| r.min_dominant_acc).fold(1.0, f64::min);
    let min2 = c2.runs.iter().map(|r| r.run.min_dominant_acc).fold(1.0, f64::min);
    report(
        5,
        "dominant-topic identification",
        min1 == 1.0 && min2 == 1.0,
        &format!("min accuracy over iterations: Case-1 {min1}, Case-2 {min2} (== 1)"),
    );
}

#[test]
fn criterion_06_support_recovery() {
    let start = Instant::now();
    let mut exact = 0;
    let mut false_positives = 0;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let inst = gen_case1(&case1_support_params(seed, Scale::Full)).unwrap();
        match run_support_recovery(&inst, seed) {
            Ok(run) => {
                exact += usize::from(run.exact());
                false_positives += run.false_positives;
                parts.push(format!(
                    "seed {seed}: topics {} docs {} ({} mismatched), {}/{} yes",
                    run.topics_exact, run.docs_exact, run.doc_mismatches, run.pairs_yes, run.pairs_tested
                ));
            }
            Err(e) => parts.push(format!("seed {seed}: {e}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        6,
        "Case-1 support recovery",
        exact >= 4 && false_positives == 0 && secs < 900.0,
        &format!("{exact}/5 exact (>= 4), {false_positives} false positives (== 0), {secs:.0}s; {}", parts.join("; ")),
    );
}

#[test]
fn criterion_07_case2_seeded_replication() {
    let c = case2_runs();
    let reached: Vec<Option<usize>> = c.runs.iter().map(|r| r.run.reached_at).collect();
    let phase: Vec<Option<usize>> = c.runs.iter().map(|r| r.off_anchor_below_at(CASE2_OFF_ANCHOR_TARGET)).collect();
    let halving: usize = c.runs.iter().map(|r| r.phase.halving_violations.len()).sum();
    let ok_reach = reached.iter().all(|r| r.is_some_and(|t| t <= CASE2_ITERS));
    let ok_phase = phase.iter().all(|p| p.is_some_and(|t| t <= CASE2_PHASE1_ITERS));
    report(
        7,
        "Case-2 seeded replication",
        ok_reach && ok_phase && halving == 0,
        &format!(
            "C_beta <= 1.1 at t={reached:?} (<= {CASE2_ITERS}); off-anchor < 1e-8 at t={phase:?} (<= {CASE2_PHASE1_ITERS}); {halving} halving violations"
        ),
    );
}

#[test]
fn criterion_08_gamma_error_bound() {
    let c = case2_runs();
    let checked: usize = c.runs.iter().map(|r| r.gamma_bounds.len()).sum();
    let violations: usize = c.runs.iter().map(|r| r.gamma_bound_violations()).sum();
    let worst = c
        .runs
        .iter()
        .flat_map(|r| r.gamma_bounds.iter().map(|b| b.max_excess))
        .fold(f64::NEG_INFINITY, f64::max);
    report(
        8,
        "gamma-error bound",
        violations == 0 && checked > 0,
        &format!("{checked} E-steps checked, {violations} violating, largest excess {worst:.3e}"),
    );
}

#[test]
fn criterion_09_common_words() {
    let mut reached = Vec::new();
    for seed in SEEDS {
        let (params, common) = common_words_params(seed, Scale::Full);
        let inst = add_common_words(&gen_case1(&params).unwrap(), &common).unwrap();
        let report = verify_assumptions(&inst, AssumptionCase::CommonWords);
        assert!(report.all_passed(), "seed {seed}: {report:#?}");
        let mask = inst.non_common_mask();
        let run = run_oracle_tem(&inst, Variant::KlTem, COMMON_WORDS_ITERS, Some(mask), None).unwrap();
        reached.push(run.reached_at);
    }
    report(
        9,
        "common-words extension",
        reached.iter().all(|r| r.is_some_and(|t| t <= COMMON_WORDS_ITERS)),
        &format!("C_beta (non-common words) <= 1.1 at t={reached:?} (<= {COMMON_WORDS_ITERS})"),
    );
}

#[test]
fn criterion_10_dirichlet_monte_carlo() {
    let start = Instant::now();
    let config = dirichlet_config(Scale::Full);
    let mut r = rng::seeded(10);
    let res = dirichlet_property_check(&config, &mut r).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let bound = experiments::dirichlet_sparsity_bound(config.num_topics);
    report(
        10,
        "Dirichlet Monte-Carlo",
        res.sparsity_violation_rate <= bound
            && res.max_tail_prob_ratio <= experiments::DIRICHLET_TAIL_RATIO_MAX
            && secs < 120.0,
        &format!(
            "sparsity violation rate {:.4} (<= {bound:.4}), tail ratio {:.3} (<= 3), {secs:.1}s (< 120s)",
            res.sparsity_violation_rate, res.max_tail_prob_ratio
        ),
    );
}

fn trace_bytes(run: &TemRun) -> Vec<u8> {
    let mut buf = Vec::new();
    run.outcome.trace.write_csv(&mut buf).unwrap();
    buf
}

#[test]
fn criterion_11_determinism() {
    let c = case1_runs();
    let inst = &c.instances[0];
    let again = gen_case1(&case1_tem_params(SEEDS[0], Scale::Full)).unwrap();
    let same_instance = again.beta_true == inst.beta_true
        && again.docs.iter().zip(&inst.docs).all(|(a, b)| a.freqs() == b.freqs());
    let mut identical = same_instance;
    let mut max_diff: f64 = 0.0;
    for (v, variant) in CASE1_VARIANTS.into_iter().enumerate() {
        let base = &c.runs[0][v];
        let repeat = run_oracle_tem(inst, variant, CASE1_TEM_ITERS, None, None).unwrap();
        identical &= trace_bytes(&repeat) == trace_bytes(base);
        for threads in [1, 3] {
            let other = run_oracle_tem(inst, variant, CASE1_TEM_ITERS, None, Some(threads)).unwrap();
            if other.outcome.trace.rows.len() != base.outcome.trace.rows.len() {
                max_diff = f64::INFINITY;
                continue;
            }
            for (a, b) in other.outcome.trace.rows.iter().zip(&base.outcome.trace.rows) {
                for (x, y) in [
                    (a.c_beta, b.c_beta),
                    (a.c_gamma, b.c_gamma),
                    (a.kl_beta_max, b.kl_beta_max),
                    (a.dominant_acc, b.dominant_acc),
                    (a.estep_objective_mean, b.estep_objective_mean),
                ] {
                    let d = if x == y { 0.0 } else { (x - y).abs() };
                    max_diff = max_diff.max(d);
                }
            }
        }
    }
    report(
        11,
        "determinism",
        identical && max_diff <= 1e-12,
        &format!("byte-identical repeat traces: {identical}; max metric change across 1/3 threads = {max_diff:.1e} (<= 1e-12)"),
    );
}
