//! Scripted multi-seed experiments shared by the command line and the
//! acceptance tests.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    check_error_evolution, gamma_bound_check, min_cost_assignment, support_metrics, EvolutionReport,
    GammaBoundReport,
};
use crate::error::{invalid, Result};
use crate::generator::{
    add_common_words, dirichlet_property_check, gen_case1, gen_case2, DirichletCheckConfig, DirichletCheckResult,
};
use crate::inference::{run_tem, IterationView, RunConfig, RunOutcome, Truth, Variant};
use crate::init_seeded::{phase_monitor, seeded_init, select_seed_docs, PhaseReport, PhaseSettings, SeedPolicy, SEED_FLOOR};
use crate::init_support::{
    build_initial_state, default_score_floor, find_document_support, find_topic_supports, oracle_initial_state,
    SupportSettings,
};
use crate::model::{Case2Params, CommonParams, Document, GenerationParams, Instance, TopicWordMatrix};
use crate::rng;

/// Accuracy target epsilon' used by every suite.
pub const EPSILON_PRIME: f64 = 0.1;
/// Slack on the error-evolution law.
pub const EVOLUTION_TOL: f64 = 0.05;
/// The evolution law is checked once C_beta is finite and at most this.
pub const EVOLUTION_CAP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Case1Support,
    Case1Tem,
    Case2Seeded,
    CommonWords,
    DirichletChecks,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Case1Support,
        Suite::Case1Tem,
        Suite::Case2Seeded,
        Suite::CommonWords,
        Suite::DirichletChecks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Case1Support => "case1_support",
            Suite::Case1Tem => "case1_tem",
            Suite::Case2Seeded => "case2_seeded",
            Suite::CommonWords => "common_words",
            Suite::DirichletChecks => "dirichlet_checks",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| invalid(format!("unknown suite {name:?}")))
    }
}

/// `Full` matches the acceptance sizes; `Quick` shrinks corpora for smoke runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Full,
    Quick,
}

impl Scale {
    fn docs(self, full: usize) -> usize {
        match self {
            Scale::Full => full,
            Scale::Quick => (full / 10).max(500),
        }
    }
}

/// Case-1 setting for the tEM replication: K=10, N=500, T=3, rho=0.1.
pub fn case1_tem_params(seed: u64, scale: Scale) -> GenerationParams {
    GenerationParams::new(10, 500, scale.docs(20_000), 3, 0.1, seed)
}

pub const CASE1_TEM_ITERS: usize = 60;

/// Case-1 setting for support recovery: K=5, T=2, N=200. The dominant topic
/// carries at least 0.8 so that minor mass stays below 1/(2T) - r.
pub fn case1_support_params(seed: u64, scale: Scale) -> GenerationParams {
    let mut p = GenerationParams::new(5, 200, scale.docs(50_000), 2, 0.1, seed);
    p.dominant_min = Some(0.8);
    p
}

/// Case-2 setting: K=8, N=400, p=0.8, B=2, C_l=0.9, C_s=0.05. Heavy
/// documents use delta = 0.02 and cover half of each topic's documents,
/// since the computed delta is negative at these values.
pub fn case2_seeded_params(seed: u64, scale: Scale) -> GenerationParams {
    let mut p = GenerationParams::new(8, 400, scale.docs(20_000), 3, 0.1, seed);
    p.case2 = Some(Case2Params {
        anchor_mass: 0.8,
        dynamic_range: 2.0,
        c_large: 0.9,
        c_small: 0.05,
        epsilon: 0.0,
        delta: Some(0.02),
        heavy_frac: Some(0.5),
    });
    p
}

pub const CASE2_ITERS: usize = 80;
/// Seeds with dominant weight closest to C_l. Purest seeds are often pure
/// documents, which start the run at the answer.
pub const CASE2_SEED_POLICY: SeedPolicy = SeedPolicy::LeastPure;
/// Off-anchor mass must fall below this within `CASE2_PHASE1_ITERS`.
pub const CASE2_OFF_ANCHOR_TARGET: f64 = 1e-8;
pub const CASE2_PHASE1_ITERS: usize = 40;

/// Case-1 tEM setting plus 10 common words with kappa = 2.
pub fn common_words_params(seed: u64, scale: Scale) -> (GenerationParams, CommonParams) {
    (
        case1_tem_params(seed, scale),
        CommonParams {
            kappa: 2.0,
            mass_exponent: 4.0,
            heavy_exponent: 4.0,
            num_words: 10,
        },
    )
}

pub const COMMON_WORDS_ITERS: usize = 80;

/// K=50, alpha_i = 1/K^1.2, x0 = 0.1.
pub fn dirichlet_config(scale: Scale) -> DirichletCheckConfig {
    DirichletCheckConfig {
        num_topics: 50,
        exponent: 1.2,
        scales: vec![1.0; 50],
        num_samples: match scale {
            Scale::Full => 100_000,
            Scale::Quick => 10_000,
        },
        c0: 2.0,
        x0: 0.1,
        c1: 2.0,
        conditioning_size: None,
    }
}

pub const DIRICHLET_TAIL_RATIO_MAX: f64 = 3.0;

/// Sparsity violation rate allowed for K topics: 2/K^2.
pub fn dirichlet_sparsity_bound(k: usize) -> f64 {
    2.0 / (k * k) as f64
}

/// A tEM run scored against its instance.
#[derive(Debug, Clone)]
pub struct TemRun {
    pub outcome: RunOutcome,
    /// First iteration with C_beta <= 1 + epsilon'.
    pub reached_at: Option<usize>,
    pub evolution: EvolutionReport,
    /// Smallest dominant accuracy over the recorded iterations.
    pub min_dominant_acc: f64,
}

impl TemRun {
    pub fn final_c_beta(&self) -> f64 {
        self.outcome.trace.rows.last().map_or(f64::INFINITY, |r| r.c_beta)
    }

    fn score(outcome: RunOutcome) -> Self {
        let target = 1.0 + EPSILON_PRIME;
        let reached_at = outcome.trace.rows.iter().find(|r| r.c_beta <= target).map(|r| r.t);
        let evolution = check_error_evolution(&outcome.trace, 0.0, EVOLUTION_TOL, Some(EVOLUTION_CAP));
        let min_dominant_acc = outcome.trace.rows.iter().map(|r| r.dominant_acc).fold(1.0, f64::min);
        Self {
            outcome,
            reached_at,
            evolution,
            min_dominant_acc,
        }
    }
}

/// Runs `variant` from the true supports, stopping at C_beta <= 1 + epsilon'.
pub fn run_oracle_tem(
    instance: &Instance,
    variant: Variant,
    iters: usize,
    beta_mask: Option<Vec<bool>>,
    threads: Option<usize>,
) -> Result<TemRun> {
    let init = oracle_initial_state(instance)?;
    let mut config = RunConfig::new(variant, iters);
    config.target = Some(1.0 + EPSILON_PRIME);
    config.threads = threads;
    let mut truth = Truth::identity(instance);
    truth.beta_mask = beta_mask;
    let outcome = run_tem(&instance.docs, init, &config, Some(&truth), &mut ())?;
    Ok(TemRun::score(outcome))
}

/// A seeded KL-tEM run with its phase and gamma-bound diagnostics.
#[derive(Debug, Clone)]
pub struct SeededRun {
    pub run: TemRun,
    pub seeds: Vec<usize>,
    pub phase: PhaseReport,
    /// One report per recorded E-step.
    pub gamma_bounds: Vec<GammaBoundReport>,
}

impl SeededRun {
    /// First iteration at which the off-anchor mass is below the target.
    pub fn off_anchor_below_at(&self, target: f64) -> Option<usize> {
        self.phase.rows.iter().find(|r| r.off_anchor_max < target).map(|r| r.t)
    }

    pub fn gamma_bound_violations(&self) -> usize {
        self.gamma_bounds.iter().filter(|r| !r.holds()).count()
    }
}

/// Seeds beta from one document per topic with true weight >= C_l and runs
/// KL-tEM for `iters` iterations without early stopping.
pub fn run_seeded(instance: &Instance, iters: usize, policy: SeedPolicy, threads: Option<usize>) -> Result<SeededRun> {
    let c2 = instance
        .params
        .case2
        .as_ref()
        .ok_or_else(|| invalid("seeded runs need a Case-2 instance"))?;
    let seeds = select_seed_docs(instance, c2.c_large, policy)?;
    let seed_docs: Vec<&Document> = seeds.iter().map(|&d| &instance.docs[d]).collect();
    let init = seeded_init(&seed_docs, instance.docs.len(), SEED_FLOOR)?;
    let mut config = RunConfig::new(Variant::KlTem, iters);
    config.threads = threads;
    let truth = Truth::identity(instance);
    let perm = truth.permutation.clone();

    let mut history: Vec<TopicWordMatrix> = Vec::new();
    let mut bounds = Vec::new();
    let mut observer = |view: &IterationView<'_>| -> Result<()> {
        history.push(view.state.beta.clone());
        bounds.push(gamma_bound_check(
            instance,
            &view.state.beta,
            &view.state.gammas,
            view.objectives,
            &perm,
            c2.anchor_mass,
            instance.epsilon_achieved,
        ));
        Ok(())
    };
    let outcome = run_tem(&instance.docs, init, &config, Some(&truth), &mut observer)?;
    let settings = PhaseSettings {
        c_large: c2.c_large,
        epsilon: instance.epsilon_achieved,
        halving_floor: CASE2_OFF_ANCHOR_TARGET,
        ..PhaseSettings::default()
    };
    let phase = phase_monitor(&history, instance, &settings);
    Ok(SeededRun {
        run: TemRun::score(outcome),
        seeds,
        phase,
        gamma_bounds: bounds,
    })
}

/// Outcome of support recovery on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportRun {
    /// `perm[e]` is the true topic of recovered support `e`.
    pub perm: Vec<usize>,
    pub topics_exact: bool,
    pub docs_exact: bool,
    pub topic_precision: f64,
    pub topic_recall: f64,
    /// Documents whose recovered topic set differs from the truth.
    pub doc_mismatches: usize,
    pub pairs_tested: usize,
    pub pairs_yes: usize,
    /// YES answers for documents with disjoint true topic sets.
    pub false_positives: usize,
}

impl SupportRun {
    pub fn exact(&self) -> bool {
        self.topics_exact && self.docs_exact
    }
}

fn jaccard_cost(a: &[usize], b: &[usize]) -> f64 {
    let inter = a.iter().filter(|j| b.binary_search(j).is_ok()).count();
    let uni = a.len() + b.len() - inter;
    if uni == 0 {
        0.0
    } else {
        1.0 - inter as f64 / uni as f64
    }
}

/// Recovers topic and document supports from the corpus and scores them.
/// Fails when fewer than K supports survive pruning.
pub fn run_support_recovery(instance: &Instance, seed: u64) -> Result<SupportRun> {
    let k = instance.num_topics();
    let t = instance.params.max_topics_per_doc;
    let found = find_topic_supports(&instance.docs, &SupportSettings::new(k, t, seed))?;
    let truth_topics: Vec<Vec<usize>> = (0..k).map(|i| instance.beta_true.support(i)).collect();

    // More than K survivors means some are spurious. Match through a square
    // cost matrix whose extra columns are dummy topics with index >= K.
    let m = found.supports.len();
    let cost: Vec<Vec<f64>> = found
        .supports
        .iter()
        .map(|s| (0..m).map(|i| truth_topics.get(i).map_or(0.0, |u| jaccard_cost(s, u))).collect())
        .collect();
    let perm = min_cost_assignment(&cost)?;
    let matched: Vec<usize> = (0..m).filter(|&e| perm[e] < k).collect();
    let est: Vec<Vec<usize>> = matched.iter().map(|&e| found.supports[e].clone()).collect();
    let est_perm: Vec<usize> = matched.iter().map(|&e| perm[e]).collect();
    let metrics = support_metrics(&est, &truth_topics, &est_perm);
    let topics_exact = m == k && metrics.exact;

    let mut doc_mismatches = 0;
    for doc in &instance.docs {
        let est = find_document_support(doc, &found.supports, default_score_floor(doc));
        let mut mapped: Vec<usize> = est.iter().map(|&e| perm[e]).collect();
        mapped.sort_unstable();
        if mapped != doc.truth().expect("instance documents carry truth").support() {
            doc_mismatches += 1;
        }
    }

    let mut false_positives = 0;
    let mut pairs_yes = 0;
    for &(a, b, yes) in &found.pairs {
        if !yes {
            continue;
        }
        pairs_yes += 1;
        let sa = instance.docs[a].truth().expect("truth").support();
        let sb = instance.docs[b].truth().expect("truth").support();
        if !sa.iter().any(|i| sb.contains(i)) {
            false_positives += 1;
        }
    }
    Ok(SupportRun {
        perm,
        topics_exact,
        docs_exact: doc_mismatches == 0,
        topic_precision: metrics.precision,
        topic_recall: metrics.recall,
        doc_mismatches,
        pairs_tested: found.pairs.len(),
        pairs_yes,
        false_positives,
    })
}

/// Initial state from recovered supports, for running tEM without any
/// ground truth. Fails unless exactly `num_topics` supports survive.
pub fn support_initial_state(docs: &[Document], num_topics: usize, max_topics_per_doc: usize, seed: u64) -> Result<crate::inference::InferenceState> {
    let first = docs.first().ok_or_else(|| invalid("empty corpus"))?;
    let found = find_topic_supports(docs, &SupportSettings::new(num_topics, max_topics_per_doc, seed))?;
    if found.supports.len() != num_topics {
        return Err(crate::Error::Inference(format!(
            "recovered {} topic supports for {num_topics} topics",
            found.supports.len()
        )));
    }
    let doc_supports = docs
        .iter()
        .map(|d| find_document_support(d, &found.supports, default_score_floor(d)))
        .collect();
    build_initial_state(first.num_words(), &found.supports, doc_supports)
}

/// One row of a suite's aggregate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Variant name, or the suite name when there is a single run per seed.
    pub run: String,
    pub success: bool,
    pub iterations_to_target: Option<usize>,
    pub final_c_beta: f64,
}

/// Everything a suite produced, for writing per-seed reports.
#[derive(Debug, Clone)]
pub enum SuiteDetail {
    Tem(TemRun),
    Seeded(SeededRun),
    Support(Box<SupportRun>),
    Dirichlet(DirichletCheckResult),
    /// The run stopped with this error; counted as a failure.
    Failed(String),
}

pub struct SuiteEntry {
    pub result: SeedResult,
    pub detail: SuiteDetail,
}

/// The variants exercised by the Case-1 replication.
pub const CASE1_VARIANTS: [Variant; 3] = [Variant::KlTem, Variant::Iterative, Variant::Incomplete];

/// Runs one suite for each seed and returns one entry per run.
pub fn run_suite(suite: Suite, seeds: &[u64], scale: Scale, threads: Option<usize>) -> Result<Vec<SuiteEntry>> {
    let mut out = Vec::new();
    match suite {
        Suite::Case1Tem => {
            for &seed in seeds {
                let instance = gen_case1(&case1_tem_params(seed, scale))?;
                for variant in CASE1_VARIANTS {
                    let run = run_oracle_tem(&instance, variant, CASE1_TEM_ITERS, None, threads)?;
                    out.push(tem_entry(seed, variant.name(), run));
                }
            }
        }
        Suite::CommonWords => {
            for &seed in seeds {
                let (params, common) = common_words_params(seed, scale);
                let instance = add_common_words(&gen_case1(&params)?, &common)?;
                let mask = instance.non_common_mask();
                let run = run_oracle_tem(&instance, Variant::KlTem, COMMON_WORDS_ITERS, Some(mask), threads)?;
                out.push(tem_entry(seed, Variant::KlTem.name(), run));
            }
        }
        Suite::Case2Seeded => {
            for &seed in seeds {
                let instance = gen_case2(&case2_seeded_params(seed, scale))?;
                let seeded = run_seeded(&instance, CASE2_ITERS, CASE2_SEED_POLICY, threads)?;
                let phase_ok = seeded
                    .off_anchor_below_at(CASE2_OFF_ANCHOR_TARGET)
                    .is_some_and(|t| t <= CASE2_PHASE1_ITERS);
                let result = SeedResult {
                    seed,
                    run: Variant::KlTem.name().into(),
                    success: seeded.run.reached_at.is_some() && phase_ok,
                    iterations_to_target: seeded.run.reached_at,
                    final_c_beta: seeded.run.final_c_beta(),
                };
                out.push(SuiteEntry {
                    result,
                    detail: SuiteDetail::Seeded(seeded),
                });
            }
        }
        Suite::Case1Support => {
            for &seed in seeds {
                let instance = gen_case1(&case1_support_params(seed, scale))?;
                let (success, detail) = match run_support_recovery(&instance, seed) {
                    Ok(run) => (run.exact() && run.false_positives == 0, SuiteDetail::Support(Box::new(run))),
                    Err(crate::Error::Inference(m)) => (false, SuiteDetail::Failed(m)),
                    Err(e) => return Err(e),
                };
                let result = SeedResult {
                    seed,
                    run: suite.name().into(),
                    success,
                    iterations_to_target: None,
                    final_c_beta: f64::NAN,
                };
                out.push(SuiteEntry { result, detail });
            }
        }
        Suite::DirichletChecks => {
            let config = dirichlet_config(scale);
            for &seed in seeds {
                let mut r = rng::seeded(seed);
                let res = dirichlet_property_check(&config, &mut r)?;
                let success = res.sparsity_violation_rate <= dirichlet_sparsity_bound(config.num_topics)
                    && res.max_tail_prob_ratio <= DIRICHLET_TAIL_RATIO_MAX;
                out.push(SuiteEntry {
                    result: SeedResult {
                        seed,
                        run: suite.name().into(),
                        success,
                        iterations_to_target: None,
                        final_c_beta: f64::NAN,
                    },
                    detail: SuiteDetail::Dirichlet(res),
                });
            }
        }
    }
    Ok(out)
}

fn tem_entry(seed: u64, name: &str, run: TemRun) -> SuiteEntry {
    SuiteEntry {
        result: SeedResult {
            seed,
            run: name.into(),
            success: run.reached_at.is_some(),
            iterations_to_target: run.reached_at,
            final_c_beta: run.final_c_beta(),
        },
        detail: SuiteDetail::Tem(run),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()).unwrap(), s);
        }
        assert!(Suite::parse("nope").is_err());
    }

    #[test]
    fn case2_setting_satisfies_the_gap_inequality() {
        let c2 = case2_seeded_params(0, Scale::Full).case2.unwrap();
        let rhs = crate::generator::case2_gap_rhs(c2.anchor_mass, c2.dynamic_range, c2.c_large, c2.epsilon);
        assert!(c2.c_large - c2.c_small >= rhs);
    }

    #[test]
    fn jaccard_cost_examples() {
        assert_eq!(jaccard_cost(&[1, 2], &[1, 2]), 0.0);
        assert_eq!(jaccard_cost(&[1, 2], &[3]), 1.0);
        assert_eq!(jaccard_cost(&[1, 2], &[2, 3]), 1.0 - 1.0 / 3.0);
    }
}
