//! E-steps, M-steps and the outer thresholded EM loop.

mod estep;
mod mstep;

pub use estep::{estep_kl, estep_multiplicative, EStepMode, EStepResult, EStepSettings};
pub use mstep::{mstep_thresholded, mstep_vanilla};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{record_trace, ErrorTrace, TraceRow};
use crate::error::{shape, Error, Result};
use crate::model::{Document, Instance, TopicProportions, TopicWordMatrix};
use estep::{kl_on, multiplicative_on, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Exact E-step restarted each outer iteration, thresholded M-step.
    KlTem,
    /// Multiplicative E-step to convergence, thresholded M-step.
    Iterative,
    /// One warm-started multiplicative E-step, thresholded M-step.
    Incomplete,
    /// Exact E-step, M-step over every document containing the topic.
    Vanilla,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::KlTem, Variant::Iterative, Variant::Incomplete, Variant::Vanilla];

    pub fn name(self) -> &'static str {
        match self {
            Variant::KlTem => "kl_tem",
            Variant::Iterative => "iterative",
            Variant::Incomplete => "incomplete",
            Variant::Vanilla => "vanilla",
        }
    }
}

/// Current iterate of an EM run.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceState {
    pub beta: TopicWordMatrix,
    pub gammas: Vec<TopicProportions>,
    /// Topics each document's E-step may use.
    pub doc_supports: Vec<Vec<usize>>,
    /// Word supports the topic rows are confined to, when enforced.
    pub topic_supports: Option<Vec<Vec<usize>>>,
    pub iteration: usize,
    pub variant: Option<Variant>,
}

impl InferenceState {
    /// State with proportions uniform on each document's allowed topics.
    pub fn new(
        beta: TopicWordMatrix,
        doc_supports: Vec<Vec<usize>>,
        topic_supports: Option<Vec<Vec<usize>>>,
    ) -> Self {
        let k = beta.num_topics();
        let gammas = doc_supports
            .iter()
            .map(|s| TopicProportions::uniform_on(k, s))
            .collect();
        Self {
            beta,
            gammas,
            doc_supports,
            topic_supports,
            iteration: 0,
            variant: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub variant: Variant,
    /// Number of M-steps; the trace has up to `outer_iters + 1` rows.
    pub outer_iters: usize,
    #[serde(default)]
    pub estep: EStepSettings,
    #[serde(default = "yes")]
    pub renormalize: bool,
    /// Start each exact E-step from the previous proportions instead of
    /// uniform on the allowed topics.
    #[serde(default)]
    pub warm_start: bool,
    /// Stop once C_beta falls to this value (1 + epsilon').
    #[serde(default)]
    pub target: Option<f64>,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub threads: Option<usize>,
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn new(variant: Variant, outer_iters: usize) -> Self {
        Self {
            variant,
            outer_iters,
            estep: EStepSettings::default(),
            renormalize: true,
            warm_start: false,
            target: None,
            threads: None,
        }
    }
}

/// Ground truth used to score iterates.
#[derive(Debug, Clone)]
pub struct Truth<'a> {
    pub instance: &'a Instance,
    /// `permutation[e]` is the true topic of estimated topic `e`.
    pub permutation: Vec<usize>,
    /// Words entering C_beta; all words when `None`.
    pub beta_mask: Option<Vec<bool>>,
}

impl<'a> Truth<'a> {
    pub fn identity(instance: &'a Instance) -> Self {
        Self {
            instance,
            permutation: (0..instance.num_topics()).collect(),
            beta_mask: None,
        }
    }
}

/// What an observer sees after each E-step.
pub struct IterationView<'a> {
    pub t: usize,
    pub state: &'a InferenceState,
    /// Attained E-step objective per document.
    pub objectives: &'a [f64],
    pub row: Option<&'a TraceRow>,
}

/// Receives every iterate of a run, e.g. to stream the trace to disk.
pub trait Observer {
    fn observe(&mut self, view: &IterationView<'_>) -> Result<()>;
}

impl Observer for () {
    fn observe(&mut self, _: &IterationView<'_>) -> Result<()> {
        Ok(())
    }
}

impl<F: FnMut(&IterationView<'_>) -> Result<()>> Observer for F {
    fn observe(&mut self, view: &IterationView<'_>) -> Result<()> {
        self(view)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: InferenceState,
    pub trace: ErrorTrace,
    /// First iteration whose C_beta reached the target.
    pub reached_target_at: Option<usize>,
    /// Final E-step objectives per document.
    pub objectives: Vec<f64>,
}

fn run_estep(
    docs: &[Document],
    state: &InferenceState,
    config: &RunConfig,
) -> Result<Vec<(TopicProportions, f64)>> {
    let k = state.beta.num_topics();
    docs.par_iter()
        .enumerate()
        .map(|(d, doc)| {
            let allowed = &state.doc_supports[d];
            let problem = Problem::new(doc, &state.beta, allowed)?;
            let uniform = || problem.restrict(&TopicProportions::uniform_on(k, allowed));
            let r = match config.variant {
                Variant::KlTem | Variant::Vanilla => {
                    let init = if config.warm_start && state.iteration > 0 {
                        problem.restrict(&state.gammas[d])
                    } else {
                        uniform()
                    };
                    kl_on(&problem, init, &config.estep)
                }
                Variant::Iterative => {
                    multiplicative_on(&problem, uniform(), &config.estep, EStepMode::ToConvergence)
                }
                Variant::Incomplete => {
                    let init = problem.restrict(&state.gammas[d]);
                    multiplicative_on(&problem, init, &config.estep, EStepMode::OneStep)
                }
            };
            Ok((r.gamma, r.objective))
        })
        .collect()
}

fn enforce_topic_supports(beta: &mut TopicWordMatrix, supports: &[Vec<usize>]) {
    for (i, support) in supports.iter().enumerate() {
        let n = beta.num_words();
        let mut keep = vec![false; n];
        support.iter().for_each(|&j| keep[j] = true);
        let row = beta.row_mut(i);
        for j in 0..n {
            if !keep[j] {
                row[j] = 0.0;
            }
        }
    }
}

/// Runs thresholded EM from `init`. Each outer iteration does an E-step,
/// records a trace row when `truth` is given, stops if the target is met,
/// and otherwise does an M-step.
pub fn run_tem(
    docs: &[Document],
    init: InferenceState,
    config: &RunConfig,
    truth: Option<&Truth<'_>>,
    observer: &mut (dyn Observer + Send),
) -> Result<RunOutcome> {
    if init.doc_supports.len() != docs.len() || init.gammas.len() != docs.len() {
        return Err(shape(format!(
            "state covers {} documents, corpus has {}",
            init.doc_supports.len(),
            docs.len()
        )));
    }
    if let Some(tr) = truth {
        if tr.instance.docs.len() != docs.len() || tr.permutation.len() != init.beta.num_topics() {
            return Err(shape("ground truth does not match the corpus"));
        }
    }
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Inference(format!("thread pool: {e}")))?
            .install(|| run_inner(docs, init, config, truth, observer)),
        None => run_inner(docs, init, config, truth, observer),
    }
}

fn run_inner(
    docs: &[Document],
    mut state: InferenceState,
    config: &RunConfig,
    truth: Option<&Truth<'_>>,
    observer: &mut (dyn Observer + Send),
) -> Result<RunOutcome> {
    state.variant = Some(config.variant);
    let mut trace = ErrorTrace::default();
    let mut reached = None;
    let mut objectives = Vec::new();
    let start = state.iteration;
    for t in start..=start + config.outer_iters {
        state.iteration = t;
        let results = run_estep(docs, &state, config)?;
        objectives = results.iter().map(|r| r.1).collect();
        state.gammas = results.into_iter().map(|r| r.0).collect();

        let row = truth.map(|tr| {
            record_trace(
                t,
                &state.beta,
                &state.gammas,
                &objectives,
                tr.instance,
                &tr.permutation,
                tr.beta_mask.as_deref(),
            )
        });
        observer.observe(&IterationView {
            t,
            state: &state,
            objectives: &objectives,
            row: row.as_ref(),
        })?;
        if let Some(row) = row {
            let hit = config.target.is_some_and(|target| row.c_beta <= target);
            trace.rows.push(row);
            if hit {
                reached = Some(t);
                break;
            }
        }
        if t == start + config.outer_iters {
            break;
        }
        let mut next = match config.variant {
            Variant::Vanilla => mstep_vanilla(docs, &state.gammas, &state.beta, config.renormalize)?,
            _ => mstep_thresholded(docs, &state.gammas, &state.beta, config.renormalize)?,
        };
        if let Some(supports) = &state.topic_supports {
            enforce_topic_supports(&mut next, supports);
        }
        state.beta = next;
    }
    Ok(RunOutcome {
        state,
        trace,
        reached_target_at: reached,
        objectives,
    })
}
