//! Error metrics, topic matching, traces and independent reference solvers.

mod hungarian;
mod oracle;
mod trace;

pub use hungarian::{match_topics, min_cost_assignment};
pub use oracle::oracle_estep;
pub use trace::{
    check_error_evolution, record_trace, ErrorTrace, EvolutionReport, EvolutionViolation, TraceRow, TraceWriter,
    TRACE_HEADER,
};

use serde::{Deserialize, Serialize};

use crate::model::{kl_divergence, l1_distance, Instance, TopicProportions, TopicWordMatrix, ZERO_TOL};

/// max over true-positive entries of max(truth/est, est/truth). Infinite when
/// the estimate is zero where the truth is positive, or exceeds `ZERO_TOL`
/// where the truth is zero.
pub fn multiplicative_error(est: &[f64], truth: &[f64]) -> f64 {
    let mut worst: f64 = 1.0;
    for (&e, &t) in est.iter().zip(truth) {
        if t > 0.0 {
            if e <= 0.0 {
                return f64::INFINITY;
            }
            worst = worst.max((t / e).max(e / t));
        } else if e > ZERO_TOL {
            return f64::INFINITY;
        }
    }
    worst
}

/// Multiplicative error of an estimated topic-word matrix. `perm[e]` is the
/// true topic matched to estimated topic `e`; `mask` limits the words.
pub fn beta_error(
    est: &TopicWordMatrix,
    truth: &TopicWordMatrix,
    perm: &[usize],
    mask: Option<&[bool]>,
) -> f64 {
    let mut worst: f64 = 1.0;
    for (e, &t) in perm.iter().enumerate() {
        let (er, tr) = (est.row(e), truth.row(t));
        let c = match mask {
            None => multiplicative_error(er, tr),
            Some(m) => {
                let (a, b): (Vec<f64>, Vec<f64>) = er
                    .iter()
                    .zip(tr)
                    .zip(m)
                    .filter(|(_, keep)| **keep)
                    .map(|((x, y), _)| (*x, *y))
                    .unzip();
                multiplicative_error(&a, &b)
            }
        };
        worst = worst.max(c);
    }
    worst
}

/// Multiplicative error over all documents' proportions.
pub fn gamma_error(est: &[TopicProportions], truth: &[TopicProportions], perm: &[usize]) -> f64 {
    let mut worst: f64 = 1.0;
    let mut e_buf = Vec::new();
    let mut t_buf = Vec::new();
    for (ge, gt) in est.iter().zip(truth) {
        e_buf.clear();
        t_buf.clear();
        for (e, &t) in perm.iter().enumerate() {
            e_buf.push(ge.get(e));
            t_buf.push(gt.get(t));
        }
        worst = worst.max(multiplicative_error(&e_buf, &t_buf));
        if worst.is_infinite() {
            break;
        }
    }
    worst
}

/// max_i KL(beta*_perm(i) || beta_i).
pub fn kl_beta_max(est: &TopicWordMatrix, truth: &TopicWordMatrix, perm: &[usize]) -> f64 {
    perm.iter()
        .enumerate()
        .map(|(e, &t)| kl_divergence(truth.row(t), est.row(e)).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max)
}

/// Fraction of documents whose estimated strict-argmax topic maps to the true
/// dominant topic.
pub fn dominant_accuracy(est: &[TopicProportions], truth: &[TopicProportions], perm: &[usize]) -> f64 {
    if est.is_empty() {
        return 1.0;
    }
    let hits = est
        .iter()
        .zip(truth)
        .filter(|(e, t)| match (e.dominant(), t.dominant()) {
            (Some(a), Some(b)) => perm[a] == b,
            _ => false,
        })
        .count();
    hits as f64 / est.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportMetrics {
    /// Per estimated topic: (precision, recall) against its matched true set.
    pub per_topic: Vec<(f64, f64)>,
    pub precision: f64,
    pub recall: f64,
    pub exact: bool,
}

/// Precision and recall of estimated word sets. `perm[e]` is the true topic
/// matched to estimated set `e`.
pub fn support_metrics(est: &[Vec<usize>], truth: &[Vec<usize>], perm: &[usize]) -> SupportMetrics {
    let mut per_topic = Vec::with_capacity(est.len());
    let (mut hit_total, mut est_total, mut true_total) = (0usize, 0usize, 0usize);
    for (e, set) in est.iter().enumerate() {
        let truth_set = &truth[perm[e]];
        let hits = set.iter().filter(|j| truth_set.binary_search(j).is_ok()).count();
        let precision = if set.is_empty() { 1.0 } else { hits as f64 / set.len() as f64 };
        let recall = if truth_set.is_empty() { 1.0 } else { hits as f64 / truth_set.len() as f64 };
        per_topic.push((precision, recall));
        hit_total += hits;
        est_total += set.len();
        true_total += truth_set.len();
    }
    let precision = if est_total == 0 { 1.0 } else { hit_total as f64 / est_total as f64 };
    let recall = if true_total == 0 { 1.0 } else { hit_total as f64 / true_total as f64 };
    SupportMetrics {
        exact: est.len() == truth.len() && per_topic.iter().all(|&(p, r)| p == 1.0 && r == 1.0),
        per_topic,
        precision,
        recall,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaBoundReport {
    /// Largest value of ||gamma - gamma*||_1 minus its bound.
    pub max_excess: f64,
    pub worst_doc: Option<usize>,
    pub checked: usize,
}

impl GammaBoundReport {
    pub fn holds(&self) -> bool {
        self.max_excess <= 0.0
    }
}

/// Slack for rounding in [`gamma_bound_check`].
pub const GAMMA_BOUND_SLACK: f64 = 1e-9;

/// Checks ||gamma - gamma*||_1 <= (1/p)(sqrt(R_beta/2) + sqrt(R_f/2)) + eps for
/// every document, with R_beta = max_i KL(beta*_i || beta_i) and R_f the
/// attained E-step objective of the document.
pub fn gamma_bound_check(
    instance: &Instance,
    beta: &TopicWordMatrix,
    gammas: &[TopicProportions],
    objectives: &[f64],
    perm: &[usize],
    anchor_mass: f64,
    epsilon: f64,
) -> GammaBoundReport {
    let r_beta = kl_beta_max(beta, &instance.beta_true, perm);
    let mut report = GammaBoundReport {
        max_excess: f64::NEG_INFINITY,
        worst_doc: None,
        checked: 0,
    };
    for (d, (g, &r_f)) in gammas.iter().zip(objectives).enumerate() {
        let truth = instance.docs[d].truth().expect("instance documents carry truth");
        let mapped: Vec<f64> = {
            let mut v = vec![0.0; g.num_topics()];
            for (e, &t) in perm.iter().enumerate() {
                v[t] = g.get(e);
            }
            v
        };
        let dist = l1_distance(&mapped, truth.weights()).unwrap_or(f64::INFINITY);
        let bound = ((r_beta / 2.0).sqrt() + (r_f.max(0.0) / 2.0).sqrt()) / anchor_mass + epsilon;
        let excess = dist - bound - GAMMA_BOUND_SLACK;
        report.checked += 1;
        if excess > report.max_excess {
            report.max_excess = excess;
            report.worst_doc = Some(d);
        }
    }
    report
}
