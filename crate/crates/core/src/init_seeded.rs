//! Initialization from nearly pure seed documents, and monitoring of how the
//! off-support entries decay afterwards.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::inference::InferenceState;
use crate::model::{anchor_sets, Document, Instance, TopicWordMatrix};

/// Which qualifying document to use as a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// Largest dominant weight, ties to the lowest index.
    #[default]
    Purest,
    /// Smallest dominant weight still at least the threshold.
    LeastPure,
}

/// Picks, for each topic, a document whose true weight on it is at least
/// `c_large`.
pub fn select_seed_docs(instance: &Instance, c_large: f64, policy: SeedPolicy) -> Result<Vec<usize>> {
    if !(c_large > 0.0 && c_large <= 1.0) {
        return Err(invalid(format!("c_large = {c_large} must lie in (0, 1]")));
    }
    let mut seeds = Vec::with_capacity(instance.num_topics());
    for i in 0..instance.num_topics() {
        let mut best: Option<(usize, f64)> = None;
        for (d, doc) in instance.docs.iter().enumerate() {
            let w = doc.truth().map_or(0.0, |t| t.get(i));
            if w < c_large {
                continue;
            }
            let better = match (best, policy) {
                (None, _) => true,
                (Some((_, b)), SeedPolicy::Purest) => w > b,
                (Some((_, b)), SeedPolicy::LeastPure) => w < b,
            };
            if better {
                best = Some((d, w));
            }
        }
        match best {
            Some((d, _)) => seeds.push(d),
            None => return Err(Error::NoSeedDocument { topic: i, threshold: c_large }),
        }
    }
    Ok(seeds)
}

/// Smallest entry of a seeded row; keeps every word reachable by every topic.
pub const SEED_FLOOR: f64 = 1e-12;

/// beta^0 row i is the word distribution of seed document i, with absent
/// words raised to `floor` and the row renormalized. Every document may use
/// every topic and no topic support is enforced.
pub fn seeded_init(seed_docs: &[&Document], num_docs: usize, floor: f64) -> Result<InferenceState> {
    let Some(first) = seed_docs.first() else {
        return Err(invalid("at least one seed document is required"));
    };
    if !(0.0..1.0).contains(&floor) {
        return Err(invalid("floor must lie in [0, 1)"));
    }
    let n = first.num_words();
    let mut rows = Vec::with_capacity(seed_docs.len());
    for doc in seed_docs {
        if doc.num_words() != n {
            return Err(invalid("seed documents have different vocabularies"));
        }
        let mut row: Vec<f64> = doc.freqs().iter().map(|&f| f.max(floor)).collect();
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
        rows.push(row);
    }
    let beta = TopicWordMatrix::from_rows(rows)?;
    let all: Vec<usize> = (0..seed_docs.len()).collect();
    Ok(InferenceState::new(beta, vec![all; num_docs], None))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSettings {
    /// Entries below this fraction of their row maximum count as zero.
    pub zero_rel: f64,
    /// Allowed per-step slack on the halving law.
    pub halving_slack: f64,
    /// The halving law is checked while the off-anchor ratio is above this.
    pub halving_floor: f64,
    /// Accuracy term in the anchor lower bound (1 - eps) C_l.
    pub epsilon: f64,
    /// Dominant-weight lower bound C_l.
    pub c_large: f64,
}

impl Default for PhaseSettings {
    fn default() -> Self {
        Self {
            zero_rel: 1e-8,
            halving_slack: 1.2,
            halving_floor: 2f64.powi(-20),
            epsilon: 0.0,
            c_large: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub t: usize,
    /// max over anchors j of topic i and topics i' != i of beta_i'j / beta*_ij.
    pub off_anchor_max: f64,
    /// min over anchors j of topic i of beta_ij / beta*_ij.
    pub anchor_ratio_min: f64,
    /// max over shared words j and topics i' with beta*_i'j = 0 of
    /// beta_i'j / max_i beta*_ij.
    pub off_support_shared_max: f64,
    /// True once every off-anchor entry is below zero_rel times its row max.
    pub anchors_identified: bool,
    /// True once every off-support entry is below zero_rel times its row max.
    pub supports_identified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub rows: Vec<PhaseRow>,
    /// First t at which all off-anchor entries count as zero.
    pub phase1_end: Option<usize>,
    /// First t at which all off-support entries count as zero.
    pub phase2_end: Option<usize>,
    /// Steps t where off_anchor_max(t+1) > halving_slack * off_anchor_max(t) / 2.
    pub halving_violations: Vec<usize>,
    /// Iterations where an anchor entry fell below (1 - eps) C_l of its truth.
    pub anchor_bound_violations: Vec<usize>,
}

/// Follows the off-anchor and off-support entries of each iterate.
pub fn phase_monitor(history: &[TopicWordMatrix], instance: &Instance, settings: &PhaseSettings) -> PhaseReport {
    let truth = &instance.beta_true;
    let k = truth.num_topics();
    let anchors = anchor_sets(truth);
    let shared: Vec<usize> = (0..truth.num_words())
        .filter(|&j| truth.topics_of_word(j).len() > 1 && !instance.common_words.contains(&j))
        .collect();
    let col_max: Vec<f64> = (0..truth.num_words())
        .map(|j| (0..k).map(|i| truth.get(i, j)).fold(0.0, f64::max))
        .collect();

    let mut rows = Vec::with_capacity(history.len());
    for (t, beta) in history.iter().enumerate() {
        let row_max: Vec<f64> = beta.rows().map(|r| r.iter().copied().fold(0.0, f64::max)).collect();
        let mut off_anchor: f64 = 0.0;
        let mut anchor_min = f64::INFINITY;
        let mut anchors_zero = true;
        for (i, set) in anchors.iter().enumerate() {
            for &j in set {
                anchor_min = anchor_min.min(beta.get(i, j) / truth.get(i, j));
                for i2 in (0..k).filter(|&i2| i2 != i) {
                    let v = beta.get(i2, j);
                    off_anchor = off_anchor.max(v / truth.get(i, j));
                    if v >= settings.zero_rel * row_max[i2] {
                        anchors_zero = false;
                    }
                }
            }
        }
        let mut off_shared: f64 = 0.0;
        let mut shared_zero = true;
        for &j in &shared {
            for i2 in (0..k).filter(|&i2| truth.get(i2, j) == 0.0) {
                let v = beta.get(i2, j);
                off_shared = off_shared.max(v / col_max[j]);
                if v >= settings.zero_rel * row_max[i2] {
                    shared_zero = false;
                }
            }
        }
        rows.push(PhaseRow {
            t,
            off_anchor_max: off_anchor,
            anchor_ratio_min: anchor_min,
            off_support_shared_max: off_shared,
            anchors_identified: anchors_zero,
            supports_identified: anchors_zero && shared_zero,
        });
    }

    let phase1_end = rows.iter().find(|r| r.anchors_identified).map(|r| r.t);
    let phase2_end = rows.iter().find(|r| r.supports_identified).map(|r| r.t);
    let mut halving_violations = Vec::new();
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.off_anchor_max > settings.halving_floor
            && b.off_anchor_max > settings.halving_slack * a.off_anchor_max / 2.0
        {
            halving_violations.push(a.t);
        }
    }
    let lower = (1.0 - settings.epsilon) * settings.c_large;
    let anchor_bound_violations = rows
        .iter()
        .filter(|r| r.anchor_ratio_min < lower)
        .map(|r| r.t)
        .collect();
    PhaseReport {
        rows,
        phase1_end,
        phase2_end,
        halving_violations,
        anchor_bound_violations,
    }
}
