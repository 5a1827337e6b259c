//! Synthetic instances satisfying the structural assumptions, plus
//! checkers for those assumptions.

mod case1;
mod case2;
mod common;
mod dirichlet;
mod verify;

pub use case1::gen_case1;
pub use case2::{case2_delta, case2_gap_rhs, gen_case2};
pub use common::add_common_words;
pub use dirichlet::{dirichlet_property_check, sample_dirichlet, DirichletCheckConfig, DirichletCheckResult};
pub use verify::{verify_assumptions, AssumptionCase, AssumptionCheck, AssumptionReport};

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Binomial, Distribution, Exp1};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{
    predicted_freqs, DocMode, Document, TopicProportions, TopicWordMatrix, WordCount,
};
use crate::rng::{self, Rng};

const MAX_REJECTIONS: usize = 100_000;

/// Draws one document's frequencies for proportions `gamma`.
pub fn sample_document(
    gamma: &TopicProportions,
    beta: &TopicWordMatrix,
    mode: DocMode,
    rng: &mut Rng,
) -> Result<Document> {
    let expected = predicted_freqs(gamma, beta)?;
    match mode {
        DocMode::Exact => Document::new(expected, WordCount::Exact, Some(gamma.clone())),
        DocMode::Multinomial(n) => {
            if n == 0 {
                return Err(invalid("multinomial documents need at least one word"));
            }
            let mut freqs = vec![0.0; expected.len()];
            let mut remaining = n;
            let mut mass_left = 1.0;
            for (j, &p) in expected.iter().enumerate() {
                if remaining == 0 {
                    break;
                }
                if p <= 0.0 {
                    continue;
                }
                let prob = (p / mass_left).clamp(0.0, 1.0);
                let count = if prob >= 1.0 {
                    remaining
                } else {
                    Binomial::new(remaining, prob)
                        .map_err(|e| invalid(format!("binomial draw: {e}")))?
                        .sample(rng)
                };
                freqs[j] = count as f64 / n as f64;
                remaining -= count;
                mass_left -= p;
            }
            if remaining > 0 {
                // Rounding left a few draws over; give them to the last word.
                let j = expected.iter().rposition(|&p| p > 0.0).unwrap_or(0);
                freqs[j] += remaining as f64 / n as f64;
            }
            Document::new(freqs, WordCount::Sampled(n), Some(gamma.clone()))
        }
    }
}

/// Builds a topic-word matrix with exclusive anchor blocks plus shared words
/// whose total mass per topic is at most `shared_mass_max` and whose nonzero
/// entries differ by at most `ratio_max` across topics.
#[allow(clippy::too_many_arguments)]
pub(crate) fn build_beta(
    num_topics: usize,
    num_words: usize,
    shared_word_frac: f64,
    topics_per_word_max: usize,
    shared_mass_max: f64,
    ratio_max: f64,
    min_entry: f64,
    rng: &mut Rng,
) -> Result<TopicWordMatrix> {
    let k = num_topics;
    let n_shared = if k >= 2 && topics_per_word_max >= 2 && shared_mass_max > 0.0 {
        (shared_word_frac * num_words as f64).round() as usize
    } else {
        0
    };
    let n_anchor = num_words - n_shared;
    if n_anchor < k {
        return Err(Error::Unsatisfiable(format!(
            "{n_anchor} anchor words cannot cover {k} topics"
        )));
    }
    let mut words: Vec<usize> = (0..num_words).collect();
    words.shuffle(rng);
    let (anchor_words, shared_words) = words.split_at(n_anchor);

    let mut anchors = vec![Vec::new(); k];
    for (idx, &j) in anchor_words.iter().enumerate() {
        anchors[idx % k].push(j);
    }
    for set in &mut anchors {
        set.sort_unstable();
    }

    let mut raw = vec![vec![0.0; num_words]; k];
    let max_size = topics_per_word_max.min(k);
    for &j in shared_words {
        let size = rng.random_range(2..=max_size);
        let base: f64 = rng.random_range(1.0..3.0);
        for i in index::sample(rng, k, size) {
            let mult = if ratio_max > 1.0 {
                rng.random_range(1.0..ratio_max)
            } else {
                1.0
            };
            raw[i][j] = base * mult;
        }
    }
    let shared_sums: Vec<f64> = raw.iter().map(|r| r.iter().sum()).collect();
    let max_shared = shared_sums.iter().copied().fold(0.0, f64::max);
    let scale = if max_shared > 0.0 {
        shared_mass_max / max_shared
    } else {
        0.0
    };

    let mut rows = Vec::with_capacity(k);
    for i in 0..k {
        let mut row: Vec<f64> = raw[i].iter().map(|v| v * scale).collect();
        let anchor_mass = 1.0 - shared_sums[i] * scale;
        let weights: Vec<f64> = anchors[i]
            .iter()
            .map(|_| rng.random_range(1.0..3.0))
            .collect();
        let total: f64 = weights.iter().sum();
        for (&j, w) in anchors[i].iter().zip(&weights) {
            row[j] = anchor_mass * w / total;
        }
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
        rows.push(row);
    }
    let beta = TopicWordMatrix::from_rows(rows)?;
    let smallest = beta.min_nonzero();
    if smallest < min_entry {
        return Err(Error::Unsatisfiable(format!(
            "smallest topic-word entry {smallest:e} is below min_entry {min_entry:e}"
        )));
    }
    Ok(beta)
}

/// Picks the dominant topic and the set of included minor topics.
pub(crate) fn draw_topic_set(
    num_topics: usize,
    max_extra: usize,
    inclusion_prob: f64,
    rng: &mut Rng,
) -> (usize, Vec<usize>) {
    let dominant = rng.random_range(0..num_topics);
    let mut others: Vec<usize> = (0..num_topics).filter(|&i| i != dominant).collect();
    others.shuffle(rng);
    let mut extras = Vec::new();
    for i in others {
        if extras.len() >= max_extra {
            break;
        }
        if rng.random::<f64>() < inclusion_prob {
            extras.push(i);
        }
    }
    extras.sort_unstable();
    (dominant, extras)
}

/// Constraints on one document's proportions.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PropConstraints {
    /// Dominant weight lower bound.
    pub dominant_lo: f64,
    /// Gap required between dominant and every minor (strict).
    pub gap: f64,
    /// Upper bound on each minor.
    pub minor_max: f64,
    /// Lower bound on each minor.
    pub minor_min: f64,
}

/// Rejection-samples proportions with the given dominant topic and minors.
pub(crate) fn draw_proportions(
    num_topics: usize,
    dominant: usize,
    extras: &[usize],
    c: PropConstraints,
    rng: &mut Rng,
) -> Result<TopicProportions> {
    let m = extras.len();
    if m == 0 {
        return Ok(TopicProportions::pure(num_topics, dominant));
    }
    let mf = m as f64;
    let lo = c
        .dominant_lo
        .max((c.gap * mf + 1.0) / (mf + 1.0))
        .max(1.0 - mf * c.minor_max);
    let hi = 1.0 - mf * c.minor_min;
    if lo >= hi {
        return Err(Error::Unsatisfiable(format!(
            "no dominant weight satisfies the constraints with {m} minor topics"
        )));
    }
    for _ in 0..MAX_REJECTIONS {
        let w = rng.random_range(lo..hi);
        let draws: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        let minors: Vec<f64> = draws.iter().map(|e| (1.0 - w) * e / total).collect();
        let max_minor = minors.iter().copied().fold(0.0, f64::max);
        let min_minor = minors.iter().copied().fold(f64::INFINITY, f64::min);
        if w - max_minor > c.gap && max_minor <= c.minor_max && min_minor >= c.minor_min {
            let mut weights = vec![0.0; num_topics];
            weights[dominant] = w;
            for (&i, &v) in extras.iter().zip(&minors) {
                weights[i] = v;
            }
            return Ok(TopicProportions::from_vec(weights));
        }
    }
    Err(Error::Unsatisfiable(format!(
        "rejection sampling failed for a document with {m} minor topics"
    )))
}

/// Samples all documents in parallel with per-document streams.
pub(crate) fn sample_documents(
    gammas: &[TopicProportions],
    beta: &TopicWordMatrix,
    mode: DocMode,
    seed: u64,
    tag: u64,
) -> Result<Vec<Document>> {
    gammas
        .par_iter()
        .enumerate()
        .map(|(d, g)| {
            let mut r = rng::substream(seed, tag, d as u64);
            sample_document(g, beta, mode, &mut r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_document_equals_expectation() {
        let beta = TopicWordMatrix::from_rows(vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5]]).unwrap();
        let g = TopicProportions::new(vec![0.5, 0.5]).unwrap();
        let doc = sample_document(&g, &beta, DocMode::Exact, &mut rng::seeded(0)).unwrap();
        assert_eq!(doc.freqs(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn multinomial_document_counts() {
        let beta = TopicWordMatrix::from_rows(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        let g = TopicProportions::pure(1, 0);
        let doc =
            sample_document(&g, &beta, DocMode::Multinomial(1_000_000), &mut rng::seeded(3)).unwrap();
        assert_eq!(doc.n_words(), WordCount::Sampled(1_000_000));
        for (a, b) in doc.freqs().iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 0.005, "{a} vs {b}");
            // Frequencies are multiples of 1/n.
            assert!((a * 1e6 - (a * 1e6).round()).abs() < 1e-6);
        }
    }

    #[test]
    fn build_beta_respects_overlap_and_ratio() {
        let mut r = rng::seeded(11);
        let beta = build_beta(6, 120, 0.25, 3, 0.05, 2.0, 1e-6, &mut r).unwrap();
        let anchors = crate::model::anchor_sets(&beta);
        assert_eq!(anchors.iter().map(Vec::len).sum::<usize>(), 90);
        for i in 0..6 {
            let shared: f64 = (0..120)
                .filter(|&j| beta.topics_of_word(j).len() > 1)
                .map(|j| beta.get(i, j))
                .sum();
            assert!(shared <= 0.05 + 1e-12);
        }
        for j in 0..120 {
            let vals: Vec<f64> = beta.topics_of_word(j).iter().map(|&i| beta.get(i, j)).collect();
            if vals.len() > 1 {
                let hi = vals.iter().copied().fold(0.0, f64::max);
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                assert!(hi / lo <= 2.0 + 1e-9);
                assert!(vals.len() <= 3);
            }
        }
    }

    #[test]
    fn proportions_meet_constraints() {
        let mut r = rng::seeded(5);
        let c = PropConstraints {
            dominant_lo: 0.0,
            gap: 0.1,
            minor_max: 1.0,
            minor_min: 1e-4,
        };
        for _ in 0..200 {
            let g = draw_proportions(5, 2, &[0, 4], c, &mut r).unwrap();
            let w = g.weights();
            assert!(w[2] - w[0] > 0.1 && w[2] - w[4] > 0.1);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(w[1], 0.0);
        }
    }
}
