//! Core data types: topic-word matrices, topic proportions, documents,
//! generation parameters and the basic divergences used everywhere else.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};

/// Tolerance for a vector to count as a probability distribution.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Values at or below this are treated as zero in comparisons.
pub const ZERO_TOL: f64 = 1e-12;

/// K x N row-stochastic matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicWordMatrix {
    num_topics: usize,
    num_words: usize,
    data: Vec<f64>,
}

impl TopicWordMatrix {
    /// Builds a matrix from rows and checks that every row is a distribution.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = Self::from_rows_unchecked(rows)?;
        m.validate_stochastic()?;
        Ok(m)
    }

    /// Builds a matrix from rows, checking shape and non-negativity only.
    /// Used for iterates whose rows need not sum to one.
    pub fn from_rows_unchecked(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_topics = rows.len();
        if num_topics == 0 {
            return Err(shape("topic-word matrix needs at least one topic"));
        }
        let num_words = rows[0].len();
        if num_words == 0 {
            return Err(shape("topic-word matrix needs at least one word"));
        }
        let mut data = Vec::with_capacity(num_topics * num_words);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != num_words {
                return Err(shape(format!(
                    "row {i} has {} entries, expected {num_words}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        Self::from_flat(num_topics, num_words, data)
    }

    /// Builds a matrix from a row-major buffer, checking shape and signs.
    pub fn from_flat(num_topics: usize, num_words: usize, data: Vec<f64>) -> Result<Self> {
        if num_topics == 0 || num_words == 0 || data.len() != num_topics * num_words {
            return Err(shape(format!(
                "buffer of length {} does not match {num_topics} x {num_words}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid(format!(
                "entry ({}, {}) = {} is negative or not finite",
                pos / num_words,
                pos % num_words,
                data[pos]
            )));
        }
        Ok(Self {
            num_topics,
            num_words,
            data,
        })
    }

    pub fn zeros(num_topics: usize, num_words: usize) -> Self {
        Self {
            num_topics,
            num_words,
            data: vec![0.0; num_topics * num_words],
        }
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    pub fn num_words(&self) -> usize {
        self.num_words
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.num_words..(i + 1) * self.num_words]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.num_words..(i + 1) * self.num_words]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.num_words + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.num_words)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_vec()).collect()
    }

    /// Checks that every row sums to one within [`SIMPLEX_TOL`].
    pub fn validate_stochastic(&self) -> Result<()> {
        for (row, values) in self.rows().enumerate() {
            let sum: f64 = values.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::NotStochastic { row, sum });
            }
        }
        Ok(())
    }

    /// Rescales each nonzero row to sum to one.
    pub fn normalize_rows(&mut self) {
        for i in 0..self.num_topics {
            let row = self.row_mut(i);
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.iter_mut().for_each(|v| *v /= sum);
            }
        }
    }

    /// Words with a nonzero entry in row `i`.
    pub fn support(&self, i: usize) -> Vec<usize> {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    /// Topics with a nonzero entry in column `j`.
    pub fn topics_of_word(&self, j: usize) -> Vec<usize> {
        (0..self.num_topics).filter(|&i| self.get(i, j) > 0.0).collect()
    }

    /// Smallest strictly positive entry.
    pub fn min_nonzero(&self) -> f64 {
        self.data
            .iter()
            .copied()
            .filter(|v| *v > 0.0)
            .fold(f64::INFINITY, f64::min)
    }
}

/// A point on the probability simplex over K topics.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicProportions {
    weights: Vec<f64>,
}

impl TopicProportions {
    /// Validated constructor: non-negative entries summing to one.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let p = Self::unchecked(weights)?;
        let sum: f64 = p.weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(invalid(format!("proportions sum to {sum}, expected 1")));
        }
        Ok(p)
    }

    /// Checks signs only.
    pub fn unchecked(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(shape("proportions need at least one topic"));
        }
        if let Some(v) = weights.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(invalid(format!("proportion {v} is negative or not finite")));
        }
        Ok(Self { weights })
    }

    pub(crate) fn from_vec(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    pub fn pure(num_topics: usize, topic: usize) -> Self {
        let mut weights = vec![0.0; num_topics];
        weights[topic] = 1.0;
        Self { weights }
    }

    /// Uniform over `support`; all topics when `support` is empty.
    pub fn uniform_on(num_topics: usize, support: &[usize]) -> Self {
        let mut weights = vec![0.0; num_topics];
        if support.is_empty() {
            weights.iter_mut().for_each(|w| *w = 1.0 / num_topics as f64);
        } else {
            let w = 1.0 / support.len() as f64;
            for &i in support {
                weights[i] = w;
            }
        }
        Self { weights }
    }

    pub fn num_topics(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.len())
            .filter(|&i| self.weights[i] > 0.0)
            .collect()
    }

    /// Index of the strictly largest weight, `None` on a tie.
    pub fn dominant(&self) -> Option<usize> {
        let mut best = 0;
        let mut tied = false;
        for i in 1..self.weights.len() {
            if self.weights[i] > self.weights[best] {
                best = i;
                tied = false;
            } else if self.weights[i] == self.weights[best] {
                tied = true;
            }
        }
        (!tied).then_some(best)
    }
}

/// How many words a document has.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordCount {
    /// Frequencies equal the expected frequencies.
    Exact,
    /// Frequencies are empirical counts over this many draws.
    Sampled(u64),
}

/// Empirical word frequencies of one document, optionally with the
/// proportions that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    freqs: Vec<f64>,
    nonzero: Vec<usize>,
    n_words: WordCount,
    truth: Option<TopicProportions>,
}

impl Document {
    pub fn new(freqs: Vec<f64>, n_words: WordCount, truth: Option<TopicProportions>) -> Result<Self> {
        if freqs.is_empty() {
            return Err(shape("document needs at least one word slot"));
        }
        if let Some(v) = freqs.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(invalid(format!("frequency {v} is negative or not finite")));
        }
        let sum: f64 = freqs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(invalid(format!("frequencies sum to {sum}, expected 1")));
        }
        let nonzero = (0..freqs.len()).filter(|&j| freqs[j] > 0.0).collect();
        Ok(Self {
            freqs,
            nonzero,
            n_words,
            truth,
        })
    }

    /// Builds a document from `(word, frequency)` pairs.
    pub fn from_sparse(
        num_words: usize,
        pairs: &[(usize, f64)],
        n_words: WordCount,
        truth: Option<TopicProportions>,
    ) -> Result<Self> {
        let mut freqs = vec![0.0; num_words];
        for &(j, f) in pairs {
            if j >= num_words {
                return Err(shape(format!("word index {j} out of range {num_words}")));
            }
            freqs[j] += f;
        }
        Self::new(freqs, n_words, truth)
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    /// Indices of words with positive frequency, ascending.
    pub fn nonzero(&self) -> &[usize] {
        &self.nonzero
    }

    pub fn n_words(&self) -> WordCount {
        self.n_words
    }

    pub fn truth(&self) -> Option<&TopicProportions> {
        self.truth.as_ref()
    }

    pub fn num_words(&self) -> usize {
        self.freqs.len()
    }

    /// Sparse `(word, frequency)` view.
    pub fn sparse(&self) -> Vec<(usize, f64)> {
        self.nonzero.iter().map(|&j| (j, self.freqs[j])).collect()
    }
}

/// Document generation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "words")]
pub enum DocMode {
    /// Frequencies equal their expectation.
    #[default]
    Exact,
    /// Multinomial sample with this many words per document.
    Multinomial(u64),
}

/// Extra parameters for the anchor-word setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case2Params {
    /// Minimum anchor mass per topic (p).
    pub anchor_mass: f64,
    /// Maximum ratio between nonzero entries of a shared word (B).
    pub dynamic_range: f64,
    /// Lower bound on the dominant proportion (C_l).
    pub c_large: f64,
    /// Upper bound on every other proportion (C_s).
    pub c_small: f64,
    /// Accuracy term entering the gap and delta formulas.
    #[serde(default)]
    pub epsilon: f64,
    /// Override for delta; computed from the other values when absent.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Fraction of dominated documents per topic with weight >= 1 - delta.
    /// Defaults to min(1, 8 / dynamic_range).
    #[serde(default)]
    pub heavy_frac: Option<f64>,
}

/// Parameters for common words shared by every topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonParams {
    pub kappa: f64,
    #[serde(default = "default_common_exponent")]
    pub mass_exponent: f64,
    #[serde(default = "default_common_exponent")]
    pub heavy_exponent: f64,
    pub num_words: usize,
}

fn default_common_exponent() -> f64 {
    4.0
}

/// Finite stand-ins for the asymptotic clauses of the assumptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyThresholds {
    /// Dominant-topic frequencies must lie in [1/(fK), f/K].
    pub equidistribution_factor: f64,
    /// Conditional inclusion probabilities must lie in [1/(fK), f/K].
    pub inclusion_factor: f64,
    /// Allowed relative change of the conditional dominant mean.
    pub correlation_tol: f64,
    /// Conditioning events with fewer documents are skipped.
    pub min_condition_count: usize,
}

impl Default for VerifyThresholds {
    fn default() -> Self {
        Self {
            equidistribution_factor: 2.0,
            inclusion_factor: 4.0,
            correlation_tol: 0.2,
            min_condition_count: 50,
        }
    }
}

/// Parameters driving instance generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub num_topics: usize,
    pub num_words: usize,
    pub num_docs: usize,
    /// Maximum number of topics per document (T).
    pub max_topics_per_doc: usize,
    /// Required gap between the dominant and every other proportion.
    pub rho: f64,
    /// Maximum shared-word mass between two topics (r).
    #[serde(default = "default_overlap")]
    pub overlap_mass: f64,
    /// Maximum number of topics a shared word belongs to; defaults to ceil(sqrt(K)).
    #[serde(default)]
    pub topics_per_word_max: Option<usize>,
    /// Fraction of the vocabulary made of shared (non-anchor) words.
    #[serde(default = "default_shared_frac")]
    pub shared_word_frac: f64,
    /// Probability that a non-dominant topic is included; defaults to 1/K.
    #[serde(default)]
    pub inclusion_prob: Option<f64>,
    /// Optional lower bound on the dominant proportion.
    #[serde(default)]
    pub dominant_min: Option<f64>,
    /// Smallest allowed nonzero entry; defaults to 1/N^2.
    #[serde(default)]
    pub min_entry: Option<f64>,
    #[serde(default)]
    pub doc_mode: DocMode,
    #[serde(default)]
    pub case2: Option<Case2Params>,
    #[serde(default)]
    pub common: Option<CommonParams>,
    #[serde(default)]
    pub thresholds: VerifyThresholds,
    #[serde(default)]
    pub seed: u64,
}

fn default_overlap() -> f64 {
    0.05
}

fn default_shared_frac() -> f64 {
    0.2
}

impl GenerationParams {
    /// Parameters with defaults for everything but the core sizes.
    pub fn new(
        num_topics: usize,
        num_words: usize,
        num_docs: usize,
        max_topics_per_doc: usize,
        rho: f64,
        seed: u64,
    ) -> Self {
        Self {
            num_topics,
            num_words,
            num_docs,
            max_topics_per_doc,
            rho,
            overlap_mass: default_overlap(),
            topics_per_word_max: None,
            shared_word_frac: default_shared_frac(),
            inclusion_prob: None,
            dominant_min: None,
            min_entry: None,
            doc_mode: DocMode::Exact,
            case2: None,
            common: None,
            thresholds: VerifyThresholds::default(),
            seed,
        }
    }

    pub fn topics_per_word_max(&self) -> usize {
        self.topics_per_word_max
            .unwrap_or_else(|| (self.num_topics as f64).sqrt().ceil() as usize)
            .max(1)
    }

    pub fn inclusion_prob(&self) -> f64 {
        self.inclusion_prob
            .unwrap_or(1.0 / self.num_topics.max(1) as f64)
    }

    pub fn min_entry(&self) -> f64 {
        self.min_entry
            .unwrap_or(1.0 / (self.num_words as f64 * self.num_words as f64))
    }

    /// Checks basic ranges shared by every generator.
    pub fn validate(&self) -> Result<()> {
        if self.num_topics == 0 || self.num_words == 0 || self.num_docs == 0 {
            return Err(invalid("num_topics, num_words and num_docs must be positive"));
        }
        if self.max_topics_per_doc == 0 {
            return Err(invalid("max_topics_per_doc must be positive"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(invalid(format!("rho = {} must lie in (0, 1)", self.rho)));
        }
        if !(self.overlap_mass >= 0.0 && self.overlap_mass < 1.0) {
            return Err(invalid(format!(
                "overlap_mass = {} must lie in [0, 1)",
                self.overlap_mass
            )));
        }
        if !(0.0..1.0).contains(&self.shared_word_frac) {
            return Err(invalid("shared_word_frac must lie in [0, 1)"));
        }
        let q = self.inclusion_prob();
        if !(0.0..=1.0).contains(&q) {
            return Err(invalid(format!("inclusion_prob = {q} must lie in [0, 1]")));
        }
        if let Some(w) = self.dominant_min {
            if !(0.0..=1.0).contains(&w) {
                return Err(invalid(format!("dominant_min = {w} must lie in [0, 1]")));
            }
        }
        let m = self.min_entry();
        if !(m > 0.0 && m < 1.0) {
            return Err(invalid(format!("min_entry = {m} must lie in (0, 1)")));
        }
        if let DocMode::Multinomial(0) = self.doc_mode {
            return Err(invalid("multinomial documents need at least one word"));
        }
        Ok(())
    }
}

/// A generated instance with its ground truth.
#[derive(Debug, Clone)]
pub struct Instance {
    pub beta_true: TopicWordMatrix,
    pub docs: Vec<Document>,
    pub params: GenerationParams,
    /// max over documents and words with positive expected frequency of |f~/f* - 1|.
    pub epsilon_achieved: f64,
    /// Words present in every topic, excluded from shared-word assumptions.
    pub common_words: Vec<usize>,
}

impl Instance {
    /// Assembles an instance and checks that every document carries truth
    /// of the right shape.
    pub fn new(
        beta_true: TopicWordMatrix,
        docs: Vec<Document>,
        params: GenerationParams,
        common_words: Vec<usize>,
    ) -> Result<Self> {
        beta_true.validate_stochastic()?;
        for (d, doc) in docs.iter().enumerate() {
            if doc.num_words() != beta_true.num_words() {
                return Err(shape(format!("document {d} has the wrong vocabulary size")));
            }
            match doc.truth() {
                Some(t) if t.num_topics() == beta_true.num_topics() => {}
                _ => return Err(invalid(format!("document {d} lacks ground-truth proportions"))),
            }
        }
        let epsilon_achieved = achieved_epsilon(&beta_true, &docs)?;
        Ok(Self {
            beta_true,
            docs,
            params,
            epsilon_achieved,
            common_words,
        })
    }

    pub fn num_topics(&self) -> usize {
        self.beta_true.num_topics()
    }

    pub fn num_words(&self) -> usize {
        self.beta_true.num_words()
    }

    /// Ground-truth proportions of every document.
    pub fn gammas_true(&self) -> Vec<TopicProportions> {
        self.docs
            .iter()
            .map(|d| d.truth().cloned().expect("instance documents carry truth"))
            .collect()
    }

    /// Per-topic lists of documents whose true dominant topic is that topic.
    pub fn dominated_docs(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_topics()];
        for (d, doc) in self.docs.iter().enumerate() {
            if let Some(i) = doc.truth().and_then(|t| t.dominant()) {
                out[i].push(d);
            }
        }
        out
    }

    /// True for words that are not common words.
    pub fn non_common_mask(&self) -> Vec<bool> {
        let mut mask = vec![true; self.num_words()];
        for &j in &self.common_words {
            mask[j] = false;
        }
        mask
    }
}

fn achieved_epsilon(beta: &TopicWordMatrix, docs: &[Document]) -> Result<f64> {
    let mut eps: f64 = 0.0;
    for doc in docs {
        let Some(truth) = doc.truth() else { continue };
        let expected = predicted_freqs(truth, beta)?;
        for (j, &fs) in expected.iter().enumerate() {
            if fs > 0.0 {
                eps = eps.max((doc.freqs()[j] / fs - 1.0).abs());
            }
        }
    }
    Ok(eps)
}

/// Expected word frequencies f_j = sum_i gamma_i beta_ij.
pub fn predicted_freqs(gamma: &TopicProportions, beta: &TopicWordMatrix) -> Result<Vec<f64>> {
    if gamma.num_topics() != beta.num_topics() {
        return Err(shape(format!(
            "proportions over {} topics, matrix has {}",
            gamma.num_topics(),
            beta.num_topics()
        )));
    }
    let mut f = vec![0.0; beta.num_words()];
    for (i, &g) in gamma.weights().iter().enumerate() {
        if g > 0.0 {
            for (fj, &b) in f.iter_mut().zip(beta.row(i)) {
                *fj += g * b;
            }
        }
    }
    Ok(f)
}

/// KL(p || q) with natural log. Returns `f64::INFINITY` when `p` puts mass
/// where `q` has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(shape(format!("lengths {} and {} differ", p.len(), q.len())));
    }
    let mut kl = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return Ok(f64::INFINITY);
            }
            kl += a * (a / b).ln();
        }
    }
    // Rounding can push the sum a hair below zero for identical inputs.
    Ok(kl.max(0.0))
}

pub fn l1_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(shape(format!("lengths {} and {} differ", p.len(), q.len())));
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

/// Words with exactly one nonzero topic, grouped by that topic.
pub fn anchor_sets(beta: &TopicWordMatrix) -> Vec<Vec<usize>> {
    let mut sets = vec![Vec::new(); beta.num_topics()];
    for j in 0..beta.num_words() {
        let topics = beta.topics_of_word(j);
        if topics.len() == 1 {
            sets[topics[0]].push(j);
        }
    }
    sets
}

/// Lower bound on ||gamma beta||_1 / ||gamma||_1 over all gamma, namely
/// min_i of the anchor mass of topic i.
pub fn anchor_expansion_lower_bound(beta: &TopicWordMatrix, anchors: &[Vec<usize>]) -> Result<f64> {
    if anchors.len() != beta.num_topics() {
        return Err(shape(format!(
            "{} anchor sets for {} topics",
            anchors.len(),
            beta.num_topics()
        )));
    }
    let mut owner = vec![usize::MAX; beta.num_words()];
    let mut bound = f64::INFINITY;
    for (i, set) in anchors.iter().enumerate() {
        let mut mass = 0.0;
        for &j in set {
            if j >= beta.num_words() {
                return Err(shape(format!("anchor word {j} out of range")));
            }
            if owner[j] != usize::MAX {
                return Err(invalid(format!("word {j} is listed as an anchor of two topics")));
            }
            owner[j] = i;
            if let Some(other) = (0..beta.num_topics()).find(|&k| k != i && beta.get(k, j) > 0.0) {
                return Err(invalid(format!(
                    "word {j} is not an anchor of topic {i}: topic {other} also uses it"
                )));
            }
            mass += beta.get(i, j);
        }
        bound = bound.min(mass);
    }
    Ok(bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn beta2() -> TopicWordMatrix {
        TopicWordMatrix::from_rows(vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5]]).unwrap()
    }

    #[test]
    fn predicted_freqs_mixes_rows() {
        let g = TopicProportions::new(vec![0.5, 0.5]).unwrap();
        let f = predicted_freqs(&g, &beta2()).unwrap();
        assert_eq!(f, vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn predicted_freqs_rejects_wrong_length() {
        let g = TopicProportions::new(vec![1.0]).unwrap();
        assert!(matches!(predicted_freqs(&g, &beta2()), Err(Error::Shape(_))));
    }

    #[test]
    fn kl_known_values() {
        let kl = kl_divergence(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
        assert_abs_diff_eq!(kl, 0.143841036225890, epsilon = 1e-12);
        assert_eq!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), f64::INFINITY);
        assert_eq!(kl_divergence(&[0.0, 1.0], &[0.5, 0.5]).unwrap(), 2f64.ln());
    }

    #[test]
    fn kl_length_mismatch() {
        assert!(kl_divergence(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn rejects_bad_rows() {
        let err = TopicWordMatrix::from_rows(vec![vec![0.5, 0.4]]).unwrap_err();
        assert!(matches!(err, Error::NotStochastic { row: 0, .. }));
        assert!(TopicWordMatrix::from_rows(vec![vec![1.5, -0.5]]).is_err());
        assert!(TopicWordMatrix::from_rows(vec![vec![1.0], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn dominant_ties_are_none() {
        let g = TopicProportions::new(vec![0.4, 0.4, 0.2]).unwrap();
        assert_eq!(g.dominant(), None);
        let g = TopicProportions::new(vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(g.dominant(), Some(1));
    }

    #[test]
    fn anchor_bound_on_identity_like_matrix() {
        let b = TopicWordMatrix::from_rows(vec![
            vec![0.6, 0.0, 0.4],
            vec![0.0, 0.7, 0.3],
        ])
        .unwrap();
        let sets = anchor_sets(&b);
        assert_eq!(sets, vec![vec![0], vec![1]]);
        assert_abs_diff_eq!(anchor_expansion_lower_bound(&b, &sets).unwrap(), 0.6);
        assert!(anchor_expansion_lower_bound(&b, &[vec![2], vec![1]]).is_err());
    }

    #[test]
    fn document_sparse_roundtrip() {
        let d = Document::from_sparse(4, &[(1, 0.25), (3, 0.75)], WordCount::Exact, None).unwrap();
        assert_eq!(d.nonzero(), &[1, 3]);
        assert_eq!(d.sparse(), vec![(1, 0.25), (3, 0.75)]);
        assert!(Document::from_sparse(4, &[(5, 1.0)], WordCount::Exact, None).is_err());
    }
}
