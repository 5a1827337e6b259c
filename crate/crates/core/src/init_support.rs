//! Recovers topic and document supports from the corpus alone and builds an
//! initial state confined to them.

use std::collections::BTreeMap;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::inference::InferenceState;
use crate::model::{Document, Instance, TopicWordMatrix, WordCount};
use crate::rng::{self, TAG_PAIRS};

/// Returns true when sum_j min(f_dj, f_d'j) >= 1/(2T).
pub fn pair_test(d: &Document, d2: &Document, t: usize) -> bool {
    overlap(d, d2) >= 1.0 / (2.0 * t as f64)
}

fn overlap(d: &Document, d2: &Document) -> f64 {
    let (a, b) = if d.nonzero().len() <= d2.nonzero().len() { (d, d2) } else { (d2, d) };
    a.nonzero()
        .iter()
        .map(|&j| a.freqs()[j].min(b.freqs()[j]))
        .sum()
}

/// Intersects the joint support of documents `a` and `b` with the support of
/// every other document that passes the pair test with both.
pub fn weedout(a: usize, b: usize, docs: &[Document], t: usize) -> Vec<usize> {
    let (da, db) = (&docs[a], &docs[b]);
    let mut s: Vec<usize> = da
        .nonzero()
        .iter()
        .copied()
        .filter(|&j| db.freqs()[j] > 0.0)
        .collect();
    for (c, dc) in docs.iter().enumerate() {
        if c == a || c == b || s.is_empty() {
            continue;
        }
        if pair_test(da, dc, t) && pair_test(db, dc, t) {
            s.retain(|&j| dc.freqs()[j] > 0.0);
        }
    }
    s
}

/// Candidate topic supports with their occurrence counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SupportHypothesis {
    pub word_sets: Vec<Vec<usize>>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSettings {
    pub num_topics: usize,
    pub max_topics_per_doc: usize,
    /// Pairs to sample; defaults to K^4 ln^2 K, capped at D(D-1)/2.
    pub num_pairs: Option<usize>,
    /// Candidate sets must appear at least D/K^exponent times, rescaled by
    /// the fraction of pairs sampled (floor 1).
    pub count_threshold_exponent: f64,
    pub seed: u64,
}

impl SupportSettings {
    pub fn new(num_topics: usize, max_topics_per_doc: usize, seed: u64) -> Self {
        Self {
            num_topics,
            max_topics_per_doc,
            num_pairs: None,
            count_threshold_exponent: 2.5,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSupportResult {
    /// Recovered supports, ordered by smallest word index.
    pub supports: Vec<Vec<usize>>,
    /// Candidates that passed the count threshold, before pruning.
    pub hypothesis: SupportHypothesis,
    /// Every sampled pair with its test outcome.
    pub pairs: Vec<(usize, usize, bool)>,
}

fn default_num_pairs(k: usize) -> usize {
    let kf = k as f64;
    let ln = kf.ln();
    ((kf.powi(4) * ln * ln).ceil() as usize).max(1)
}

/// Decodes a linear index into the pair (a, b) with a < b.
fn decode_pair(p: usize) -> (usize, usize) {
    let mut b = ((1.0 + (1.0 + 8.0 * p as f64).sqrt()) / 2.0).floor() as usize;
    while b * (b - 1) / 2 > p {
        b -= 1;
    }
    while (b + 1) * b / 2 <= p {
        b += 1;
    }
    (p - b * (b - 1) / 2, b)
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|x| b.binary_search(x).is_ok())
}

fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut u: Vec<usize> = a.iter().chain(b).copied().collect();
    u.sort_unstable();
    u.dedup();
    u
}

/// Drops candidates that are the union of two incomparable other candidates,
/// then keeps only maximal sets, sorted and deduplicated.
pub fn prune_candidates(word_sets: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let m = word_sets.len();
    let is_union = |a: usize| {
        (0..m).filter(|&b| b != a).any(|b| {
            (b + 1..m).filter(|&c| c != a).any(|c| {
                let (sb, sc) = (&word_sets[b], &word_sets[c]);
                !is_subset(sb, sc) && !is_subset(sc, sb) && union(sb, sc) == word_sets[a]
            })
        })
    };
    let after_union: Vec<&Vec<usize>> = (0..m).filter(|&a| !is_union(a)).map(|a| &word_sets[a]).collect();
    let mut supports: Vec<Vec<usize>> = after_union
        .iter()
        .filter(|s| !after_union.iter().any(|o| o.len() > s.len() && is_subset(s, o)))
        .map(|s| (*s).clone())
        .collect();
    supports.sort();
    supports.dedup();
    supports
}

/// Recovers topic supports by sampling document pairs, refining each
/// identifying pair's joint support, and pruning the candidates.
pub fn find_topic_supports(docs: &[Document], settings: &SupportSettings) -> Result<TopicSupportResult> {
    let d = docs.len();
    let k = settings.num_topics;
    let t = settings.max_topics_per_doc;
    if d < 2 || k == 0 || t == 0 {
        return Err(invalid("support recovery needs two documents and positive K, T"));
    }
    let total_pairs = d * (d - 1) / 2;
    let num_pairs = settings
        .num_pairs
        .unwrap_or_else(|| default_num_pairs(k))
        .min(total_pairs);
    let mut r = rng::substream(settings.seed, TAG_PAIRS, 0);
    let mut linear = index::sample(&mut r, total_pairs, num_pairs).into_vec();
    linear.sort_unstable();

    let outcomes: Vec<_> = linear
        .par_iter()
        .map(|&p| {
            let (a, b) = decode_pair(p);
            let yes = pair_test(&docs[a], &docs[b], t);
            let set = yes.then(|| weedout(a, b, docs, t));
            ((a, b), yes, set)
        })
        .collect();

    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut pairs = Vec::with_capacity(outcomes.len());
    for ((a, b), yes, set) in outcomes {
        pairs.push((a, b, yes));
        if let Some(s) = set.filter(|s| !s.is_empty()) {
            *counts.entry(s).or_default() += 1;
        }
    }

    let threshold = (num_pairs as f64 / total_pairs as f64 * d as f64
        / (k as f64).powf(settings.count_threshold_exponent))
    .max(1.0);
    let (word_sets, set_counts): (Vec<_>, Vec<_>) =
        counts.into_iter().filter(|(_, c)| *c as f64 >= threshold).unzip();
    let hypothesis = SupportHypothesis {
        word_sets: word_sets.clone(),
        counts: set_counts,
    };

    let supports = prune_candidates(&word_sets);

    if supports.len() < k {
        return Err(Error::Inference(format!(
            "insufficient identifying pairs: recovered {} of {k} topic supports; use more documents",
            supports.len()
        )));
    }
    Ok(TopicSupportResult {
        supports,
        hypothesis,
        pairs,
    })
}

/// Score floor for the greedy document-support search.
pub fn default_score_floor(doc: &Document) -> f64 {
    match doc.n_words() {
        WordCount::Exact => 0.0,
        WordCount::Sampled(n) => 2.0 / (n as f64).sqrt(),
    }
}

/// Greedily picks the topic whose support carries the most not-yet-covered
/// document mass, until no score exceeds `floor`.
pub fn find_document_support(doc: &Document, topic_supports: &[Vec<usize>], floor: f64) -> Vec<usize> {
    let mut covered = vec![false; doc.num_words()];
    let mut chosen = Vec::new();
    loop {
        let mut best: Option<(usize, f64)> = None;
        for (i, support) in topic_supports.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let score: f64 = support
                .iter()
                .filter(|&&j| j < covered.len() && !covered[j])
                .map(|&j| doc.freqs()[j])
                .sum();
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        match best {
            Some((i, score)) if score > floor => {
                chosen.push(i);
                for &j in &topic_supports[i] {
                    if j < covered.len() {
                        covered[j] = true;
                    }
                }
            }
            _ => break,
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Initial state with beta rows uniform on the topic supports and
/// proportions uniform on the document supports.
pub fn build_initial_state(
    num_words: usize,
    topic_supports: &[Vec<usize>],
    doc_supports: Vec<Vec<usize>>,
) -> Result<InferenceState> {
    let k = topic_supports.len();
    if k == 0 {
        return Err(invalid("at least one topic support is required"));
    }
    let mut rows = Vec::with_capacity(k);
    for (i, s) in topic_supports.iter().enumerate() {
        if s.is_empty() {
            return Err(invalid(format!("topic support {i} is empty")));
        }
        let mut row = vec![0.0; num_words];
        for &j in s {
            if j >= num_words {
                return Err(invalid(format!("word {j} of topic support {i} is out of range")));
            }
            row[j] = 1.0 / s.len() as f64;
        }
        rows.push(row);
    }
    for (d, s) in doc_supports.iter().enumerate() {
        if s.is_empty() {
            return Err(invalid(format!("document {d} has an empty topic support")));
        }
        if let Some(i) = s.iter().find(|&&i| i >= k) {
            return Err(invalid(format!("document {d} references unknown topic {i}")));
        }
    }
    let beta = TopicWordMatrix::from_rows(rows)?;
    Ok(InferenceState::new(beta, doc_supports, Some(topic_supports.to_vec())))
}

/// True topic and document supports of a generated instance.
pub fn oracle_supports(instance: &Instance) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let topics = (0..instance.num_topics()).map(|i| instance.beta_true.support(i)).collect();
    let docs = instance
        .docs
        .iter()
        .map(|d| d.truth().expect("instance documents carry truth").support())
        .collect();
    (topics, docs)
}

/// Initial state built from the true supports.
pub fn oracle_initial_state(instance: &Instance) -> Result<InferenceState> {
    let (topics, docs) = oracle_supports(instance);
    build_initial_state(instance.num_words(), &topics, docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(f: &[f64]) -> Document {
        Document::new(f.to_vec(), WordCount::Exact, None).unwrap()
    }

    #[test]
    fn pair_test_examples() {
        let a = doc(&[0.5, 0.5, 0.0, 0.0]);
        let b = doc(&[0.0, 0.0, 0.5, 0.5]);
        assert!(pair_test(&a, &a, 1));
        assert!(!pair_test(&a, &b, 1));
        // Shared topic with weight 1/T in both, disjoint otherwise.
        let c = doc(&[0.25, 0.25, 0.5, 0.0]);
        let e = doc(&[0.25, 0.25, 0.0, 0.5]);
        assert!(pair_test(&c, &e, 2));
    }

    #[test]
    fn weedout_with_two_documents_keeps_intersection() {
        let docs = vec![doc(&[0.4, 0.4, 0.2, 0.0]), doc(&[0.3, 0.3, 0.2, 0.2])];
        assert_eq!(weedout(0, 1, &docs, 2), vec![0, 1, 2]);
    }

    #[test]
    fn weedout_drops_words_missing_from_witnesses() {
        let docs = vec![
            doc(&[0.4, 0.4, 0.2, 0.0]),
            doc(&[0.3, 0.3, 0.2, 0.2]),
            doc(&[0.5, 0.5, 0.0, 0.0]),
        ];
        assert_eq!(weedout(0, 1, &docs, 2), vec![0, 1]);
    }

    #[test]
    fn decode_pairs_enumerates_all() {
        let mut seen = Vec::new();
        for p in 0..10 {
            seen.push(decode_pair(p));
        }
        assert_eq!(
            seen,
            vec![(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3), (0, 4), (1, 4), (2, 4), (3, 4)]
        );
    }

    #[test]
    fn single_topic_support() {
        let docs = vec![doc(&[0.5, 0.5, 0.0]); 4];
        let s = SupportSettings::new(1, 1, 0);
        let r = find_topic_supports(&docs, &s).unwrap();
        assert_eq!(r.supports, vec![vec![0, 1]]);
    }

    #[test]
    fn union_of_two_supports_is_pruned() {
        let a = vec![0, 1, 2];
        let b = vec![2, 3, 4];
        let sets = vec![a.clone(), b.clone(), vec![0, 1, 2, 3, 4], vec![2]];
        assert_eq!(prune_candidates(&sets), vec![a, b]);
        // A set containing another is not a union of incomparable sets.
        assert_eq!(prune_candidates(&[vec![0], vec![0, 1]]), vec![vec![0, 1]]);
    }

    #[test]
    fn document_support_examples() {
        let supports = vec![vec![0, 1], vec![2, 3], vec![3, 4]];
        assert_eq!(find_document_support(&doc(&[0.5, 0.5, 0.0, 0.0, 0.0]), &supports, 0.0), vec![0]);
        assert_eq!(
            find_document_support(&doc(&[0.3, 0.3, 0.2, 0.2, 0.0]), &supports, 0.0),
            vec![0, 1]
        );
    }

    #[test]
    fn initial_state_examples() {
        let s = build_initial_state(3, &[vec![0, 1]], vec![vec![0]]).unwrap();
        assert_eq!(s.beta.row(0), &[0.5, 0.5, 0.0]);
        let s = build_initial_state(2, &[vec![0], vec![1], vec![0, 1], vec![1], vec![0], vec![1]], vec![vec![2, 5]])
            .unwrap();
        assert_eq!(s.gammas[0].weights(), &[0.0, 0.0, 0.5, 0.0, 0.0, 0.5]);
        assert!(build_initial_state(2, &[vec![0]], vec![vec![1]]).is_err());
    }
}
