use serde::{Deserialize, Serialize};

use super::case2::case2_gap_rhs;
use crate::model::Instance;

/// Which family of assumptions to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionCase {
    Case1,
    Case2,
    CommonWords,
}

/// Outcome of one assumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    /// The statistic that was compared against `threshold`.
    pub measured: f64,
    pub threshold: f64,
    /// First offending item, when the check failed.
    pub witness: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, passed: bool, measured: f64, threshold: f64, witness: Option<String>) {
        self.checks.push(AssumptionCheck {
            name: name.to_string(),
            passed,
            measured,
            threshold,
            witness: if passed { None } else { witness },
        });
    }
}

/// Checks every structural assumption of `case` on `instance`. Asymptotic
/// clauses are replaced by the finite thresholds in the instance parameters.
pub fn verify_assumptions(instance: &Instance, case: AssumptionCase) -> AssumptionReport {
    let mut report = AssumptionReport::default();
    let view = View::new(instance);
    match case {
        AssumptionCase::Case1 => {
            view.discriminative_words(&mut report);
            view.almost_disjoint(&mut report);
            view.sparse_gapped(&mut report);
            view.equidistribution(&mut report);
            view.weak_correlation(&mut report);
            view.independent_inclusion(&mut report);
            view.minimum_entry(&mut report);
        }
        AssumptionCase::Case2 => {
            view.anchors_and_range(&mut report);
            view.case2_gapped(&mut report);
            view.case2_heavy(&mut report);
            view.minimum_entry(&mut report);
        }
        AssumptionCase::CommonWords => {
            view.common_ratio(&mut report);
            view.common_mass(&mut report);
            view.common_heavy(&mut report);
        }
    }
    report
}

struct View<'a> {
    inst: &'a Instance,
    is_common: Vec<bool>,
    /// Bitmask of each document's true support (K <= 64), or None.
    masks: Option<Vec<u64>>,
    dominants: Vec<Option<usize>>,
}

impl<'a> View<'a> {
    fn new(inst: &'a Instance) -> Self {
        let mut is_common = vec![false; inst.num_words()];
        for &j in &inst.common_words {
            is_common[j] = true;
        }
        let masks = (inst.num_topics() <= 64).then(|| {
            inst.docs
                .iter()
                .map(|d| {
                    d.truth()
                        .unwrap()
                        .support()
                        .iter()
                        .fold(0u64, |m, &i| m | (1 << i))
                })
                .collect()
        });
        let dominants = inst.docs.iter().map(|d| d.truth().unwrap().dominant()).collect();
        Self {
            inst,
            is_common,
            masks,
            dominants,
        }
    }

    fn k(&self) -> usize {
        self.inst.num_topics()
    }

    fn non_common_words(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.inst.num_words()).filter(|&j| !self.is_common[j])
    }

    fn discriminative_words(&self, report: &mut AssumptionReport) {
        let limit = self.inst.params.topics_per_word_max();
        let mut worst = (0, None);
        for j in self.non_common_words() {
            let count = self.inst.beta_true.topics_of_word(j).len();
            if count > worst.0 {
                worst = (count, Some(j));
            }
        }
        report.push(
            "discriminative_words",
            worst.0 <= limit,
            worst.0 as f64,
            limit as f64,
            worst.1.map(|j| format!("word {j} appears in {} topics", worst.0)),
        );
    }

    fn almost_disjoint(&self, report: &mut AssumptionReport) {
        let beta = &self.inst.beta_true;
        let r = self.inst.params.overlap_mass;
        let mut worst = (0.0, None);
        for i in 0..self.k() {
            for i2 in 0..self.k() {
                if i == i2 {
                    continue;
                }
                let mass: f64 = self
                    .non_common_words()
                    .filter(|&j| beta.get(i, j) > 0.0 && beta.get(i2, j) > 0.0)
                    .map(|j| beta.get(i, j))
                    .sum();
                if mass > worst.0 {
                    worst = (mass, Some((i, i2)));
                }
            }
        }
        report.push(
            "almost_disjoint_supports",
            worst.0 <= r + 1e-12,
            worst.0,
            r,
            worst
                .1
                .map(|(i, i2)| format!("topic {i} puts mass {} on words of topic {i2}", worst.0)),
        );
    }

    fn sparse_gapped(&self, report: &mut AssumptionReport) {
        let t = self.inst.params.max_topics_per_doc;
        let rho = self.inst.params.rho;
        let mut min_gap = f64::INFINITY;
        let mut witness = None;
        for (d, doc) in self.inst.docs.iter().enumerate() {
            let g = doc.truth().unwrap();
            let support = g.support();
            let gap = match self.dominants[d] {
                Some(i) => {
                    let second = support
                        .iter()
                        .filter(|&&k| k != i)
                        .map(|&k| g.get(k))
                        .fold(0.0, f64::max);
                    g.get(i) - second
                }
                None => 0.0,
            };
            if support.len() > t {
                min_gap = f64::NEG_INFINITY;
                witness.get_or_insert(format!("document {d} has {} topics", support.len()));
            }
            if gap < min_gap {
                min_gap = gap;
                if gap <= rho {
                    witness.get_or_insert(format!("document {d} has gap {gap}"));
                }
            }
        }
        report.push("sparse_gapped_documents", min_gap > rho, min_gap, rho, witness);
    }

    fn equidistribution(&self, report: &mut AssumptionReport) {
        let k = self.k();
        let f = self.inst.params.thresholds.equidistribution_factor;
        let mut counts = vec![0usize; k];
        for i in self.dominants.iter().flatten() {
            counts[*i] += 1;
        }
        let total = self.inst.docs.len() as f64;
        let mut worst = (1.0, 0);
        for (i, &c) in counts.iter().enumerate() {
            let ratio = c as f64 / total * k as f64;
            let factor = if ratio > 0.0 { ratio.max(1.0 / ratio) } else { f64::INFINITY };
            if factor > worst.0 {
                worst = (factor, i);
            }
        }
        report.push(
            "dominant_equidistribution",
            worst.0 <= f,
            worst.0,
            f,
            Some(format!("topic {} is dominant in {} documents", worst.1, counts[worst.1])),
        );
    }

    fn subsets(&self, exclude: usize, max_size: usize) -> Vec<u64> {
        let others: Vec<usize> = (0..self.k()).filter(|&i| i != exclude).collect();
        let mut out = Vec::new();
        let mut stack: Vec<(usize, u64, usize)> = vec![(0, 0, 0)];
        while let Some((start, mask, size)) = stack.pop() {
            if size > 0 {
                out.push(mask);
            }
            if size == max_size {
                continue;
            }
            for (pos, &i) in others.iter().enumerate().skip(start) {
                stack.push((pos + 1, mask | (1 << i), size + 1));
            }
        }
        out
    }

    fn weak_correlation(&self, report: &mut AssumptionReport) {
        let th = &self.inst.params.thresholds;
        let Some(masks) = &self.masks else {
            report.push("weak_topic_correlation", false, f64::NAN, th.correlation_tol,
                Some("more than 64 topics are not supported".into()));
            return;
        };
        let t = self.inst.params.max_topics_per_doc.min(self.k() - 1);
        let mut worst = (0.0, None);
        for i in 0..self.k() {
            let docs: Vec<(u64, f64)> = self
                .dominants
                .iter()
                .enumerate()
                .filter(|(_, dm)| **dm == Some(i))
                .map(|(d, _)| (masks[d], self.inst.docs[d].truth().unwrap().get(i)))
                .collect();
            if docs.len() < th.min_condition_count {
                continue;
            }
            let mean = docs.iter().map(|x| x.1).sum::<f64>() / docs.len() as f64;
            for s in self.subsets(i, t) {
                let (sum, n) = docs
                    .iter()
                    .filter(|(m, _)| m & s == 0)
                    .fold((0.0, 0usize), |(a, c), x| (a + x.1, c + 1));
                if n < th.min_condition_count {
                    continue;
                }
                let dev = (sum / n as f64 / mean - 1.0).abs();
                if dev > worst.0 {
                    worst = (dev, Some((i, s)));
                }
            }
        }
        report.push(
            "weak_topic_correlation",
            worst.0 <= th.correlation_tol,
            worst.0,
            th.correlation_tol,
            worst.1.map(|(i, s)| format!("topic {i} conditioned on absent set {s:#b}")),
        );
    }

    fn independent_inclusion(&self, report: &mut AssumptionReport) {
        let th = &self.inst.params.thresholds;
        let k = self.k() as f64;
        let Some(masks) = &self.masks else {
            report.push("independent_topic_inclusion", false, f64::NAN, th.inclusion_factor,
                Some("more than 64 topics are not supported".into()));
            return;
        };
        if self.k() == 1 {
            report.push("independent_topic_inclusion", true, 1.0, th.inclusion_factor, None);
            return;
        }
        let t = self.inst.params.max_topics_per_doc.saturating_sub(1).min(self.k() - 1);
        let mut worst = (1.0, None);
        for i in 0..self.k() {
            let bit = 1u64 << i;
            let mut sets = self.subsets(i, t);
            sets.push(0);
            for s in sets {
                let (hit, n) = masks
                    .iter()
                    .filter(|&&m| m & s == s)
                    .fold((0usize, 0usize), |(h, c), &m| (h + usize::from(m & bit != 0), c + 1));
                if n < th.min_condition_count {
                    continue;
                }
                let scaled = hit as f64 / n as f64 * k;
                let factor = if scaled > 0.0 { scaled.max(1.0 / scaled) } else { f64::INFINITY };
                if factor > worst.0 {
                    worst = (factor, Some((i, s)));
                }
            }
        }
        report.push(
            "independent_topic_inclusion",
            worst.0 <= th.inclusion_factor,
            worst.0,
            th.inclusion_factor,
            worst.1.map(|(i, s)| format!("topic {i} given present set {s:#b}")),
        );
    }

    fn minimum_entry(&self, report: &mut AssumptionReport) {
        let floor = self.inst.params.min_entry();
        let beta_min = self.inst.beta_true.min_nonzero();
        let mut smallest = (beta_min, "topic-word matrix".to_string());
        for (d, doc) in self.inst.docs.iter().enumerate() {
            for &w in doc.truth().unwrap().weights() {
                if w > 0.0 && w < smallest.0 {
                    smallest = (w, format!("document {d}"));
                }
            }
        }
        report.push(
            "minimum_entry",
            smallest.0 >= floor,
            smallest.0,
            floor,
            Some(format!("smallest nonzero entry is in the {}", smallest.1)),
        );
    }

    fn anchors_and_range(&self, report: &mut AssumptionReport) {
        let Some(c2) = &self.inst.params.case2 else {
            report.push("anchor_mass_and_dynamic_range", false, f64::NAN, f64::NAN,
                Some("instance has no case2 parameters".into()));
            return;
        };
        let beta = &self.inst.beta_true;
        let mut anchor_mass = vec![0.0; self.k()];
        let mut worst_ratio: (f64, Option<usize>) = (1.0, None);
        for j in self.non_common_words() {
            let topics = beta.topics_of_word(j);
            if topics.len() == 1 {
                anchor_mass[topics[0]] += beta.get(topics[0], j);
            } else if topics.len() > 1 {
                let vals = topics.iter().map(|&i| beta.get(i, j));
                let hi = vals.clone().fold(0.0, f64::max);
                let lo = vals.fold(f64::INFINITY, f64::min);
                if hi / lo > worst_ratio.0 {
                    worst_ratio = (hi / lo, Some(j));
                }
            }
        }
        // Common words are not anchors, so mass is measured relative to the
        // non-common part of each row.
        let min_mass = (0..self.k())
            .map(|i| {
                let nc: f64 = self.non_common_words().map(|j| beta.get(i, j)).sum();
                anchor_mass[i] / nc
            })
            .fold(f64::INFINITY, f64::min);
        report.push(
            "anchor_mass",
            min_mass >= c2.anchor_mass - 1e-12,
            min_mass,
            c2.anchor_mass,
            Some(format!("smallest anchor mass {min_mass}")),
        );
        report.push(
            "dynamic_range",
            worst_ratio.0 <= c2.dynamic_range + 1e-9,
            worst_ratio.0,
            c2.dynamic_range,
            worst_ratio.1.map(|j| format!("word {j} has ratio {}", worst_ratio.0)),
        );
    }

    fn case2_gapped(&self, report: &mut AssumptionReport) {
        let Some(c2) = &self.inst.params.case2 else {
            report.push("gapped_documents", false, f64::NAN, f64::NAN,
                Some("instance has no case2 parameters".into()));
            return;
        };
        let mut witness = None;
        let mut ok = true;
        for (d, doc) in self.inst.docs.iter().enumerate() {
            let g = doc.truth().unwrap();
            let Some(i) = self.dominants[d] else {
                ok = false;
                witness.get_or_insert(format!("document {d} has no strict dominant topic"));
                continue;
            };
            let minor_max = (0..self.k()).filter(|&k| k != i).map(|k| g.get(k)).fold(0.0, f64::max);
            if g.get(i) < c2.c_large || minor_max > c2.c_small {
                ok = false;
                witness.get_or_insert(format!(
                    "document {d}: dominant {} largest minor {minor_max}",
                    g.get(i)
                ));
            }
        }
        let gap = c2.c_large - c2.c_small;
        let rhs = case2_gap_rhs(c2.anchor_mass, c2.dynamic_range, c2.c_large, c2.epsilon);
        if gap < rhs {
            ok = false;
            witness.get_or_insert(format!("gap {gap} is below the required {rhs}"));
        }
        report.push("gapped_documents", ok, gap, rhs, witness);
    }

    fn heavy_fraction(&self, threshold: f64) -> (f64, usize) {
        let mut worst = (1.0, 0);
        for (i, group) in self.inst.dominated_docs().iter().enumerate() {
            if group.is_empty() {
                return (0.0, i);
            }
            let heavy = group
                .iter()
                .filter(|&&d| self.inst.docs[d].truth().unwrap().get(i) >= threshold - 1e-12)
                .count();
            let frac = heavy as f64 / group.len() as f64;
            if frac < worst.0 {
                worst = (frac, i);
            }
        }
        worst
    }

    fn case2_heavy(&self, report: &mut AssumptionReport) {
        let Some(c2) = &self.inst.params.case2 else {
            report.push("heavy_documents", false, f64::NAN, f64::NAN,
                Some("instance has no case2 parameters".into()));
            return;
        };
        let required = c2.heavy_frac();
        let (frac, topic) = self.heavy_fraction(1.0 - c2.effective_delta());
        report.push(
            "heavy_documents",
            frac >= required - 1e-12,
            frac,
            required,
            Some(format!("topic {topic} has heavy fraction {frac}")),
        );
    }

    fn common_ratio(&self, report: &mut AssumptionReport) {
        let Some(cp) = &self.inst.params.common else {
            report.push("common_word_ratio", false, f64::NAN, f64::NAN,
                Some("instance has no common-word parameters".into()));
            return;
        };
        let beta = &self.inst.beta_true;
        let mut worst: (f64, Option<usize>) = (1.0, None);
        for &j in &self.inst.common_words {
            let vals: Vec<f64> = (0..self.k()).map(|i| beta.get(i, j)).collect();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(0.0, f64::max);
            let ratio = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            if ratio > worst.0 {
                worst = (ratio, Some(j));
            }
        }
        let mut ok = worst.0 <= cp.kappa + 1e-9 && cp.kappa >= 2.0;
        let mut witness = worst.1.map(|j| format!("word {j} has ratio {}", worst.0));
        if let Some(c2) = &self.inst.params.case2 {
            if cp.kappa > c2.dynamic_range {
                ok = false;
                witness = Some(format!("kappa {} exceeds the dynamic range", cp.kappa));
            }
        }
        if cp.kappa < 2.0 {
            witness = Some(format!("kappa {} is below 2", cp.kappa));
        }
        report.push("common_word_ratio", ok, worst.0, cp.kappa, witness);
    }

    fn common_mass(&self, report: &mut AssumptionReport) {
        let Some(cp) = &self.inst.params.common else {
            report.push("common_word_mass", false, f64::NAN, f64::NAN, None);
            return;
        };
        let limit = cp.kappa.powf(-cp.mass_exponent);
        let (mass, topic) = (0..self.k())
            .map(|i| {
                let m: f64 = self.inst.common_words.iter().map(|&j| self.inst.beta_true.get(i, j)).sum();
                (m, i)
            })
            .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
        report.push(
            "common_word_mass",
            mass <= limit + 1e-12,
            mass,
            limit,
            Some(format!("topic {topic} has common mass {mass}")),
        );
    }

    fn common_heavy(&self, report: &mut AssumptionReport) {
        let Some(cp) = &self.inst.params.common else {
            report.push("heavy_dominant_documents", false, f64::NAN, f64::NAN, None);
            return;
        };
        let slack = cp.kappa.powf(-cp.heavy_exponent);
        let (frac, topic) = self.heavy_fraction(1.0 - slack);
        report.push(
            "heavy_dominant_documents",
            frac >= 1.0 - slack - 1e-12,
            frac,
            1.0 - slack,
            Some(format!("topic {topic} has heavy fraction {frac}")),
        );
    }
}
