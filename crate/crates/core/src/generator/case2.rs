use rayon::prelude::*;

use super::{build_beta, draw_proportions, draw_topic_set, sample_documents, PropConstraints};
use crate::error::{invalid, Error, Result};
use crate::model::{Case2Params, GenerationParams, Instance, TopicProportions};
use crate::rng::{self, TAG_BETA, TAG_DOC, TAG_HEAVY, TAG_SAMPLE};

fn gap_term(p: f64, b: f64, c_large: f64, eps: f64) -> f64 {
    let arg = 2.0 * (p * (1.0 / c_large).ln() + (1.0 - p) * (b * c_large).ln());
    (arg.max(0.0).sqrt() + (1.0 + eps).ln().sqrt()) / p
}

/// Smallest admissible gap C_l - C_s for anchor mass `p`, dynamic range `b`.
pub fn case2_gap_rhs(p: f64, b: f64, c_large: f64, eps: f64) -> f64 {
    gap_term(p, b, c_large, eps) + eps
}

/// Heaviness slack delta; may be negative, in which case heavy documents
/// must be pure.
pub fn case2_delta(p: f64, b: f64, c_large: f64, eps: f64) -> f64 {
    let a = c_large * c_large / (2.0 * b.powi(3)) - gap_term(p, b, c_large, eps) - eps;
    a.min(1.0 - c_large.sqrt())
}

impl Case2Params {
    /// Delta used for generation, clamped at zero.
    pub fn effective_delta(&self) -> f64 {
        self.delta
            .unwrap_or_else(|| case2_delta(self.anchor_mass, self.dynamic_range, self.c_large, self.epsilon))
            .max(0.0)
    }

    pub fn heavy_frac(&self) -> f64 {
        self.heavy_frac
            .unwrap_or_else(|| (8.0 / self.dynamic_range).min(1.0))
    }

    fn validate(&self) -> Result<()> {
        if !(self.anchor_mass > 0.0 && self.anchor_mass <= 1.0) {
            return Err(invalid("anchor_mass must lie in (0, 1]"));
        }
        if !(self.dynamic_range >= 1.0) {
            return Err(invalid("dynamic_range must be at least 1"));
        }
        if !(self.c_large > 0.0 && self.c_large <= 1.0) {
            return Err(invalid("c_large must lie in (0, 1]"));
        }
        if !(self.c_small >= 0.0 && self.c_small < self.c_large) {
            return Err(invalid("c_small must lie in [0, c_large)"));
        }
        let h = self.heavy_frac();
        if !(0.0..=1.0).contains(&h) {
            return Err(invalid("heavy_frac must lie in [0, 1]"));
        }
        let lhs = self.c_large - self.c_small;
        let rhs = case2_gap_rhs(self.anchor_mass, self.dynamic_range, self.c_large, self.epsilon);
        if !(lhs >= rhs) {
            return Err(Error::Unsatisfiable(format!(
                "gap inequality C_l - C_s >= (sqrt(2(p ln(1/C_l) + (1-p) ln(B C_l))) + sqrt(ln(1+eps)))/p + eps fails: \
                 {lhs} < {rhs}"
            )));
        }
        Ok(())
    }
}

/// Generates an instance with a large fraction of anchor words, small
/// dynamic range on shared words and documents with a large dominant topic.
pub fn gen_case2(params: &GenerationParams) -> Result<Instance> {
    params.validate()?;
    let c2 = params
        .case2
        .as_ref()
        .ok_or_else(|| invalid("case2 parameters are required"))?;
    c2.validate()?;
    let k = params.num_topics;
    let t = params.max_topics_per_doc.min(k);
    let min_entry = params.min_entry();

    let mut beta_rng = rng::substream(params.seed, TAG_BETA, 0);
    let beta = build_beta(
        k,
        params.num_words,
        params.shared_word_frac,
        params.topics_per_word_max(),
        1.0 - c2.anchor_mass,
        c2.dynamic_range,
        min_entry,
        &mut beta_rng,
    )?;

    let base = PropConstraints {
        dominant_lo: c2.c_large,
        gap: 0.0,
        minor_max: c2.c_small,
        minor_min: min_entry,
    };
    // Minors can only fit if m * min_entry <= 1 - c_large.
    let max_extra = ((1.0 - c2.c_large) / min_entry).floor() as usize;
    let q = params.inclusion_prob();
    let mut gammas: Vec<TopicProportions> = (0..params.num_docs)
        .into_par_iter()
        .map(|d| {
            let mut r = rng::substream(params.seed, TAG_DOC, d as u64);
            let (dominant, extras) = draw_topic_set(k, (t - 1).min(max_extra), q, &mut r);
            draw_proportions(k, dominant, &extras, base, &mut r)
        })
        .collect::<Result<_>>()?;

    make_heavy(&mut gammas, k, c2.heavy_frac(), 1.0 - c2.effective_delta(), base, params.seed)?;
    let docs = sample_documents(&gammas, &beta, params.doc_mode, params.seed, TAG_SAMPLE)?;
    // Record the delta that was used, raw (possibly negative) when computed.
    let mut stored = params.clone();
    if let Some(c) = stored.case2.as_mut() {
        c.delta = Some(c.delta.unwrap_or_else(|| case2_delta(c.anchor_mass, c.dynamic_range, c.c_large, c.epsilon)));
    }
    Instance::new(beta, docs, stored, Vec::new())
}

/// For each topic, raises the dominant weight of the top `frac` share of its
/// dominated documents to at least `threshold`. Documents that cannot reach
/// the threshold with their minors become pure.
pub(crate) fn make_heavy(
    gammas: &mut [TopicProportions],
    num_topics: usize,
    frac: f64,
    threshold: f64,
    base: PropConstraints,
    seed: u64,
) -> Result<()> {
    let mut groups = vec![Vec::new(); num_topics];
    for (d, g) in gammas.iter().enumerate() {
        if let Some(i) = g.dominant() {
            groups[i].push(d);
        }
    }
    for (topic, mut group) in groups.into_iter().enumerate() {
        let need = (frac * group.len() as f64 - 1e-9).ceil() as usize;
        group.sort_by(|&a, &b| {
            gammas[b]
                .get(topic)
                .total_cmp(&gammas[a].get(topic))
                .then(a.cmp(&b))
        });
        for &d in group.iter().take(need) {
            if gammas[d].get(topic) >= threshold {
                continue;
            }
            let extras: Vec<usize> = gammas[d]
                .support()
                .into_iter()
                .filter(|&i| i != topic)
                .collect();
            let mut r = rng::substream(seed, TAG_HEAVY, d as u64);
            let c = PropConstraints {
                dominant_lo: base.dominant_lo.max(threshold),
                ..base
            };
            gammas[d] = match draw_proportions(num_topics, topic, &extras, c, &mut r) {
                Ok(g) => g,
                Err(Error::Unsatisfiable(_)) => TopicProportions::pure(num_topics, topic),
                Err(e) => return Err(e),
            };
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{verify_assumptions, AssumptionCase};
    use approx::assert_abs_diff_eq;

    #[test]
    fn delta_is_negative_for_moderate_anchor_mass() {
        assert_abs_diff_eq!(case2_delta(0.8, 2.0, 0.95, 0.0), -0.671_187, epsilon = 1e-5);
        assert_abs_diff_eq!(case2_gap_rhs(0.8, 2.0, 0.95, 0.0), 0.727_593, epsilon = 1e-5);
    }

    #[test]
    fn infeasible_gap_names_the_inequality() {
        let mut p = params();
        if let Some(c) = p.case2.as_mut() {
            c.c_large = 0.6;
            c.c_small = 0.3;
        }
        let err = gen_case2(&p).unwrap_err();
        assert!(matches!(&err, Error::Unsatisfiable(m) if m.contains("gap inequality")), "{err}");
    }

    #[test]
    fn computed_delta_is_stored() {
        let mut p = params();
        p.num_docs = 200;
        let inst = gen_case2(&p).unwrap();
        let d = inst.params.case2.unwrap().delta.unwrap();
        assert_abs_diff_eq!(d, case2_delta(0.8, 2.0, 0.9, 0.0));
    }

    #[test]
    fn delta_caps_at_sqrt_term() {
        // p = 1 and C_l = 1: only the square-root cap remains.
        assert_abs_diff_eq!(case2_delta(1.0, 1.0, 1.0, 0.0), 0.0);
    }

    fn params() -> GenerationParams {
        let mut p = GenerationParams::new(4, 120, 2000, 3, 0.5, 3);
        p.case2 = Some(Case2Params {
            anchor_mass: 0.8,
            dynamic_range: 2.0,
            c_large: 0.9,
            c_small: 0.05,
            epsilon: 0.0,
            delta: None,
            heavy_frac: Some(0.25),
        });
        p
    }

    #[test]
    fn generated_instance_meets_case2_checks() {
        let inst = gen_case2(&params()).unwrap();
        let report = verify_assumptions(&inst, AssumptionCase::Case2);
        assert!(report.all_passed(), "{report:#?}");
        let pure = inst
            .docs
            .iter()
            .filter(|d| d.truth().unwrap().support().len() == 1)
            .count();
        assert!(pure >= inst.docs.len() / 4);
    }

    #[test]
    fn missing_case2_params_is_an_error() {
        let mut p = params();
        p.case2 = None;
        assert!(gen_case2(&p).is_err());
    }
}
