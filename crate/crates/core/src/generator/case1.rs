use rayon::prelude::*;

use super::{build_beta, draw_proportions, draw_topic_set, sample_documents, PropConstraints};
use crate::error::{Error, Result};
use crate::model::{GenerationParams, Instance, TopicProportions};
use crate::rng::{self, TAG_BETA, TAG_DOC, TAG_SAMPLE};

/// Topic-word entries of shared words may differ by up to this factor.
const CASE1_SHARED_RATIO: f64 = 4.0;

/// Generates an instance with almost disjoint topic supports and sparse,
/// gapped documents.
pub fn gen_case1(params: &GenerationParams) -> Result<Instance> {
    params.validate()?;
    let k = params.num_topics;
    let t = params.max_topics_per_doc.min(k);
    if k > 1 && params.overlap_mass >= 1.0 / (2.0 * t as f64) {
        return Err(Error::Unsatisfiable(format!(
            "overlap_mass {} must be below 1/(2T) = {}",
            params.overlap_mass,
            1.0 / (2.0 * t as f64)
        )));
    }
    let mut beta_rng = rng::substream(params.seed, TAG_BETA, 0);
    let beta = build_beta(
        k,
        params.num_words,
        params.shared_word_frac,
        params.topics_per_word_max(),
        params.overlap_mass,
        CASE1_SHARED_RATIO,
        params.min_entry(),
        &mut beta_rng,
    )?;

    let constraints = PropConstraints {
        dominant_lo: params.dominant_min.unwrap_or(0.0),
        gap: params.rho,
        minor_max: 1.0,
        minor_min: params.min_entry(),
    };
    let q = params.inclusion_prob();
    let gammas: Vec<TopicProportions> = (0..params.num_docs)
        .into_par_iter()
        .map(|d| {
            let mut r = rng::substream(params.seed, TAG_DOC, d as u64);
            let (dominant, extras) = draw_topic_set(k, t - 1, q, &mut r);
            draw_proportions(k, dominant, &extras, constraints, &mut r)
        })
        .collect::<Result<_>>()?;
    let docs = sample_documents(&gammas, &beta, params.doc_mode, params.seed, TAG_SAMPLE)?;
    Instance::new(beta, docs, params.clone(), Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{verify_assumptions, AssumptionCase};

    #[test]
    fn single_topic_instance() {
        let p = GenerationParams::new(1, 20, 10, 1, 0.5, 1);
        let inst = gen_case1(&p).unwrap();
        for doc in &inst.docs {
            assert_eq!(doc.truth().unwrap().weights(), &[1.0]);
            assert_eq!(doc.freqs(), inst.beta_true.row(0));
        }
    }

    #[test]
    fn small_instance_passes_its_assumptions() {
        let p = GenerationParams::new(5, 100, 3000, 3, 0.1, 7);
        let inst = gen_case1(&p).unwrap();
        let report = verify_assumptions(&inst, AssumptionCase::Case1);
        assert!(report.all_passed(), "{report:#?}");
        assert_eq!(inst.epsilon_achieved, 0.0);
    }

    #[test]
    fn rejects_infeasible_overlap() {
        let mut p = GenerationParams::new(5, 100, 10, 3, 0.1, 7);
        p.overlap_mass = 0.3;
        assert!(matches!(gen_case1(&p), Err(Error::Unsatisfiable(_))));
    }

    #[test]
    fn too_few_words_is_an_error() {
        let mut p = GenerationParams::new(10, 8, 10, 2, 0.1, 7);
        p.min_entry = Some(1e-6);
        assert!(gen_case1(&p).is_err());
    }

    #[test]
    fn same_seed_same_instance() {
        let p = GenerationParams::new(4, 60, 200, 2, 0.2, 99);
        let a = gen_case1(&p).unwrap();
        let b = gen_case1(&p).unwrap();
        assert_eq!(a.beta_true, b.beta_true);
        assert_eq!(a.docs, b.docs);
    }
}
