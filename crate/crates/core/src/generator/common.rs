use rand::Rng as _;

use super::case2::make_heavy;
use super::{sample_documents, PropConstraints};
use crate::error::{invalid, Result};
use crate::model::{CommonParams, Instance, TopicWordMatrix};
use crate::rng::{self, TAG_COMMON};

/// Appends `common.num_words` words present in every topic and makes most
/// dominated documents heavy. Existing word indices are unchanged; the new
/// words take indices N..N+C.
pub fn add_common_words(instance: &Instance, common: &CommonParams) -> Result<Instance> {
    if !(common.kappa > 1.0) {
        return Err(invalid(format!("kappa = {} must exceed 1", common.kappa)));
    }
    if common.num_words == 0 {
        return Err(invalid("at least one common word is required"));
    }
    let k = instance.num_topics();
    let n = instance.num_words();
    let c = common.num_words;
    let params = &instance.params;
    let mut r = rng::substream(params.seed, TAG_COMMON, 0);

    // Entries of one word differ by at most sqrt(kappa) before the shared
    // rescaling, which preserves ratios.
    let spread = common.kappa.sqrt();
    let mut raw = vec![vec![0.0; c]; k];
    for j in 0..c {
        let base: f64 = r.random_range(1.0..2.0);
        for row in raw.iter_mut() {
            row[j] = base * r.random_range(1.0..spread);
        }
    }
    let sums: Vec<f64> = raw.iter().map(|row| row.iter().sum()).collect();
    let max_mass = common.kappa.powf(-common.mass_exponent);
    let scale = max_mass / sums.iter().copied().fold(0.0, f64::max);

    let mut data = Vec::with_capacity(k * (n + c));
    for i in 0..k {
        let keep = 1.0 - sums[i] * scale;
        data.extend(instance.beta_true.row(i).iter().map(|v| v * keep));
        data.extend(raw[i].iter().map(|v| v * scale));
    }
    let mut beta = TopicWordMatrix::from_flat(k, n + c, data)?;
    beta.normalize_rows();

    let mut gammas = instance.gammas_true();
    let threshold = 1.0 - common.kappa.powf(-common.heavy_exponent);
    let base = match &params.case2 {
        Some(c2) => PropConstraints {
            dominant_lo: c2.c_large,
            gap: 0.0,
            minor_max: c2.c_small,
            minor_min: params.min_entry(),
        },
        None => PropConstraints {
            dominant_lo: params.dominant_min.unwrap_or(0.0),
            gap: params.rho,
            minor_max: 1.0,
            minor_min: params.min_entry(),
        },
    };
    make_heavy(&mut gammas, k, threshold, threshold, base, params.seed ^ TAG_COMMON)?;
    let docs = sample_documents(&gammas, &beta, params.doc_mode, params.seed, TAG_COMMON)?;

    let mut new_params = params.clone();
    new_params.num_words = n + c;
    new_params.common = Some(common.clone());
    let mut common_words = instance.common_words.clone();
    common_words.extend(n..n + c);
    Instance::new(beta, docs, new_params, common_words)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{gen_case1, verify_assumptions, AssumptionCase};
    use crate::model::GenerationParams;

    #[test]
    fn common_words_satisfy_their_assumptions() {
        let p = GenerationParams::new(5, 100, 3000, 3, 0.1, 21);
        let base = gen_case1(&p).unwrap();
        let cp = CommonParams {
            kappa: 2.0,
            mass_exponent: 4.0,
            heavy_exponent: 4.0,
            num_words: 4,
        };
        let inst = add_common_words(&base, &cp).unwrap();
        assert_eq!(inst.num_words(), 104);
        assert_eq!(inst.common_words, vec![100, 101, 102, 103]);
        let common = verify_assumptions(&inst, AssumptionCase::CommonWords);
        assert!(common.all_passed(), "{common:#?}");
        let case1 = verify_assumptions(&inst, AssumptionCase::Case1);
        assert!(case1.all_passed(), "{case1:#?}");
        // Dominant topics are unchanged.
        for (a, b) in base.docs.iter().zip(&inst.docs) {
            assert_eq!(a.truth().unwrap().dominant(), b.truth().unwrap().dominant());
        }
    }
}
