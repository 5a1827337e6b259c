//! JSON file formats: generation configs, instances, final states and
//! manifests. Infinite values are written as the string "inf".

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use tem_core::inference::InferenceState;
use tem_core::model::{Document, GenerationParams, Instance, TopicProportions, TopicWordMatrix, WordCount};

use crate::CliError;

/// A document as stored on disk: sparse `[word_index, freq]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocRecord {
    pub words: Vec<(usize, f64)>,
    /// Number of sampled words; absent for exact frequencies.
    #[serde(default)]
    pub n_words: Option<u64>,
    /// True topic proportions.
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub params: GenerationParams,
    pub num_topics: usize,
    pub num_words: usize,
    /// Row-major dense topic-word matrix.
    pub beta: Vec<Vec<f64>>,
    pub docs: Vec<DocRecord>,
    pub epsilon_achieved: f64,
    #[serde(default)]
    pub common_words: Vec<usize>,
}

impl InstanceFile {
    pub fn from_instance(inst: &Instance) -> Self {
        Self {
            params: inst.params.clone(),
            num_topics: inst.num_topics(),
            num_words: inst.num_words(),
            beta: inst.beta_true.to_rows(),
            docs: inst
                .docs
                .iter()
                .map(|d| DocRecord {
                    words: d.sparse(),
                    n_words: match d.n_words() {
                        WordCount::Exact => None,
                        WordCount::Sampled(n) => Some(n),
                    },
                    gamma: d.truth().map(|g| g.weights().to_vec()).unwrap_or_default(),
                })
                .collect(),
            epsilon_achieved: inst.epsilon_achieved,
            common_words: inst.common_words.clone(),
        }
    }

    pub fn into_instance(self) -> tem_core::Result<Instance> {
        let beta = TopicWordMatrix::from_rows(self.beta)?;
        if beta.num_topics() != self.num_topics || beta.num_words() != self.num_words {
            return Err(tem_core::Error::Shape(format!(
                "beta is {}x{}, header says {}x{}",
                beta.num_topics(),
                beta.num_words(),
                self.num_topics,
                self.num_words
            )));
        }
        let docs = self
            .docs
            .into_iter()
            .map(|d| {
                let count = d.n_words.map_or(WordCount::Exact, WordCount::Sampled);
                let truth = TopicProportions::new(d.gamma)?;
                Document::from_sparse(self.num_words, &d.words, count, Some(truth))
            })
            .collect::<tem_core::Result<Vec<_>>>()?;
        Instance::new(beta, docs, self.params, self.common_words)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn read_instance(path: &Path) -> Result<Instance, CliError> {
    let file: InstanceFile = read_json(path)?;
    file.into_instance()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// A float as JSON, with infinities as "inf" and NaN as null.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        Value::Null
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

pub fn state_json(state: &InferenceState) -> Value {
    json!({
        "variant": state.variant.map(|v| v.name()),
        "iteration": state.iteration,
        "beta": state.beta.to_rows(),
        "gammas": state.gammas.iter().map(|g| g.weights().to_vec()).collect::<Vec<_>>(),
        "doc_supports": state.doc_supports,
        "topic_supports": state.topic_supports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tem_core::generator::gen_case1;

    #[test]
    fn instance_round_trips_exactly() {
        let mut p = GenerationParams::new(3, 40, 50, 2, 0.1, 5);
        p.doc_mode = tem_core::model::DocMode::Multinomial(200);
        let inst = gen_case1(&p).unwrap();
        let text = serde_json::to_string(&InstanceFile::from_instance(&inst)).unwrap();
        let back: InstanceFile = serde_json::from_str(&text).unwrap();
        let inst2 = back.into_instance().unwrap();
        assert_eq!(inst2.beta_true, inst.beta_true);
        for (a, b) in inst.docs.iter().zip(&inst2.docs) {
            assert_eq!(a.freqs(), b.freqs());
            assert_eq!(a.n_words(), b.n_words());
            assert_eq!(a.truth(), b.truth());
        }
        assert_eq!(inst2.epsilon_achieved, inst.epsilon_achieved);
    }

    #[test]
    fn infinities_become_strings() {
        assert_eq!(num(f64::INFINITY), json!("inf"));
        assert_eq!(num(1.5), json!(1.5));
        assert_eq!(num(f64::NAN), Value::Null);
    }
}
