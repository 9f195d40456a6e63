//! Versioned JSON checkpoints.
//!
//! One JSON object followed by a newline:
//!
//! ```text
//! {"format":"tbm-checkpoint","version":1,
//!  "config":{"<dotted key>":"<value>",...},      resolved run configuration
//!  "model":{"encoder":{...},"intent":{...},"ablation":{...}},
//!  "vocab":{"min_freq":N,"tokens":[...]},
//!  "vocab_hash":"<sha256 hex>",
//!  "knowledge":["<none>",...],
//!  "params":[{"name":...,"shape":[...],"data":[...]},...]}
//! ```
//!
//! Floats are written in shortest round-trip form, so save → load → save
//! reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tbm_autodiff::Tensor;

use crate::data::{KnowledgeVocab, Vocab};
use crate::model::{ModelConfig, TbmModel};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "tbm-checkpoint";
pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct VocabRecord {
    min_freq: usize,
    tokens: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointRecord {
    format: String,
    version: u64,
    config: BTreeMap<String, String>,
    model: ModelConfig,
    vocab: VocabRecord,
    vocab_hash: String,
    knowledge: Vec<String>,
    params: Vec<ParamRecord>,
}

/// A model together with the run configuration that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: TbmModel,
    pub config: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let m = &self.model;
        if let Some((p, _)) = m.params.values().iter().enumerate().find(|(_, t)| !t.is_finite()) {
            return Err(Error::Invalid(format!(
                "parameter `{}` is not finite",
                m.params.names()[p]
            )));
        }
        let record = CheckpointRecord {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            model: m.config,
            vocab: VocabRecord {
                min_freq: m.vocab.min_freq(),
                tokens: m.vocab.tokens().to_vec(),
            },
            vocab_hash: m.vocab.hash(),
            knowledge: m.knowledge.elements().to_vec(),
            params: m
                .params
                .names()
                .iter()
                .zip(m.params.values())
                .map(|(name, t)| ParamRecord {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        };
        let mut out = serde_json::to_string(&record)?;
        out.push('\n');
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let header: serde_json::Value = serde_json::from_str(text)?;
        if header.get("format").and_then(|f| f.as_str()) != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Invalid("not a checkpoint file".into()));
        }
        let version = header.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                what: "checkpoint",
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let record: CheckpointRecord = serde_json::from_value(header)?;
        let vocab = Vocab::from_parts(record.vocab.tokens, record.vocab.min_freq)?;
        if vocab.hash() != record.vocab_hash {
            return Err(Error::VocabMismatch {
                expected: record.vocab_hash,
                found: vocab.hash(),
            });
        }
        let knowledge = KnowledgeVocab::from_parts(record.knowledge)?;
        let mut model = TbmModel::new(record.model, vocab, knowledge, 0)?;
        if record.params.len() != model.params.len() {
            return Err(Error::Invalid(format!(
                "checkpoint holds {} parameters, model expects {}",
                record.params.len(),
                model.params.len()
            )));
        }
        for (k, p) in record.params.into_iter().enumerate() {
            let expected_name = &model.params.names()[k];
            let expected_shape = model.params.values()[k].shape();
            if &p.name != expected_name || p.shape != expected_shape {
                return Err(Error::Invalid(format!(
                    "parameter {k}: found `{}` {:?}, expected `{expected_name}` {expected_shape:?}",
                    p.name, p.shape
                )));
            }
            model.params.values_mut()[k] = Tensor::new(p.shape, p.data)?;
        }
        Ok(Checkpoint {
            model,
            config: record.config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::{small_config, toy_context, toy_model};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn checkpoint(seed: u64) -> Checkpoint {
        let mut cfg = small_config();
        cfg.ablation.disable_copy = true;
        let (mut model, _) = toy_model(cfg, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in model.params.values_mut() {
            *p = Tensor::uniform(p.shape(), 3.7, &mut rng);
        }
        let mut config = BTreeMap::new();
        config.insert("train.seed".to_string(), seed.to_string());
        Checkpoint { model, config }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let ck = checkpoint(1);
        let text = ck.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ck);
        assert!(back.model.config.ablation.disable_copy);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn loaded_model_scores_identically() {
        let ck = checkpoint(2);
        let (_, target) = toy_model(small_config(), 2);
        let prep = ck.model.prepare(&toy_context(), Some(&target), 40).unwrap();
        let before = ck.model.nll(&prep).unwrap();
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        let after = back.model.nll(&prep).unwrap();
        assert!((before - after).abs() <= 1e-12);
    }

    #[test]
    fn corrupted_and_foreign_files_are_rejected() {
        let text = checkpoint(3).to_json().unwrap();
        assert!(Checkpoint::from_json(&text[..text.len() / 2]).is_err());
        assert!(Checkpoint::from_json("{\"format\":\"other\"}").is_err());
        let bumped = text.replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(
            Checkpoint::from_json(&bumped),
            Err(Error::Version { found: 2, .. })
        ));
        let renamed = text.replacen("encoder.word_emb", "encoder.other", 1);
        assert!(Checkpoint::from_json(&renamed).is_err());
    }

    #[test]
    fn non_finite_parameters_are_not_written() {
        let mut ck = checkpoint(4);
        ck.model.params.values_mut()[0].data_mut()[0] = f64::NAN;
        assert!(ck.to_json().is_err());
    }
}
