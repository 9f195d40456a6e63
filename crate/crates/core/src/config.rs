//! Flat `key=value` run configuration with dotted namespaces.
//!
//! ```text
//! # comment
//! model.d_h=32
//! train.mu=0.1
//! ablation.disable_copy=true
//! ```

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::model::{Ablation, ModelConfig};
use crate::train::TrainConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Minimum training-split frequency for a token to enter the vocabulary.
    pub min_freq: usize,
    pub decode_max_len: usize,
    pub decode_beam: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            min_freq: 2,
            decode_max_len: 40,
            decode_beam: 1,
        }
    }
}

fn parse<T>(key: &str, value: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

impl RunConfig {
    pub const KEYS: [&'static str; 19] = [
        "model.d_word",
        "model.d_role",
        "model.d_elem",
        "model.d_h",
        "model.d_intent",
        "model.d_role_transfer",
        "ablation.disable_intent_nav",
        "ablation.disable_role",
        "ablation.disable_knowledge",
        "ablation.disable_copy",
        "train.lambda",
        "train.mu",
        "train.epochs",
        "train.batch_size",
        "train.max_target_len",
        "train.seed",
        "data.min_freq",
        "decode.max_len",
        "decode.beam",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let e = &mut self.model.encoder;
        let t = &mut self.train;
        match key {
            "model.d_word" => e.d_word = parse(key, value)?,
            "model.d_role" => e.d_role = parse(key, value)?,
            "model.d_elem" => e.d_elem = parse(key, value)?,
            "model.d_h" => e.d_h = parse(key, value)?,
            "model.d_intent" => self.model.intent.d_intent = parse(key, value)?,
            "model.d_role_transfer" => self.model.intent.d_role_transfer = parse(key, value)?,
            "train.lambda" => t.lambda = parse(key, value)?,
            "train.mu" => t.mu = parse(key, value)?,
            "train.epochs" => t.epochs = parse(key, value)?,
            "train.batch_size" => t.batch_size = parse(key, value)?,
            "train.max_target_len" => t.max_target_len = parse(key, value)?,
            "train.seed" => t.seed = parse(key, value)?,
            "data.min_freq" => self.min_freq = parse(key, value)?,
            "decode.max_len" => self.decode_max_len = parse(key, value)?,
            "decode.beam" => self.decode_beam = parse(key, value)?,
            _ => match key.strip_prefix("ablation.") {
                Some(flag) if Ablation::NAMES.contains(&flag) => {
                    let on = parse(key, value)?;
                    self.model.ablation.set(flag, on);
                }
                _ => return Err(Error::UnknownConfigKey(key.to_string())),
            },
        }
        Ok(())
    }

    /// Applies every `key=value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key=value, found `{line}`"),
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut c = RunConfig::default();
        for (k, v) in map {
            c.set(k, v)?;
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.min_freq == 0 {
            return Err(Error::Config("data.min_freq must be at least 1".into()));
        }
        if self.decode_max_len == 0 || self.decode_beam == 0 {
            return Err(Error::Config(
                "decode.max_len and decode.beam must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let e = &self.model.encoder;
        let t = &self.train;
        Some(match key {
            "model.d_word" => e.d_word.to_string(),
            "model.d_role" => e.d_role.to_string(),
            "model.d_elem" => e.d_elem.to_string(),
            "model.d_h" => e.d_h.to_string(),
            "model.d_intent" => self.model.intent.d_intent.to_string(),
            "model.d_role_transfer" => self.model.intent.d_role_transfer.to_string(),
            "train.lambda" => t.lambda.to_string(),
            "train.mu" => t.mu.to_string(),
            "train.epochs" => t.epochs.to_string(),
            "train.batch_size" => t.batch_size.to_string(),
            "train.max_target_len" => t.max_target_len.to_string(),
            "train.seed" => t.seed.to_string(),
            "data.min_freq" => self.min_freq.to_string(),
            "decode.max_len" => self.decode_max_len.to_string(),
            "decode.beam" => self.decode_beam.to_string(),
            _ => self.model.ablation.get(key.strip_prefix("ablation.")?)?.to_string(),
        })
    }

    /// Every key with its resolved value.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        Self::KEYS
            .iter()
            .map(|k| (k.to_string(), self.get(k).expect("listed key")))
            .collect()
    }

    /// Resolved configuration as a config file, keys sorted.
    pub fn to_text(&self) -> String {
        self.to_map().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}
