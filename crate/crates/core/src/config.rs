//! Run configuration: every tunable default in one JSON document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::da_encoder::{DaConfig, DaTrainConfig};
use crate::dialogue_state::ContextPolicy;
use crate::error::{Error, Result};
use crate::seq2seq::{DecodeConfig, Seq2SeqConfig, Seq2SeqTrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    /// Generator vocabulary size, reserved tokens included.
    pub vocab_size: usize,
    /// Context-model vocabulary size.
    pub da_vocab_size: usize,
    /// Share of conversations held out for validation.
    pub validation_fraction: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            vocab_size: 20_000,
            da_vocab_size: 20_000,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub da: DaConfig,
    pub da_train: DaTrainConfig,
    pub seq2seq: Seq2SeqConfig,
    pub seq2seq_train: Seq2SeqTrainConfig,
    pub context: ContextPolicy,
    pub decode: DecodeConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg.resolved())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Propagates the global seed into the training sections.
    pub fn resolved(mut self) -> Self {
        self.da_train.seed = self.seed;
        self.seq2seq_train.seed = self.seed;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.resolved()
    }

    pub fn validate(&self) -> Result<()> {
        self.da.validate()?;
        self.seq2seq.validate()?;
        self.seq2seq_train.batch.validate()?;
        self.decode.validate()?;
        if self.context.pairs == 0 {
            return Err(Error::Config(
                "context window needs at least one pair".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.corpus.validation_fraction) {
            return Err(Error::Config(format!(
                "validation_fraction {} outside [0, 1)",
                self.corpus.validation_fraction
            )));
        }
        if self.da.hidden_dim != self.seq2seq.context_dim {
            return Err(Error::Config(format!(
                "context model hidden size {} differs from the generator's context width {}",
                self.da.hidden_dim, self.seq2seq.context_dim
            )));
        }
        Ok(())
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_and_validate() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
        assert_eq!(cfg.decode.beam_width, 3);
        assert_eq!(cfg.decode.chosen_beam, 3);
        assert_eq!(cfg.seq2seq_train.batch.bucket_bounds, vec![10, 15, 25, 50]);
    }

    #[test]
    fn unknown_keys_rejected_at_any_depth() {
        assert!(RunConfig::from_json(r#"{"sed": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"da": {"embed": 3}}"#).is_err());
        assert!(
            RunConfig::from_json(r#"{"decode": {"beam_width": 2, "chosen_beam": 3}}"#).is_err()
        );
    }

    #[test]
    fn partial_file_keeps_defaults_and_seed_propagates() {
        let cfg = RunConfig::from_json(r#"{"seed": 7, "seq2seq": {"mode": "baseline1"}}"#).unwrap();
        assert_eq!(cfg.da_train.seed, 7);
        assert_eq!(cfg.seq2seq_train.seed, 7);
        assert_eq!(cfg.seq2seq.embed_dim, 128);
        assert_eq!(cfg.with_seed(9).seq2seq_train.seed, 9);
    }
}
