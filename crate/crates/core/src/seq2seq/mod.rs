//! Bidirectional-LSTM encoder and Luong-attention decoder with optional
//! conversation-context fusion of the attention keys.

mod decode;
mod model;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use decode::{Beam, BeamOutput, DecodeConfig, DecodeStrategy};
pub use model::{DecoderState, EncoderStates, FusedKeys, Seq2Seq};
pub use train::{train_seq2seq, validation_loss, Seq2SeqTrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Current utterance only, no context.
    Baseline1,
    /// A window of previous utterances joined with `<sep>`, no context.
    Baseline2,
    /// Current utterance plus the averaged context vector.
    Css,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline1 => "baseline1",
            Mode::Baseline2 => "baseline2",
            Mode::Css => "css",
        }
    }

    pub fn uses_context(self) -> bool {
        self == Mode::Css
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline1" => Ok(Mode::Baseline1),
            "baseline2" => Ok(Mode::Baseline2),
            "css" => Ok(Mode::Css),
            _ => Err(Error::Config(format!(
                "unknown mode {s:?} (expected baseline1, baseline2 or css)"
            ))),
        }
    }
}

/// What the decoder attends over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKeys {
    /// The fused state‖context vectors after the reducing feed-forward layer.
    Reduced,
    /// The raw state‖context concatenation.
    Concat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seq2SeqConfig {
    pub mode: Mode,
    pub embed_dim: usize,
    /// Per direction; encoder states are twice this.
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    pub context_dim: usize,
    pub max_in_len: usize,
    pub max_out_len: usize,
    pub attention_keys: AttentionKeys,
    /// Utterances joined into the input in baseline2 mode.
    pub window: usize,
    pub mask_unk: bool,
}

impl Default for Seq2SeqConfig {
    fn default() -> Self {
        Seq2SeqConfig {
            mode: Mode::Css,
            embed_dim: 128,
            encoder_hidden: 256,
            decoder_hidden: 256,
            context_dim: 512,
            max_in_len: 50,
            max_out_len: 50,
            attention_keys: AttentionKeys::Reduced,
            window: 2,
            mask_unk: true,
        }
    }
}

impl Seq2SeqConfig {
    pub fn state_dim(&self) -> usize {
        2 * self.encoder_hidden
    }

    /// Width of an encoder state concatenated with the context vector.
    pub fn fused_dim(&self) -> usize {
        self.state_dim() + self.context_dim
    }

    pub fn key_dim(&self) -> usize {
        match self.attention_keys {
            AttentionKeys::Reduced => self.decoder_hidden,
            AttentionKeys::Concat => self.fused_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [
            self.embed_dim,
            self.encoder_hidden,
            self.decoder_hidden,
            self.context_dim,
            self.max_in_len,
            self.max_out_len,
            self.window,
        ]
        .contains(&0)
        {
            return Err(Error::Config(
                "seq2seq dimensions and lengths must be positive".into(),
            ));
        }
        Ok(())
    }
}
