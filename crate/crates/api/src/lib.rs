//! Request and response bodies of the `/v1` HTTP interface.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Greedy,
    #[default]
    Beam,
}

/// Decoding settings; missing fields take the service defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeKnobs {
    pub strategy: Strategy,
    pub beam_width: usize,
    pub length_penalty: f64,
    /// 1-based rank of the returned beam.
    pub chosen_beam: usize,
}

impl Default for DecodeKnobs {
    fn default() -> Self {
        DecodeKnobs {
            strategy: Strategy::Beam,
            beam_width: 3,
            length_penalty: 0.0,
            chosen_beam: 3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decode: Option<DecodeKnobs>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageRequest {
    pub text: String,
    /// Replaces the session's decode settings from this message on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decode: Option<DecodeKnobs>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActPrediction {
    pub label: String,
    pub probs: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamText {
    pub text: String,
    pub logprob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MessageResponse {
    pub response: String,
    /// Absent when the service runs without a context model.
    pub user_act: Option<ActPrediction>,
    /// Final beams, best first.
    pub beams: Vec<BeamText>,
    /// 0-based index of `response` within `beams`.
    pub chosen: usize,
    pub context_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Bot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub speaker: Speaker,
    pub text: String,
    pub act: Option<String>,
    pub act_probs: Option<Vec<f32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub session_id: String,
    pub turns: Vec<TranscriptEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyRequest {
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_mode: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
