use css_api::{DecodeKnobs, MessageResponse, Strategy, Transcript, TranscriptEntry};
use css_core::dialogue_state::{DialogueState, Speaker};
use css_core::engine::{ActPrediction, Reply};
use css_core::seq2seq::{DecodeConfig, DecodeStrategy};

use crate::error::ApiError;

pub fn decode_config(k: DecodeKnobs) -> Result<DecodeConfig, ApiError> {
    let cfg = DecodeConfig {
        strategy: match k.strategy {
            Strategy::Greedy => DecodeStrategy::Greedy,
            Strategy::Beam => DecodeStrategy::Beam,
        },
        beam_width: k.beam_width,
        length_penalty: k.length_penalty,
        chosen_beam: k.chosen_beam,
    };
    cfg.validate()
        .map_err(|e| ApiError::BadRequest(e.to_string()))?;
    Ok(cfg)
}

pub fn act(p: &ActPrediction) -> css_api::ActPrediction {
    css_api::ActPrediction {
        label: p.label.name().into(),
        probs: p.probs.clone(),
    }
}

pub fn message_response(r: Reply) -> MessageResponse {
    MessageResponse {
        response: r.response,
        user_act: r.user_act.as_ref().map(act),
        beams: r
            .beams
            .into_iter()
            .map(|b| css_api::BeamText {
                text: b.text,
                logprob: b.logprob,
            })
            .collect(),
        chosen: r.chosen,
        context_norm: r.context_norm,
    }
}

pub fn transcript(session_id: String, state: &DialogueState) -> Transcript {
    let turns = state
        .transcript()
        .into_iter()
        .map(|e| TranscriptEntry {
            speaker: match e.speaker {
                Speaker::User => css_api::Speaker::User,
                Speaker::Bot => css_api::Speaker::Bot,
            },
            text: e.text,
            act: e.act.map(|a| a.name().to_string()),
            act_probs: e.act_probs,
        })
        .collect();
    Transcript { session_id, turns }
}
