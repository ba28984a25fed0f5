//! Context-aware sequence-to-sequence dialogue generation.
//!
//! A text CNN trained to tag dialogue acts supplies its pre-softmax hidden
//! layer as a conversation-context vector. That vector is averaged over the
//! preceding exchanges and fused into the attention keys of a bidirectional
//! LSTM encoder / Luong-attention decoder.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod da_encoder;
pub mod dialogue_state;
pub mod engine;
pub mod error;
pub mod history;
pub mod metrics;
pub mod pipeline;
pub mod seq2seq;

pub use error::{Error, Result};
