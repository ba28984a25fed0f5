//! Tokenization, vocabulary, corpus readers and the batching pipeline.

mod acts;
mod batching;
pub mod cornell;
pub mod swda;
mod tokenize;
mod vocab;

pub use acts::{class_histogram, DialogueAct, TagMapping, DEFAULT_TAG_MAP};
pub use batching::{
    bucket_batches, bucket_for, window_concat, BatchConfig, Batches, BucketedBatch, DialoguePair,
    MAX_SEQ_LEN,
};
pub use cornell::{CornellCorpus, TextPair};
pub use swda::{SwdaColumns, SwdaCorpus, TaggedUtterance};
pub use tokenize::{detokenize, tokenize};
pub use vocab::{
    TokenSequence, Vocabulary, EOS, EOS_TOKEN, PAD, PAD_TOKEN, SEP_TOKEN, SOS, SOS_TOKEN, UNK,
    UNK_TOKEN,
};

/// Encodes text pairs; utterances keep up to `max_len` ids, responses up to
/// `max_len - 1` so the EOS step still fits.
pub fn encode_pairs(pairs: &[TextPair], vocab: &Vocabulary, max_len: usize) -> Vec<DialoguePair> {
    pairs
        .iter()
        .map(|p| DialoguePair {
            utterance: vocab.encode(&p.utterance, max_len),
            response: vocab.encode(&p.response, max_len.saturating_sub(1)),
            conversation: p.conversation,
            turn: p.turn,
        })
        .collect()
}
