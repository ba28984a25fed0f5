//! Corpus-to-dataset glue shared by the training and evaluation commands.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::corpus::{
    tokenize, window_concat, CornellCorpus, DialoguePair, SwdaCorpus, TagMapping, TokenSequence,
    Vocabulary, SEP_TOKEN,
};
use crate::da_encoder::{ContextVector, DaEncoder, LabeledUtterance};
use crate::dialogue_state::conversation_contexts;
use crate::error::{Error, Result};
use crate::seq2seq::Mode;

/// Held-out conversation keys: a seeded shuffle, then the first
/// `round(n * fraction)` (at least one when `fraction > 0` and `n ≥ 2`).
pub fn split_conversations<K: Ord + Clone>(keys: &[K], fraction: f64, seed: u64) -> BTreeSet<K> {
    let unique: Vec<K> = keys
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = unique.len();
    if fraction <= 0.0 || n < 2 {
        return BTreeSet::new();
    }
    let take = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut order = unique;
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.into_iter().take(take).collect()
}

pub struct DaDataset {
    pub vocab: Vocabulary,
    pub train: Vec<LabeledUtterance>,
    pub validation: Vec<LabeledUtterance>,
}

/// Condenses tags, splits by conversation and builds the vocabulary from
/// the training side only.
pub fn da_dataset(corpus: &SwdaCorpus, mapping: &TagMapping, run: &RunConfig) -> Result<DaDataset> {
    if corpus.utterances.is_empty() {
        return Err(Error::Input("dialogue-act corpus has no utterances".into()));
    }
    let convs: Vec<&str> = corpus
        .utterances
        .iter()
        .map(|u| u.conversation.as_str())
        .collect();
    let held = split_conversations(&convs, run.corpus.validation_fraction, run.seed);
    let (val, train): (Vec<_>, Vec<_>) = corpus
        .utterances
        .iter()
        .partition(|u| held.contains(u.conversation.as_str()));
    let vocab = Vocabulary::build(train.iter().map(|u| &u.tokens), run.corpus.da_vocab_size)?;
    let label = |u: &crate::corpus::TaggedUtterance| LabeledUtterance {
        tokens: vocab.encode(&u.tokens, run.da.max_len),
        label: mapping.condense(&u.act_tag),
    };
    let train = train.into_iter().map(label).collect();
    let validation = val.into_iter().map(label).collect();
    Ok(DaDataset {
        vocab,
        train,
        validation,
    })
}

#[derive(Default)]
pub struct PairSplit {
    pub pairs: Vec<DialoguePair>,
    /// One per pair in css mode, empty otherwise.
    pub contexts: Vec<ContextVector>,
}

pub struct Seq2SeqDataset {
    pub vocab: Vocabulary,
    pub train: PairSplit,
    pub validation: PairSplit,
}

/// Adjacent-turn pairs of every conversation, with inputs shaped for the
/// run's mode and, in css mode, the context a chat session would compute
/// before each response.
pub fn seq2seq_dataset(
    corpus: &CornellCorpus,
    run: &RunConfig,
    da: Option<&DaEncoder>,
) -> Result<Seq2SeqDataset> {
    let cfg = &run.seq2seq;
    let da = match (cfg.mode, da) {
        (Mode::Css, None) => {
            return Err(Error::Config(
                "css mode requires a context-model checkpoint".into(),
            ))
        }
        (Mode::Css, d) => d,
        _ => None,
    };
    let tokenized: Vec<(usize, Vec<Vec<String>>)> = corpus
        .conversations
        .iter()
        .filter(|c| c.turns.len() >= 2)
        .map(|c| (c.id, c.turns.iter().map(|t| tokenize(t)).collect()))
        .collect();
    if tokenized.is_empty() {
        return Err(Error::Input(
            "dialogue corpus has no conversation with two turns".into(),
        ));
    }
    let ids: Vec<usize> = tokenized.iter().map(|(id, _)| *id).collect();
    let held = split_conversations(&ids, run.corpus.validation_fraction, run.seed);
    let vocab = Vocabulary::build_with_reserved(
        tokenized
            .iter()
            .filter(|(id, _)| !held.contains(id))
            .flat_map(|(_, turns)| turns.iter()),
        run.corpus.vocab_size,
        &[SEP_TOKEN],
    )?;
    let sep = vocab.separator().expect("separator reserved");

    let mut train = PairSplit::default();
    let mut validation = PairSplit::default();
    for (id, turns) in &tokenized {
        let encoded: Vec<TokenSequence> = turns
            .iter()
            .map(|t| vocab.encode(t, cfg.max_in_len))
            .collect();
        let contexts = da
            .map(|d| conversation_contexts(d, turns, &run.context))
            .transpose()?;
        let split = if held.contains(id) {
            &mut validation
        } else {
            &mut train
        };
        for i in 0..turns.len() - 1 {
            let utterance = match cfg.mode {
                Mode::Baseline2 => window_concat(&encoded[..=i], cfg.window, sep, cfg.max_in_len),
                _ => encoded[i].clone(),
            };
            split.pairs.push(DialoguePair {
                utterance,
                response: vocab.encode(&turns[i + 1], cfg.max_out_len.saturating_sub(1)),
                conversation: *id,
                turn: i,
            });
            if let Some(ctx) = &contexts {
                split.contexts.push(ctx[i].clone());
            }
        }
    }
    Ok(Seq2SeqDataset {
        vocab,
        train,
        validation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::da_encoder::DaConfig;

    fn cornell() -> CornellCorpus {
        let lines = (1..=12)
            .map(|i| format!("L{i} +++$+++ u0 +++$+++ m0 +++$+++ A +++$+++ line number {i}"))
            .collect::<Vec<_>>()
            .join("\n");
        let convs = "u0 +++$+++ u1 +++$+++ m0 +++$+++ ['L1', 'L2', 'L3']\n\
                     u0 +++$+++ u1 +++$+++ m0 +++$+++ ['L4', 'L5']\n\
                     u0 +++$+++ u1 +++$+++ m0 +++$+++ ['L6', 'L7', 'L8', 'L9']\n\
                     u0 +++$+++ u1 +++$+++ m0 +++$+++ ['L10', 'L11', 'L12']";
        CornellCorpus::parse(&lines, convs)
    }

    fn run(mode: Mode) -> RunConfig {
        let mut r = RunConfig::default();
        r.seq2seq.mode = mode;
        r.seq2seq.context_dim = 6;
        r.da = DaConfig {
            embed_dim: 4,
            max_len: 8,
            windows: vec![2, 3],
            filters_per_window: 2,
            hidden_dim: 6,
            ..DaConfig::default()
        };
        r.corpus.validation_fraction = 0.25;
        r
    }

    #[test]
    fn split_is_seeded_and_bounded() {
        let keys: Vec<u32> = (0..10).collect();
        let a = split_conversations(&keys, 0.1, 3);
        assert_eq!(a.len(), 1);
        assert_eq!(a, split_conversations(&keys, 0.1, 3));
        assert!(split_conversations(&keys, 0.0, 3).is_empty());
        assert!(split_conversations(&[1u32], 0.5, 3).is_empty());
        assert_eq!(split_conversations(&keys, 0.99, 3).len(), 9);
    }

    #[test]
    fn pairs_cover_adjacent_turns_and_split_by_conversation() {
        let ds = seq2seq_dataset(&cornell(), &run(Mode::Baseline1), None).unwrap();
        let total = ds.train.pairs.len() + ds.validation.pairs.len();
        assert_eq!(total, 2 + 1 + 3 + 2);
        let train_convs: BTreeSet<usize> = ds.train.pairs.iter().map(|p| p.conversation).collect();
        assert!(ds
            .validation
            .pairs
            .iter()
            .all(|p| !train_convs.contains(&p.conversation)));
        assert!(ds.train.contexts.is_empty());
    }

    #[test]
    fn baseline2_inputs_join_the_window() {
        let ds = seq2seq_dataset(&cornell(), &run(Mode::Baseline2), None).unwrap();
        let sep = ds.vocab.separator().unwrap();
        let all = ds.train.pairs.iter().chain(&ds.validation.pairs);
        for p in all {
            let seps = p.utterance.ids().iter().filter(|&&t| t == sep).count();
            assert_eq!(seps, usize::from(p.turn > 0));
        }
    }

    #[test]
    fn css_needs_context_model_and_gets_one_context_per_pair() {
        let r = run(Mode::Css);
        assert!(matches!(
            seq2seq_dataset(&cornell(), &r, None),
            Err(Error::Config(_))
        ));
        let vocab = Vocabulary::build(vec![vec!["line", "number"]], 20).unwrap();
        let da = DaEncoder::new(r.da.clone(), vocab, 1).unwrap();
        let ds = seq2seq_dataset(&cornell(), &r, Some(&da)).unwrap();
        assert_eq!(ds.train.contexts.len(), ds.train.pairs.len());
        assert_eq!(ds.validation.contexts.len(), ds.validation.pairs.len());
        // Nothing precedes the first turn of a conversation.
        let first = ds.train.pairs.iter().position(|p| p.turn == 0).unwrap();
        assert!(ds.train.contexts[first].is_zero());
    }
}
