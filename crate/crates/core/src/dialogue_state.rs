//! Rolling per-conversation state: transcript, cached per-turn context
//! vectors and the averaged context for the next response.

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, DialogueAct, TokenSequence};
use crate::da_encoder::{average_context, ContextVector, DaEncoder, DaOutput};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Bot,
}

/// What the context model encodes inside the window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// One vector per turn.
    Turn,
    /// One vector per exchange pair (both turns' tokens joined).
    Pair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContextPolicy {
    /// Exchange pairs in the window.
    pub pairs: usize,
    pub granularity: Granularity,
    /// Also average in the utterance being responded to.
    pub include_current: bool,
}

impl Default for ContextPolicy {
    fn default() -> Self {
        ContextPolicy {
            pairs: 2,
            granularity: Granularity::Turn,
            include_current: false,
        }
    }
}

/// Serialized transcript record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub speaker: Speaker,
    pub text: String,
    pub act: Option<DialogueAct>,
    pub act_probs: Option<Vec<f32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    pub tokens: Vec<String>,
    pub context: ContextVector,
    pub act: Option<DialogueAct>,
    pub act_probs: Option<Vec<f32>>,
}

impl Turn {
    pub fn entry(&self) -> TranscriptEntry {
        TranscriptEntry {
            speaker: self.speaker,
            text: self.text.clone(),
            act: self.act,
            act_probs: self.act_probs.clone(),
        }
    }
}

/// Context-model output for `text`, or `None` without a model.
pub fn analyze(da: Option<&DaEncoder>, text: &str) -> Result<Option<DaOutput>> {
    da.map(|m| m.forward_text(text)).transpose()
}

/// Mean over the window of the last `policy.pairs` exchange pairs of a
/// history, plus `current` when the policy includes it.
///
/// `pair_vectors[j]` belongs to turns `2j, 2j+1`; a trailing unpaired turn
/// stands in for its pair.
pub fn window_context(
    policy: &ContextPolicy,
    dim: usize,
    turn_vectors: &[&ContextVector],
    pair_vectors: &[&ContextVector],
    current: Option<&ContextVector>,
) -> Result<ContextVector> {
    let n = turn_vectors.len();
    let mut window: Vec<&ContextVector> = match policy.granularity {
        Granularity::Turn => turn_vectors[n.saturating_sub(2 * policy.pairs)..].to_vec(),
        Granularity::Pair => {
            if pair_vectors.len() < n / 2 {
                return Err(Error::Contract(format!(
                    "{} pair vectors for {n} turns",
                    pair_vectors.len()
                )));
            }
            let mut groups: Vec<&ContextVector> = pair_vectors[..n / 2].to_vec();
            if n % 2 == 1 {
                groups.push(turn_vectors[n - 1]);
            }
            groups[groups.len().saturating_sub(policy.pairs)..].to_vec()
        }
    };
    if policy.include_current {
        window.extend(current);
    }
    average_context(&window, dim)
}

/// Contexts for responding to each turn of one conversation, as a chat
/// session would compute them after those turns.
pub fn conversation_contexts(
    da: &DaEncoder,
    turns: &[Vec<String>],
    policy: &ContextPolicy,
) -> Result<Vec<ContextVector>> {
    let dim = da.hidden_dim();
    let seqs: Vec<TokenSequence> = turns
        .iter()
        .map(|t| da.vocab().encode(t, da.config().max_len))
        .collect();
    let turn_vecs: Vec<ContextVector> = da
        .forward_batch(&seqs)?
        .into_iter()
        .map(|o| o.hidden)
        .collect();
    let pair_vecs: Vec<ContextVector> = if policy.granularity == Granularity::Pair {
        let joined: Vec<TokenSequence> = turns
            .chunks_exact(2)
            .map(|p| {
                let tokens: Vec<&String> = p[0].iter().chain(&p[1]).collect();
                da.vocab().encode(&tokens, da.config().max_len)
            })
            .collect();
        da.forward_batch(&joined)?
            .into_iter()
            .map(|o| o.hidden)
            .collect()
    } else {
        Vec::new()
    };
    let tv: Vec<&ContextVector> = turn_vecs.iter().collect();
    let pv: Vec<&ContextVector> = pair_vecs.iter().collect();
    (0..turns.len())
        .map(|i| {
            let pairs = if pv.is_empty() { &[][..] } else { &pv[..i / 2] };
            window_context(policy, dim, &tv[..i], pairs, Some(tv[i]))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct DialogueState {
    policy: ContextPolicy,
    dim: usize,
    turns: Vec<Turn>,
    pair_vectors: Vec<ContextVector>,
}

impl DialogueState {
    pub fn new(policy: ContextPolicy, context_dim: usize) -> Self {
        DialogueState {
            policy,
            dim: context_dim,
            turns: Vec::new(),
            pair_vectors: Vec::new(),
        }
    }

    pub fn policy(&self) -> &ContextPolicy {
        &self.policy
    }

    pub fn context_dim(&self) -> usize {
        self.dim
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn reset(&mut self) {
        self.turns.clear();
        self.pair_vectors.clear();
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.turns.iter().map(Turn::entry).collect()
    }

    /// Token lists of all turns, oldest first.
    pub fn token_history(&self) -> Vec<&[String]> {
        self.turns.iter().map(|t| t.tokens.as_slice()).collect()
    }

    /// Runs the context model on `text` and appends the turn.
    pub fn push_turn(
        &mut self,
        speaker: Speaker,
        text: &str,
        da: Option<&DaEncoder>,
    ) -> Result<&Turn> {
        let analysis = analyze(da, text)?;
        self.push_analyzed(speaker, text, analysis, da)
    }

    /// Appends a turn whose context-model output was already computed.
    /// `da` is only consulted for the joined pair vector in pair mode.
    pub fn push_analyzed(
        &mut self,
        speaker: Speaker,
        text: &str,
        analysis: Option<DaOutput>,
        da: Option<&DaEncoder>,
    ) -> Result<&Turn> {
        let (context, act, act_probs) = match analysis {
            Some(out) => {
                if out.hidden.dim() != self.dim {
                    return Err(Error::Shape(format!(
                        "context vector of {} values, state expects {}",
                        out.hidden.dim(),
                        self.dim
                    )));
                }
                let act = out.act();
                (out.hidden, Some(act), Some(out.probs))
            }
            None => (ContextVector::zeros(self.dim), None, None),
        };
        let tokens = tokenize(text);
        if self.policy.granularity == Granularity::Pair && self.turns.len() % 2 == 1 {
            let prev = &self.turns[self.turns.len() - 1].tokens;
            let joined: Vec<&String> = prev.iter().chain(&tokens).collect();
            let v = match da {
                Some(m) => {
                    m.forward(&m.vocab().encode(&joined, m.config().max_len))?
                        .hidden
                }
                None => ContextVector::zeros(self.dim),
            };
            self.pair_vectors.push(v);
        }
        self.turns.push(Turn {
            speaker,
            text: text.to_string(),
            tokens,
            context,
            act,
            act_probs,
        });
        Ok(self.turns.last().expect("just pushed"))
    }

    /// Context for the next response; `current` is the vector of the
    /// utterance being answered if it is not yet pushed.
    pub fn context_for_next(&self, current: Option<&ContextVector>) -> Result<ContextVector> {
        let tv: Vec<&ContextVector> = self.turns.iter().map(|t| &t.context).collect();
        let pv: Vec<&ContextVector> = self.pair_vectors.iter().collect();
        window_context(&self.policy, self.dim, &tv, &pv, current)
    }

    /// Average over the last two exchange pairs of the stored turns.
    pub fn current_context(&self) -> ContextVector {
        self.context_for_next(None)
            .unwrap_or_else(|_| ContextVector::zeros(self.dim))
    }
}
