use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const SOS: usize = 2;
pub const EOS: usize = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const SOS_TOKEN: &str = "<sos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const SEP_TOKEN: &str = "<sep>";

const RESERVED: [&str; 4] = [PAD_TOKEN, UNK_TOKEN, SOS_TOKEN, EOS_TOKEN];

/// Token ↔ id table. Ids 0..4 are PAD, UNK, SOS, EOS; any extra reserved
/// words (such as `<sep>`) follow, then corpus tokens by descending
/// frequency with lexicographic tie-break.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    pub fn build<I, S>(corpus: I, max_size: usize) -> Result<Self>
    where
        I: IntoIterator,
        I::Item: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::build_with_reserved(corpus, max_size, &[])
    }

    pub fn build_with_reserved<I, S>(corpus: I, max_size: usize, extra: &[&str]) -> Result<Self>
    where
        I: IntoIterator,
        I::Item: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let reserved = RESERVED.len() + extra.len();
        if max_size < reserved + 1 {
            return Err(Error::Config(format!(
                "vocabulary max size {max_size} leaves no room beyond {reserved} reserved ids"
            )));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for sentence in corpus {
            for tok in sentence {
                *counts.entry(tok.as_ref().to_string()).or_default() += 1;
            }
        }
        let mut tokens: Vec<String> = RESERVED
            .iter()
            .chain(extra)
            .map(|s| s.to_string())
            .collect();
        for t in &tokens {
            counts.remove(t);
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        tokens.extend(ranked.into_iter().take(max_size - reserved).map(|(t, _)| t));
        Ok(Vocabulary::from(tokens))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn separator(&self) -> Option<usize> {
        self.id(SEP_TOKEN)
    }

    /// Maps tokens to ids (OOV → UNK), truncating to `max_len`. When the
    /// input ends in `<eos>` and has to be cut, the EOS is kept as the last id.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], max_len: usize) -> TokenSequence {
        let mut ids: Vec<usize> = tokens.iter().map(|t| self.id_or_unk(t.as_ref())).collect();
        if ids.len() > max_len {
            let ends_eos = ids.last() == Some(&EOS);
            ids.truncate(max_len);
            if ends_eos && max_len > 0 {
                ids[max_len - 1] = EOS;
            }
        }
        TokenSequence::new(ids)
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>> {
        ids.iter()
            .map(|&i| {
                self.token(i).map(str::to_string).ok_or_else(|| {
                    Error::Index(format!("token id {i} outside vocabulary of {}", self.len()))
                })
            })
            .collect()
    }

    /// Decodes generated ids for display: stops at EOS, drops PAD/SOS.
    pub fn render(&self, ids: &[usize]) -> Result<Vec<String>> {
        let content: Vec<usize> = ids
            .iter()
            .copied()
            .take_while(|&i| i != EOS)
            .filter(|&i| i != PAD && i != SOS)
            .collect();
        self.decode(&content)
    }
}

/// Integer-encoded utterance without padding.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence {
    ids: Vec<usize>,
}

impl TokenSequence {
    pub fn new(ids: Vec<usize>) -> Self {
        TokenSequence { ids }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Right-pads with PAD (or truncates) to exactly `len` ids.
    pub fn padded(&self, len: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.ids.iter().copied().take(len).collect();
        v.resize(len, PAD);
        v
    }

    /// Substitutes a lone UNK for an empty sequence.
    pub fn or_unk(self) -> Self {
        if self.ids.is_empty() {
            TokenSequence { ids: vec![UNK] }
        } else {
            self
        }
    }
}

impl From<Vec<usize>> for TokenSequence {
    fn from(ids: Vec<usize>) -> Self {
        TokenSequence::new(ids)
    }
}
