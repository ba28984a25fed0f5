//! Reader for the speaker-aligned movie-dialogue format: a lines file and a
//! conversations file, fields separated by ` +++$+++ `.

use std::collections::HashMap;
use std::path::Path;

use log::warn;

use super::tokenize::tokenize;
use crate::error::{Error, Result};

pub const DELIMITER: &str = " +++$+++ ";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conversation {
    pub id: usize,
    /// Utterance texts in speaking order.
    pub turns: Vec<String>,
}

/// An adjacent (utterance, response) pair, still as tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextPair {
    pub conversation: usize,
    pub turn: usize,
    pub utterance: Vec<String>,
    pub response: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub malformed_lines: usize,
    pub malformed_conversations: usize,
    pub unresolved_ids: usize,
}

#[derive(Clone, Debug, Default)]
pub struct CornellCorpus {
    pub conversations: Vec<Conversation>,
    pub stats: ParseStats,
}

impl CornellCorpus {
    pub fn load(lines_file: &Path, conversations_file: &Path) -> Result<Self> {
        let lines = read_lossy(lines_file)?;
        let convs = read_lossy(conversations_file)?;
        Ok(Self::parse(&lines, &convs))
    }

    pub fn parse(lines_text: &str, conversations_text: &str) -> Self {
        let mut stats = ParseStats::default();
        let mut by_id: HashMap<&str, &str> = HashMap::new();
        for (n, row) in lines_text.lines().enumerate() {
            if row.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = row.split(DELIMITER).collect();
            if fields.len() != 5 {
                warn!("lines row {}: {} fields, expected 5", n + 1, fields.len());
                stats.malformed_lines += 1;
                continue;
            }
            by_id.insert(fields[0].trim(), fields[4].trim_end_matches(['\r', '\n']));
        }

        let mut conversations = Vec::new();
        for (n, row) in conversations_text.lines().enumerate() {
            if row.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = row.split(DELIMITER).collect();
            let Some(ids) = fields
                .last()
                .and_then(|f| parse_id_list(f))
                .filter(|_| fields.len() == 4)
            else {
                warn!("conversations row {}: malformed", n + 1);
                stats.malformed_conversations += 1;
                continue;
            };
            // An unresolvable id splits the conversation so no pair spans the gap.
            let mut turns = Vec::new();
            for id in ids {
                match by_id.get(id.as_str()) {
                    Some(text) => turns.push(text.to_string()),
                    None => {
                        warn!("conversations row {}: unknown line id {id}", n + 1);
                        stats.unresolved_ids += 1;
                        if !turns.is_empty() {
                            conversations.push(Conversation {
                                id: conversations.len(),
                                turns: std::mem::take(&mut turns),
                            });
                        }
                    }
                }
            }
            if !turns.is_empty() {
                conversations.push(Conversation {
                    id: conversations.len(),
                    turns,
                });
            }
        }
        CornellCorpus {
            conversations,
            stats,
        }
    }

    /// Every adjacent pair of turns within a conversation.
    pub fn pairs(&self) -> Vec<TextPair> {
        let mut out = Vec::new();
        for c in &self.conversations {
            let toks: Vec<Vec<String>> = c.turns.iter().map(|t| tokenize(t)).collect();
            for (i, w) in toks.windows(2).enumerate() {
                out.push(TextPair {
                    conversation: c.id,
                    turn: i,
                    utterance: w[0].clone(),
                    response: w[1].clone(),
                });
            }
        }
        out
    }
}

/// `['L1', 'L2']` → `["L1", "L2"]`.
fn parse_id_list(field: &str) -> Option<Vec<String>> {
    let inner = field.trim().strip_prefix('[')?.strip_suffix(']')?;
    let ids: Vec<String> = inner
        .split(',')
        .map(|s| s.trim().trim_matches(['\'', '"']).to_string())
        .filter(|s| !s.is_empty())
        .collect();
    (!ids.is_empty()).then_some(ids)
}

fn read_lossy(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINES: &str = "L1 +++$+++ u0 +++$+++ m0 +++$+++ BIANCA +++$+++ Hi there.\n\
L2 +++$+++ u1 +++$+++ m0 +++$+++ CAMERON +++$+++ Hello, how are you?\n\
L3 +++$+++ u0 +++$+++ m0 +++$+++ BIANCA +++$+++ Fine.\n\
L4 +++$+++ u0 +++$+++ only three\n";

    #[test]
    fn three_line_conversation_gives_two_pairs() {
        let convs = "u0 +++$+++ u1 +++$+++ m0 +++$+++ ['L1', 'L2', 'L3']\n";
        let c = CornellCorpus::parse(LINES, convs);
        let pairs = c.pairs();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].utterance, ["hi", "there", "."]);
        assert_eq!(pairs[1].response, ["fine", "."]);
        assert_eq!(pairs[1].turn, 1);
    }

    #[test]
    fn short_row_is_counted() {
        let c = CornellCorpus::parse(LINES, "");
        assert_eq!(c.stats.malformed_lines, 1);
    }

    #[test]
    fn unknown_id_splits_conversation() {
        let convs = "u0 +++$+++ u1 +++$+++ m0 +++$+++ ['L1', 'L9', 'L2', 'L3']\n\
bad row\n";
        let c = CornellCorpus::parse(LINES, convs);
        assert_eq!(c.stats.unresolved_ids, 1);
        assert_eq!(c.stats.malformed_conversations, 1);
        assert_eq!(c.conversations.len(), 2);
        assert_eq!(c.pairs().len(), 1);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = CornellCorpus::load(Path::new("/nonexistent/l"), Path::new("/nonexistent/c"))
            .unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
