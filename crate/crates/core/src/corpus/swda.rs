//! Switchboard dialogue-act CSVs: one file per conversation.

use std::path::{Path, PathBuf};

use log::warn;

use super::tokenize::tokenize;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwdaColumns {
    pub act_tag: String,
    pub text: String,
}

impl Default for SwdaColumns {
    fn default() -> Self {
        SwdaColumns {
            act_tag: "act_tag".into(),
            text: "text".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedUtterance {
    pub act_tag: String,
    pub tokens: Vec<String>,
    pub conversation: String,
    pub turn: usize,
}

#[derive(Clone, Debug, Default)]
pub struct SwdaCorpus {
    pub utterances: Vec<TaggedUtterance>,
    pub skipped_rows: usize,
}

impl SwdaCorpus {
    /// Reads every `*.csv` under `dir` (recursively, sorted by path).
    pub fn load(dir: &Path, columns: &SwdaColumns) -> Result<Self> {
        let mut files = Vec::new();
        collect_csvs(dir, &mut files)?;
        files.sort();
        let mut corpus = SwdaCorpus::default();
        for f in files {
            let conv = f
                .strip_prefix(dir)
                .unwrap_or(&f)
                .with_extension("")
                .to_string_lossy()
                .into_owned();
            let file = std::fs::File::open(&f).map_err(|e| Error::io(&f, e))?;
            corpus.read_conversation(file, &conv, columns)?;
        }
        Ok(corpus)
    }

    /// Appends one conversation's rows in file order.
    pub fn read_conversation<R: std::io::Read>(
        &mut self,
        reader: R,
        conversation: &str,
        columns: &SwdaColumns,
    ) -> Result<()> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h.trim() == name);
        let (Some(tag_col), Some(text_col)) = (col(&columns.act_tag), col(&columns.text)) else {
            return Err(Error::Input(format!(
                "conversation {conversation}: header lacks {:?} or {:?}",
                columns.act_tag, columns.text
            )));
        };
        let mut turn = 0;
        for (n, rec) in rdr.records().enumerate() {
            let rec = match rec {
                Ok(r) => r,
                Err(e) => {
                    warn!("{conversation} row {}: {e}", n + 2);
                    self.skipped_rows += 1;
                    continue;
                }
            };
            let (Some(tag), Some(text)) = (rec.get(tag_col), rec.get(text_col)) else {
                warn!("{conversation} row {}: missing columns", n + 2);
                self.skipped_rows += 1;
                continue;
            };
            let tokens = tokenize(&strip_disfluency(text));
            if tag.trim().is_empty() || tokens.is_empty() {
                self.skipped_rows += 1;
                continue;
            }
            self.utterances.push(TaggedUtterance {
                act_tag: tag.trim().to_string(),
                tokens,
                conversation: conversation.to_string(),
                turn,
            });
            turn += 1;
        }
        Ok(())
    }
}

fn collect_csvs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_csvs(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "csv") {
            out.push(path);
        }
    }
    Ok(())
}

/// Removes transcription markup.
///
/// `{F uh, }`-style brace groups keep their words and lose the markers;
/// `<...>` annotations are dropped, except that an utterance made only of
/// such annotations becomes a bracketed token (`<Laughter>.` → `[Laughter]`).
/// Repair brackets, `+`, `/`, `#` and `--` are removed.
pub fn strip_disfluency(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut annotations = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        match chars[i] {
            '{' => {
                // `{X` with a one-letter code.
                i += 1;
                if i < chars.len() && chars[i].is_ascii_uppercase() {
                    i += 1;
                }
            }
            '}' | '+' | '/' | '#' => i += 1,
            '[' | ']' => {
                out.push(' ');
                i += 1;
            }
            '-' if chars.get(i + 1) == Some(&'-') => i += 2,
            '<' => {
                let start = i;
                while i < chars.len() && chars[i] != '>' {
                    i += 1;
                }
                let body: String = chars[start..i.min(chars.len())]
                    .iter()
                    .filter(|c| **c != '<')
                    .collect();
                while i < chars.len() && chars[i] == '>' {
                    i += 1;
                }
                let body = body.trim();
                if !body.is_empty() && !body.contains(char::is_whitespace) {
                    annotations.push(body.to_string());
                }
                out.push(' ');
            }
            c => {
                out.push(c);
                i += 1;
            }
        }
    }
    let cleaned = out.split_whitespace().collect::<Vec<_>>().join(" ");
    let has_words = cleaned.chars().any(char::is_alphanumeric);
    if !has_words && !annotations.is_empty() {
        return format!("[{}]", annotations[0]);
    }
    cleaned
}
