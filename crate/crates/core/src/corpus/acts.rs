use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The ten condensed dialogue-act classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DialogueAct {
    Accept,
    NonOpinionated,
    Backchannel,
    Opinionated,
    Question,
    Summarize,
    Reject,
    Conventional,
    NonVerbal,
    Other,
}

impl DialogueAct {
    pub const COUNT: usize = 10;

    pub const ALL: [DialogueAct; 10] = [
        DialogueAct::Accept,
        DialogueAct::NonOpinionated,
        DialogueAct::Backchannel,
        DialogueAct::Opinionated,
        DialogueAct::Question,
        DialogueAct::Summarize,
        DialogueAct::Reject,
        DialogueAct::Conventional,
        DialogueAct::NonVerbal,
        DialogueAct::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DialogueAct::Accept => "Accept",
            DialogueAct::NonOpinionated => "NonOpinionated",
            DialogueAct::Backchannel => "Backchannel",
            DialogueAct::Opinionated => "Opinionated",
            DialogueAct::Question => "Question",
            DialogueAct::Summarize => "Summarize",
            DialogueAct::Reject => "Reject",
            DialogueAct::Conventional => "Conventional",
            DialogueAct::NonVerbal => "NonVerbal",
            DialogueAct::Other => "Other",
        }
    }
}

impl fmt::Display for DialogueAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DialogueAct {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown dialogue-act class {s:?}")))
    }
}

pub const DEFAULT_TAG_MAP: &str = include_str!("../../data/tag_map.tsv");

/// Raw corpus tag → condensed class table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagMapping {
    table: HashMap<String, DialogueAct>,
}

impl Default for TagMapping {
    fn default() -> Self {
        Self::parse(DEFAULT_TAG_MAP).expect("bundled tag map is valid")
    }
}

impl TagMapping {
    /// Parses `raw_tag<TAB>ClassName` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (raw, class) = line.split_once('\t').ok_or_else(|| {
                Error::Config(format!(
                    "tag map line {}: expected raw_tag<TAB>ClassName",
                    n + 1
                ))
            })?;
            let act: DialogueAct = class.trim().parse().map_err(|_| {
                Error::Config(format!(
                    "tag map line {}: {:?} is not one of the 10 classes",
                    n + 1,
                    class.trim()
                ))
            })?;
            table.insert(raw.trim().to_string(), act);
        }
        Ok(TagMapping { table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Total: exact match, then the tag up to its first `^` or `(`, else `Other`.
    pub fn condense(&self, raw_tag: &str) -> DialogueAct {
        let tag = raw_tag.trim();
        if let Some(&a) = self.table.get(tag) {
            return a;
        }
        let base = tag.split(['^', '(']).next().unwrap_or("").trim();
        if !base.is_empty() {
            if let Some(&a) = self.table.get(base) {
                return a;
            }
        }
        DialogueAct::Other
    }
}

/// Histogram over the ten classes, in class order.
pub fn class_histogram(acts: impl IntoIterator<Item = DialogueAct>) -> [usize; DialogueAct::COUNT] {
    let mut h = [0; DialogueAct::COUNT];
    for a in acts {
        h[a.index()] += 1;
    }
    h
}
