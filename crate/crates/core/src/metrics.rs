//! Response length, unigram diversity and specificity aggregation, plus the
//! transcript replay protocol used to collect responses.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use log::warn;

use crate::corpus::{EOS_TOKEN, PAD_TOKEN};
use crate::dialogue_state::{DialogueState, TranscriptEntry};
use crate::error::{Error, Result};

/// Generated responses of one model, as token lists.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResponseSet {
    pub model: String,
    pub responses: Vec<Vec<String>>,
}

impl ResponseSet {
    pub fn new(model: impl Into<String>, responses: Vec<Vec<String>>) -> Self {
        ResponseSet {
            model: model.into(),
            responses,
        }
    }
}

fn is_content(token: &str) -> bool {
    token != EOS_TOKEN && token != PAD_TOKEN
}

fn content_len(resp: &[String]) -> usize {
    resp.iter().filter(|t| is_content(t)).count()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LengthStats {
    pub mean: f64,
    pub median: f64,
}

/// Mean and median token counts; the median of an even-sized set is the
/// mean of the two middle values.
pub fn length_stats(rs: &ResponseSet) -> Result<LengthStats> {
    if rs.responses.is_empty() {
        return Err(Error::Input(format!("{}: no responses", rs.model)));
    }
    let mut lens: Vec<usize> = rs.responses.iter().map(|r| content_len(r)).collect();
    lens.sort_unstable();
    let n = lens.len();
    let total: usize = lens.iter().sum();
    let median = if n % 2 == 1 {
        lens[n / 2] as f64
    } else {
        (lens[n / 2 - 1] + lens[n / 2]) as f64 / 2.0
    };
    Ok(LengthStats {
        mean: total as f64 / n as f64,
        median,
    })
}

/// `(distinct unigrams, total tokens)` across the whole set.
pub fn diversity_counts(rs: &ResponseSet) -> (usize, usize) {
    let mut seen = HashSet::new();
    let mut total = 0;
    for t in rs.responses.iter().flatten().filter(|t| is_content(t)) {
        seen.insert(t.as_str());
        total += 1;
    }
    (seen.len(), total)
}

/// Distinct unigrams over total generated tokens.
pub fn diversity(rs: &ResponseSet) -> Result<f64> {
    match diversity_counts(rs) {
        (_, 0) => Err(Error::Input(format!("{}: no generated tokens", rs.model))),
        (u, n) => Ok(u as f64 / n as f64),
    }
}

/// One score per line; blank lines are ignored.
pub fn parse_scores(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| Error::Input(format!("scores line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn load_scores(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores(&text)
}

/// Mean of externally computed specificity scores, one per response.
pub fn aggregate_specificity(rs: &ResponseSet, scores: &[f64]) -> Result<f64> {
    if scores.len() != rs.responses.len() {
        return Err(Error::Input(format!(
            "{} specificity scores for {} responses",
            scores.len(),
            rs.responses.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::Input(format!(
            "specificity score {bad} outside [0, 1]"
        )));
    }
    if scores.is_empty() {
        return Err(Error::Input("no specificity scores".into()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub model: String,
    pub median_len: f64,
    pub mean_len: f64,
    pub diversity: f64,
    pub mean_specificity: Option<f64>,
}

pub fn report(rs: &ResponseSet, scores: Option<&[f64]>) -> Result<MetricsReport> {
    let lens = length_stats(rs)?;
    Ok(MetricsReport {
        model: rs.model.clone(),
        median_len: lens.median,
        mean_len: lens.mean,
        diversity: diversity(rs)?,
        mean_specificity: scores.map(|s| aggregate_specificity(rs, s)).transpose()?,
    })
}

/// `model,median_len,mean_len,diversity,mean_specificity`; a missing
/// specificity leaves its column empty.
pub fn write_report_csv<W: Write>(w: W, reports: &[MetricsReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "model",
        "median_len",
        "mean_len",
        "diversity",
        "mean_specificity",
    ])?;
    for r in reports {
        out.write_record([
            r.model.clone(),
            r.median_len.to_string(),
            r.mean_len.to_string(),
            r.diversity.to_string(),
            r.mean_specificity
                .map(|s| s.to_string())
                .unwrap_or_default(),
        ])?;
    }
    out.flush()
        .map_err(|e| Error::Input(format!("writing report: {e}")))?;
    Ok(())
}

/// Conversations of user utterances: blank-line separated blocks, one
/// utterance per line.
pub fn parse_user_turns(text: &str) -> Vec<Vec<String>> {
    let mut convs = Vec::new();
    let mut cur = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            if !cur.is_empty() {
                convs.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push(line.to_string());
        }
    }
    if !cur.is_empty() {
        convs.push(cur);
    }
    convs
}

pub fn load_user_turns(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let convs = parse_user_turns(&text);
    if convs.is_empty() {
        return Err(Error::Input(format!(
            "{}: no conversations",
            path.display()
        )));
    }
    Ok(convs)
}

/// Anything that can continue a conversation by one bot turn.
pub trait Responder {
    fn new_state(&self) -> DialogueState;

    /// Pushes the user turn and the generated bot turn onto `state` and
    /// returns the response tokens.
    fn respond(&self, state: &mut DialogueState, user_text: &str) -> Result<Vec<String>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Replay {
    pub responses: ResponseSet,
    pub transcripts: Vec<Vec<TranscriptEntry>>,
}

/// Feeds each conversation's user turns through a fresh state, one bot
/// response per user turn. Empty conversations are skipped.
pub fn replay_transcripts<R: Responder + ?Sized>(
    model: &str,
    conversations: &[Vec<String>],
    responder: &R,
) -> Result<Replay> {
    let mut responses = Vec::new();
    let mut transcripts = Vec::new();
    for (i, conv) in conversations.iter().enumerate() {
        if conv.is_empty() {
            warn!("conversation {} is empty, skipped", i + 1);
            continue;
        }
        let mut state = responder.new_state();
        for utt in conv {
            responses.push(responder.respond(&mut state, utt)?);
        }
        transcripts.push(state.transcript());
    }
    Ok(Replay {
        responses: ResponseSet::new(model, responses),
        transcripts,
    })
}

/// Filled transcripts: blank-line separated blocks of `speaker<TAB>text`.
pub fn write_transcripts<W: Write>(
    mut w: W,
    transcripts: &[Vec<TranscriptEntry>],
) -> std::io::Result<()> {
    for (i, t) in transcripts.iter().enumerate() {
        if i > 0 {
            writeln!(w)?;
        }
        for e in t {
            let who = match e.speaker {
                crate::dialogue_state::Speaker::User => "user",
                crate::dialogue_state::Speaker::Bot => "bot",
            };
            writeln!(w, "{who}\t{}", e.text)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue_state::{ContextPolicy, Speaker};
    use proptest::prelude::*;

    fn rs(responses: &[&str]) -> ResponseSet {
        ResponseSet::new(
            "m",
            responses
                .iter()
                .map(|r| r.split_whitespace().map(String::from).collect())
                .collect(),
        )
    }

    #[test]
    fn length_examples() {
        let s = length_stats(&rs(&["a b c d e f"; 3])).unwrap();
        assert_eq!((s.mean, s.median), (6.0, 6.0));
        let s = length_stats(&rs(&["a b", "a b c d"])).unwrap();
        assert_eq!((s.mean, s.median), (3.0, 3.0));
        assert!(length_stats(&rs(&[])).is_err());
        let s = length_stats(&rs(&["a b <eos>"])).unwrap();
        assert_eq!(s.mean, 2.0);
    }

    #[test]
    fn diversity_examples() {
        assert_eq!(diversity(&rs(&["a a", "a a a"])).unwrap(), 1.0 / 5.0);
        assert_eq!(diversity(&rs(&["a b", "c d"])).unwrap(), 1.0);
        assert_eq!(diversity(&rs(&["a b", "a c"])).unwrap(), 0.75);
        assert!(diversity(&rs(&["<eos>", ""])).is_err());
    }

    #[test]
    fn specificity_examples() {
        let set = rs(&["a", "b"]);
        assert_eq!(aggregate_specificity(&set, &[0.5, 0.5]).unwrap(), 0.5);
        assert!(aggregate_specificity(&set, &[0.5, 1.2]).is_err());
        assert!(aggregate_specificity(&set, &[0.5]).is_err());
        assert_eq!(parse_scores("0.25\n\n0.75\n").unwrap(), vec![0.25, 0.75]);
        assert!(parse_scores("x").is_err());
    }

    #[test]
    fn report_csv_leaves_missing_specificity_empty() {
        let set = rs(&["a b", "a c"]);
        let reports = vec![
            report(&set, None).unwrap(),
            report(
                &ResponseSet::new("n", set.responses.clone()),
                Some(&[0.5, 0.25]),
            )
            .unwrap(),
        ];
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &reports).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "model,median_len,mean_len,diversity,mean_specificity\nm,2,2,0.75,\nn,2,2,0.75,0.375\n"
        );
    }

    #[test]
    fn user_turn_blocks() {
        let convs = parse_user_turns("hi\nhow are you?\n\n\nbye\n");
        assert_eq!(
            convs,
            vec![
                vec!["hi".to_string(), "how are you?".into()],
                vec!["bye".into()]
            ]
        );
        assert!(parse_user_turns("\n\n").is_empty());
    }

    struct Echo;

    impl Responder for Echo {
        fn new_state(&self) -> DialogueState {
            DialogueState::new(ContextPolicy::default(), 2)
        }

        fn respond(&self, state: &mut DialogueState, user_text: &str) -> Result<Vec<String>> {
            state.push_analyzed(Speaker::User, user_text, None, None)?;
            let n = state.len();
            state.push_analyzed(Speaker::Bot, &format!("reply {n}"), None, None)?;
            Ok(vec!["reply".into(), n.to_string()])
        }
    }

    #[test]
    fn replay_one_response_per_user_turn() {
        let convs = vec![
            vec!["hello".to_string()],
            vec![],
            vec!["a".into(), "b".into()],
        ];
        let out = replay_transcripts("echo", &convs, &Echo).unwrap();
        assert_eq!(out.responses.responses.len(), 3);
        assert_eq!(out.transcripts.len(), 2);
        assert_eq!(out.transcripts[1].len(), 4);
        assert_eq!(out.responses.responses[2], vec!["reply", "3"]);
        let mut buf = Vec::new();
        write_transcripts(&mut buf, &out.transcripts).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "user\thello\nbot\treply 1\n\nuser\ta\nbot\treply 1\nuser\tb\nbot\treply 3\n"
        );
    }

    proptest! {
        #[test]
        fn appending_seen_tokens_never_raises_diversity(
            responses in proptest::collection::vec(proptest::collection::vec(0u8..6, 1..5), 1..10),
            pick in proptest::collection::vec(any::<prop::sample::Index>(), 1..5),
        ) {
            let to_rs = |r: &Vec<Vec<u8>>| ResponseSet::new("p", r.iter().map(|x| x.iter().map(|t| t.to_string()).collect()).collect());
            let before = diversity(&to_rs(&responses)).unwrap();
            let seen: Vec<u8> = responses.iter().flatten().copied().collect();
            let extra: Vec<u8> = pick.iter().map(|i| seen[i.index(seen.len())]).collect();
            let mut grown = responses.clone();
            grown.push(extra);
            prop_assert!(diversity(&to_rs(&grown)).unwrap() <= before);
            let (u, n) = diversity_counts(&to_rs(&responses));
            prop_assert_eq!(u == n, before == 1.0);
        }
    }
}
