use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use css_core::config::RunConfig;
use css_core::metrics::{
    load_scores, load_user_turns, replay_transcripts, report, write_report_csv, write_transcripts,
};
use css_core::Error;

use crate::{load_engine, CliResult, Failure};

#[derive(Args)]
pub struct EvalArgs {
    /// User turns, one per line, conversations separated by blank lines.
    #[arg(long)]
    transcripts: PathBuf,
    /// `NAME=CHECKPOINT`; repeat to compare generators.
    #[arg(long = "model", required = true, value_parser = parse_named)]
    models: Vec<(String, PathBuf)>,
    /// Context model shared by every generator that needs one.
    #[arg(long)]
    da_ckpt: Option<PathBuf>,
    /// Report CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for the filled transcripts, one `<NAME>.txt` per model.
    #[arg(long)]
    transcripts_out: Option<PathBuf>,
    /// `NAME=FILE` of per-response scores in [0, 1]; a bare FILE when
    /// there is a single model.
    #[arg(long)]
    specificity_scores: Vec<String>,
}

fn parse_named(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => {
            Ok((name.to_string(), PathBuf::from(path)))
        }
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

fn score_files(args: &EvalArgs) -> CliResult<BTreeMap<String, PathBuf>> {
    let mut files = BTreeMap::new();
    for spec in &args.specificity_scores {
        let named = spec
            .split_once('=')
            .filter(|(name, _)| args.models.iter().any(|(m, _)| m == name));
        let (name, path) = match named {
            Some((name, path)) => (name.to_string(), PathBuf::from(path)),
            None if args.models.len() == 1 => (args.models[0].0.clone(), PathBuf::from(spec)),
            None => {
                return Err(Failure::usage(format!(
                    "--specificity-scores {spec:?} names no --model"
                )))
            }
        };
        if files.insert(name.clone(), path).is_some() {
            return Err(Failure::usage(format!("two score files for model {name}")));
        }
    }
    Ok(files)
}

pub fn eval(run: &RunConfig, args: &EvalArgs) -> CliResult {
    let mut seen = std::collections::BTreeSet::new();
    if let Some((dup, _)) = args.models.iter().find(|(n, _)| !seen.insert(n)) {
        return Err(Failure::usage(format!("model name {dup} given twice")));
    }
    let scores = score_files(args)?;
    let conversations = load_user_turns(&args.transcripts)?;
    if let Some(dir) = &args.transcripts_out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut reports = Vec::new();
    for (name, ckpt) in &args.models {
        let engine = load_engine(run, ckpt, args.da_ckpt.as_deref())?;
        let replay = replay_transcripts(name, &conversations, &engine)?;
        let s = scores.get(name).map(|p| load_scores(p)).transpose()?;
        reports.push(report(&replay.responses, s.as_deref())?);
        if let Some(dir) = &args.transcripts_out {
            let path = dir.join(format!("{name}.txt"));
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            write_transcripts(&mut w, &replay.transcripts)
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(&path, e))?;
        }
        log::info!("{name}: {} responses", replay.responses.responses.len());
    }

    match &args.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            write_report_csv(BufWriter::new(file), &reports)?;
        }
        None => write_report_csv(std::io::stdout().lock(), &reports)?,
    }
    Ok(())
}
