use std::path::{Path, PathBuf};

use clap::Args;
use css_core::config::RunConfig;
use css_core::corpus::{CornellCorpus, SwdaColumns, SwdaCorpus, TagMapping};
use css_core::da_encoder::{evaluate_da, train_da as fit_da, DaEncoder};
use css_core::history::Split;
use css_core::pipeline::{da_dataset, seq2seq_dataset};
use css_core::seq2seq::{train_seq2seq as fit_seq2seq, Mode, Seq2Seq};

use crate::{CliResult, Failure, ModeArg};

#[derive(Args)]
pub struct TrainDa {
    /// Directory of per-conversation CSV files.
    #[arg(long)]
    swda: PathBuf,
    /// Raw tag to class table; the bundled one by default.
    #[arg(long)]
    mapping: Option<PathBuf>,
    #[arg(long, default_value = "da.ckpt")]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    /// Per-epoch losses; `<out>.loss.csv` by default.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// Validation confusion matrix; `<out>.confusion.csv` by default.
    #[arg(long)]
    confusion_csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainSeq2seq {
    /// `movie_lines.txt`-style utterance file.
    #[arg(long)]
    lines: PathBuf,
    /// `movie_conversations.txt`-style conversation file.
    #[arg(long)]
    conversations: PathBuf,
    /// Overrides the configured mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Overrides the configured baseline2 window.
    #[arg(long)]
    window: Option<usize>,
    /// Trained context model; required in css mode.
    #[arg(long)]
    da_ckpt: Option<PathBuf>,
    #[arg(long, default_value = "seq2seq.ckpt")]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    /// Per-epoch losses; `<out>.loss.csv` by default.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

pub fn train_da(run: &RunConfig, args: &TrainDa) -> CliResult {
    let mapping = match &args.mapping {
        Some(path) => TagMapping::load(path)?,
        None => TagMapping::default(),
    };
    let corpus = SwdaCorpus::load(&args.swda, &SwdaColumns::default())?;
    if corpus.skipped_rows > 0 {
        log::warn!("{} rows without text or tag skipped", corpus.skipped_rows);
    }
    let data = da_dataset(&corpus, &mapping, run)?;
    let mut cfg = run.da_train.clone();
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    let mut model = DaEncoder::new(run.da.clone(), data.vocab, run.seed)?;
    let history = fit_da(&mut model, &data.train, &data.validation, &cfg)?;

    model
        .to_checkpoint()
        .with_run(run.to_value())
        .save(&args.out)?;
    let loss_csv = args
        .loss_csv
        .clone()
        .unwrap_or_else(|| sibling(&args.out, ".loss.csv"));
    history.save_csv(&loss_csv, true)?;
    let held_out = if data.validation.is_empty() {
        &data.train
    } else {
        &data.validation
    };
    let (acc, cm) = evaluate_da(&model, held_out)?;
    let confusion = args
        .confusion_csv
        .clone()
        .unwrap_or_else(|| sibling(&args.out, ".confusion.csv"));
    cm.save_csv(&confusion)?;

    let split = if data.validation.is_empty() {
        "train"
    } else {
        "validation"
    };
    println!(
        "trained on {} utterances; {split} accuracy {acc:.4}; saved {}",
        data.train.len(),
        args.out.display()
    );
    Ok(())
}

pub fn train_seq2seq(mut run: RunConfig, args: &TrainSeq2seq) -> CliResult {
    if let Some(m) = args.mode {
        run.seq2seq.mode = m.into();
    }
    if let Some(w) = args.window {
        run.seq2seq.window = w;
    }
    if let Some(e) = args.epochs {
        run.seq2seq_train.epochs = e;
    }
    run.validate()?;
    let mode = run.seq2seq.mode;
    let da = match (mode, &args.da_ckpt) {
        (Mode::Css, None) => {
            return Err(Failure::usage(
                "css mode needs --da-ckpt (a trained context model)",
            ))
        }
        (Mode::Css, Some(p)) => Some(DaEncoder::load(p, Some(&run.da))?),
        (_, Some(_)) => {
            log::warn!("--da-ckpt ignored in {mode} mode");
            None
        }
        _ => None,
    };
    let corpus = CornellCorpus::load(&args.lines, &args.conversations)?;
    let data = seq2seq_dataset(&corpus, &run, da.as_ref())?;
    let mut model = Seq2Seq::new(run.seq2seq.clone(), data.vocab, run.seed)?;
    let history = fit_seq2seq(
        &mut model,
        &data.train.pairs,
        &data.train.contexts,
        &data.validation.pairs,
        &data.validation.contexts,
        &run.seq2seq_train,
    )?;

    model
        .to_checkpoint()
        .with_run(run.to_value())
        .save(&args.out)?;
    let loss_csv = args
        .loss_csv
        .clone()
        .unwrap_or_else(|| sibling(&args.out, ".loss.csv"));
    history.save_csv(&loss_csv, false)?;

    let last = |s| {
        history
            .last(s)
            .map(|r| format!("{:.4}", r.loss))
            .unwrap_or_else(|| "-".into())
    };
    println!(
        "{mode}: {} training pairs; train loss {}, validation loss {}; saved {}",
        data.train.pairs.len(),
        last(Split::Train),
        last(Split::Validation),
        args.out.display()
    );
    Ok(())
}
