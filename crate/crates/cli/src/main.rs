//! `css`: train the context model and the generators, evaluate them on
//! scripted conversations, serve them over HTTP, or chat with a service.

mod chat;
mod eval;
mod train;

use std::fmt;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use css_core::config::RunConfig;
use css_core::engine::ChatEngine;
use css_core::seq2seq::{DecodeStrategy, Mode};

#[derive(Parser)]
#[command(
    name = "css",
    version,
    about = "Context-aware sequence-to-sequence dialogue"
)]
struct Cli {
    /// JSON run configuration; omitted keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the dialogue-act model on a SwDA-style CSV directory.
    TrainDa(train::TrainDa),
    /// Train a response generator on Cornell-format dialogue files.
    TrainSeq2seq(train::TrainSeq2seq),
    /// Interactive chat, against a running service or an in-process one.
    Chat(chat::ChatArgs),
    /// Replay scripted conversations and write the metrics report.
    Eval(eval::EvalArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    seq2seq: PathBuf,
    /// Context-model checkpoint; required for css generators.
    #[arg(long)]
    da_ckpt: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Baseline1,
    Baseline2,
    Css,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Baseline1 => Mode::Baseline1,
            ModeArg::Baseline2 => Mode::Baseline2,
            ModeArg::Css => Mode::Css,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Greedy,
    Beam,
}

impl From<StrategyArg> for DecodeStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Greedy => DecodeStrategy::Greedy,
            StrategyArg::Beam => DecodeStrategy::Beam,
        }
    }
}

/// A message and the process exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    /// Bad invocation, configuration, input file or checkpoint.
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<css_core::Error> for Failure {
    fn from(e: css_core::Error) -> Self {
        use css_core::Error as E;
        let code = match e {
            E::Config(_)
            | E::Input(_)
            | E::Checkpoint(_)
            | E::Io { .. }
            | E::Csv(_)
            | E::Json(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<css_client::ClientError> for Failure {
    fn from(e: css_client::ClientError) -> Self {
        Failure::runtime(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

fn run_config(cli: &Cli) -> CliResult<RunConfig> {
    let run = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    Ok(match cli.seed {
        Some(seed) => run.with_seed(seed),
        None => run,
    })
}

pub fn load_engine(run: &RunConfig, seq2seq: &Path, da: Option<&Path>) -> CliResult<ChatEngine> {
    Ok(ChatEngine::load(run, seq2seq, da)?)
}

pub fn runtime() -> CliResult<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::runtime(format!("starting async runtime: {e}")))
}

fn serve(run: &RunConfig, args: &ServeArgs) -> CliResult {
    let engine = load_engine(run, &args.seq2seq, args.da_ckpt.as_deref())?;
    runtime()?.block_on(async {
        let listener = tokio::net::TcpListener::bind(args.addr)
            .await
            .map_err(|e| Failure::usage(format!("binding {}: {e}", args.addr)))?;
        let addr = listener
            .local_addr()
            .map_err(|e| Failure::runtime(e.to_string()))?;
        eprintln!("listening on http://{addr}");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        };
        css_service::serve(listener, engine, shutdown)
            .await
            .map_err(|e| Failure::runtime(format!("service stopped: {e}")))
    })
}

fn run(cli: Cli) -> CliResult {
    let run = run_config(&cli)?;
    match &cli.command {
        Command::TrainDa(args) => train::train_da(&run, args),
        Command::TrainSeq2seq(args) => train::train_seq2seq(run, args),
        Command::Chat(args) => chat::chat(&run, args, cli.config.is_some()),
        Command::Eval(args) => eval::eval(&run, args),
        Command::Serve(args) => serve(&run, args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
