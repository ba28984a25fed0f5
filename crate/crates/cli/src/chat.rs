use std::io::{IsTerminal, Write};
use std::path::PathBuf;

use clap::Args;
use css_client::{Client, DecodeKnobs, MessageResponse, Strategy};
use css_core::config::RunConfig;
use css_core::seq2seq::DecodeStrategy;
use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::sync::oneshot;

use crate::{load_engine, runtime, CliResult, Failure, StrategyArg};

#[derive(Args)]
pub struct ChatArgs {
    /// Base URL of a running service.
    #[arg(long, conflicts_with_all = ["seq2seq", "da_ckpt"])]
    url: Option<String>,
    /// Generator checkpoint for an in-process service.
    #[arg(long, required_unless_present = "url")]
    seq2seq: Option<PathBuf>,
    #[arg(long)]
    da_ckpt: Option<PathBuf>,
    #[arg(long, value_enum)]
    decode: Option<StrategyArg>,
    #[arg(long)]
    beam_width: Option<usize>,
    /// 1-based rank of the beam used as the reply.
    #[arg(long)]
    chosen_beam: Option<usize>,
    #[arg(long)]
    length_penalty: Option<f64>,
    /// Print the detected act, context norm and every beam.
    #[arg(long)]
    debug: bool,
}

impl ChatArgs {
    /// Session decode settings: the run config with flag overrides, or
    /// `None` (service defaults) when neither a config nor a flag is given.
    fn knobs(&self, run: &RunConfig, explicit_config: bool) -> CliResult<Option<DecodeKnobs>> {
        let any_flag = self.decode.is_some()
            || self.beam_width.is_some()
            || self.chosen_beam.is_some()
            || self.length_penalty.is_some();
        if !any_flag && !explicit_config {
            return Ok(None);
        }
        let mut d = run.decode.clone();
        if let Some(s) = self.decode {
            d.strategy = s.into();
        }
        if let Some(w) = self.beam_width {
            d.beam_width = w;
            if self.chosen_beam.is_none() {
                d.chosen_beam = d.chosen_beam.min(w);
            }
        }
        if let Some(c) = self.chosen_beam {
            d.chosen_beam = c;
        }
        if let Some(a) = self.length_penalty {
            d.length_penalty = a;
        }
        d.validate()?;
        Ok(Some(DecodeKnobs {
            strategy: match d.strategy {
                DecodeStrategy::Greedy => Strategy::Greedy,
                DecodeStrategy::Beam => Strategy::Beam,
            },
            beam_width: d.beam_width,
            length_penalty: d.length_penalty,
            chosen_beam: d.chosen_beam,
        }))
    }
}

fn print_reply(out: &mut impl Write, reply: &MessageResponse, debug: bool) -> std::io::Result<()> {
    writeln!(out, "bot> {}", reply.response)?;
    if debug {
        match &reply.user_act {
            Some(a) => {
                let p = a.probs.iter().cloned().fold(0.0f32, f32::max);
                writeln!(out, "  act: {} ({p:.3})", a.label)?;
            }
            None => writeln!(out, "  act: -")?,
        }
        writeln!(out, "  context norm: {:.4}", reply.context_norm)?;
        for (i, b) in reply.beams.iter().enumerate() {
            let mark = if i == reply.chosen { '*' } else { ' ' };
            writeln!(out, "  {mark}[{}] {:.4}  {}", i + 1, b.logprob, b.text)?;
        }
    }
    out.flush()
}

async fn converse(client: &Client, knobs: Option<DecodeKnobs>, debug: bool) -> CliResult {
    let session = client.create_session(knobs).await?;
    let interactive = std::io::stdin().is_terminal();
    let mut lines = BufReader::new(tokio::io::stdin()).lines();
    let mut out = std::io::stdout();
    if interactive {
        eprintln!("session {session}; /reset clears the conversation, /quit or EOF exits");
    }
    loop {
        if interactive {
            eprint!("you> ");
        }
        let Some(line) = lines
            .next_line()
            .await
            .map_err(|e| Failure::runtime(format!("reading stdin: {e}")))?
        else {
            break;
        };
        let text = line.trim();
        let written = match text {
            "" => Ok(()),
            "/quit" | "/exit" => break,
            "/reset" => {
                client.reset(&session).await?;
                writeln!(out, "(conversation reset)")
            }
            _ => {
                let reply = client.send_message(&session, text, None).await?;
                print_reply(&mut out, &reply, debug)
            }
        };
        written.map_err(|e| Failure::runtime(format!("writing stdout: {e}")))?;
    }
    Ok(())
}

pub fn chat(run: &RunConfig, args: &ChatArgs, explicit_config: bool) -> CliResult {
    let knobs = args.knobs(run, explicit_config)?;
    if let Some(url) = &args.url {
        return runtime()?.block_on(converse(&Client::new(url.clone()), knobs, args.debug));
    }
    let seq2seq = args
        .seq2seq
        .as_deref()
        .expect("clap requires --seq2seq without --url");
    let engine = load_engine(run, seq2seq, args.da_ckpt.as_deref())?;
    runtime()?.block_on(async {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
            .await
            .map_err(|e| Failure::runtime(format!("binding a local port: {e}")))?;
        let addr = listener
            .local_addr()
            .map_err(|e| Failure::runtime(e.to_string()))?;
        let (stop, stopped) = oneshot::channel::<()>();
        let server = tokio::spawn(css_service::serve(listener, engine, async {
            let _ = stopped.await;
        }));
        let result = converse(&Client::new(format!("http://{addr}")), knobs, args.debug).await;
        let _ = stop.send(());
        match server.await {
            Ok(Ok(())) => result,
            Ok(Err(e)) => result.and(Err(Failure::runtime(format!("service stopped: {e}")))),
            Err(e) => result.and(Err(Failure::runtime(format!("service task failed: {e}")))),
        }
    })
}
