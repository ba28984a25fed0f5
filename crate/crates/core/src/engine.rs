//! Chat engine: loaded models plus context policy and decode settings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corpus::{detokenize, DialogueAct, TokenSequence};
use crate::da_encoder::{DaEncoder, DaOutput};
use crate::dialogue_state::{analyze, ContextPolicy, DialogueState, Speaker};
use crate::error::{Error, Result};
use crate::metrics::Responder;
use crate::seq2seq::{DecodeConfig, Seq2Seq, Seq2SeqConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActPrediction {
    pub label: DialogueAct,
    pub probs: Vec<f32>,
}

impl From<&DaOutput> for ActPrediction {
    fn from(out: &DaOutput) -> Self {
        ActPrediction {
            label: out.act(),
            probs: out.probs.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamText {
    pub text: String,
    pub logprob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub response: String,
    pub tokens: Vec<String>,
    pub user_act: Option<ActPrediction>,
    /// Final beams, best first.
    pub beams: Vec<BeamText>,
    /// 0-based index of the response among `beams`.
    pub chosen: usize,
    pub context_norm: f64,
}

pub struct ChatEngine {
    seq2seq: Seq2Seq,
    da: Option<DaEncoder>,
    policy: ContextPolicy,
    decode: DecodeConfig,
}

impl ChatEngine {
    /// css mode needs a context model whose hidden size matches the
    /// generator's context width.
    pub fn new(
        seq2seq: Seq2Seq,
        da: Option<DaEncoder>,
        policy: ContextPolicy,
        decode: DecodeConfig,
    ) -> Result<Self> {
        decode.validate()?;
        match &da {
            None if seq2seq.mode().uses_context() => {
                return Err(Error::Config(
                    "css mode requires a context-model checkpoint".into(),
                ))
            }
            Some(d) if d.hidden_dim() != seq2seq.config().context_dim => {
                return Err(Error::Config(format!(
                    "context model hidden size {} does not match the generator's context width {}",
                    d.hidden_dim(),
                    seq2seq.config().context_dim
                )))
            }
            _ => {}
        }
        Ok(ChatEngine {
            seq2seq,
            da,
            policy,
            decode,
        })
    }

    /// Loads checkpoints and checks them against the runtime config. The
    /// generator's mode and window come from its checkpoint; every other
    /// stored setting must equal `run`'s.
    pub fn load(run: &RunConfig, seq2seq: &Path, da: Option<&Path>) -> Result<Self> {
        let model = Seq2Seq::load(seq2seq, None)?;
        let stored = model.config();
        let expected = Seq2SeqConfig {
            mode: stored.mode,
            window: stored.window,
            ..run.seq2seq.clone()
        };
        if stored != &expected {
            return Err(Error::Checkpoint(format!(
                "{}: stored seq2seq config differs from the runtime config",
                seq2seq.display()
            )));
        }
        let da = da.map(|p| DaEncoder::load(p, Some(&run.da))).transpose()?;
        ChatEngine::new(model, da, run.context.clone(), run.decode.clone())
    }

    pub fn seq2seq(&self) -> &Seq2Seq {
        &self.seq2seq
    }

    pub fn da(&self) -> Option<&DaEncoder> {
        self.da.as_ref()
    }

    pub fn decode_config(&self) -> &DecodeConfig {
        &self.decode
    }

    pub fn new_state(&self) -> DialogueState {
        DialogueState::new(self.policy.clone(), self.seq2seq.config().context_dim)
    }

    pub fn classify(&self, text: &str) -> Result<Option<ActPrediction>> {
        Ok(analyze(self.da.as_ref(), text)?
            .as_ref()
            .map(ActPrediction::from))
    }

    /// Answers `text`: pushes the user turn, decodes, pushes the bot turn.
    pub fn reply(
        &self,
        state: &mut DialogueState,
        text: &str,
        decode: Option<&DecodeConfig>,
    ) -> Result<Reply> {
        let decode = decode.unwrap_or(&self.decode);
        decode.validate()?;
        let analysis = analyze(self.da.as_ref(), text)?;
        let ctx = state.context_for_next(analysis.as_ref().map(|a| &a.hidden))?;
        let user_act = analysis.as_ref().map(ActPrediction::from);
        state.push_analyzed(Speaker::User, text, analysis, self.da.as_ref())?;

        let vocab = self.seq2seq.vocab();
        let max = self.seq2seq.config().max_in_len;
        let history: Vec<TokenSequence> = state
            .token_history()
            .iter()
            .map(|t| vocab.encode(t, max))
            .collect();
        let input = self.seq2seq.input_for(&history);
        let out = self.seq2seq.respond(&input, Some(&ctx), decode)?;
        let render = |ids: &[usize]| vocab.render(ids);
        let tokens = render(out.response().ids())?;
        let response = detokenize(&tokens);
        let beams = out
            .beams
            .iter()
            .map(|b| {
                Ok(BeamText {
                    text: detokenize(&render(&b.tokens)?),
                    logprob: b.logprob,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        state.push_turn(Speaker::Bot, &response, self.da.as_ref())?;
        Ok(Reply {
            response,
            tokens,
            user_act,
            beams,
            chosen: out.chosen,
            context_norm: ctx.norm(),
        })
    }
}

impl Responder for ChatEngine {
    fn new_state(&self) -> DialogueState {
        ChatEngine::new_state(self)
    }

    fn respond(&self, state: &mut DialogueState, user_text: &str) -> Result<Vec<String>> {
        Ok(self.reply(state, user_text, None)?.tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Vocabulary, SEP_TOKEN};
    use crate::da_encoder::DaConfig;
    use crate::seq2seq::{Mode, Seq2SeqConfig};

    fn engine(mode: Mode, with_da: bool) -> Result<ChatEngine> {
        let words = vec![vec!["hi", "there", "how", "are", "you", "?", "fine"]];
        let vocab = Vocabulary::build_with_reserved(words.clone(), 30, &[SEP_TOKEN]).unwrap();
        let cfg = Seq2SeqConfig {
            mode,
            embed_dim: 4,
            encoder_hidden: 4,
            decoder_hidden: 4,
            context_dim: 6,
            max_out_len: 5,
            ..Seq2SeqConfig::default()
        };
        let s = Seq2Seq::new(cfg, vocab, 1)?;
        let da = with_da.then(|| {
            let dcfg = DaConfig {
                embed_dim: 4,
                max_len: 8,
                windows: vec![2, 3],
                filters_per_window: 2,
                hidden_dim: 6,
                ..DaConfig::default()
            };
            DaEncoder::new(dcfg, Vocabulary::build(words, 30).unwrap(), 2).unwrap()
        });
        ChatEngine::new(s, da, ContextPolicy::default(), DecodeConfig::default())
    }

    #[test]
    fn css_without_context_model_rejected() {
        assert!(matches!(engine(Mode::Css, false), Err(Error::Config(_))));
    }

    #[test]
    fn reply_pushes_two_turns_and_reports_beams() {
        let e = engine(Mode::Css, true).unwrap();
        let mut st = e.new_state();
        let r = e.reply(&mut st, "How are you?", None).unwrap();
        assert_eq!(st.len(), 2);
        assert_eq!(r.beams.len(), 3);
        assert_eq!(r.chosen, 2);
        assert_eq!(r.response, r.beams[2].text);
        assert_eq!(r.user_act.unwrap().probs.len(), 10);
        // First turn: nothing precedes it.
        assert_eq!(r.context_norm, 0.0);
        let r2 = e
            .reply(&mut st, "fine", Some(&DecodeConfig::greedy()))
            .unwrap();
        assert!(r2.context_norm > 0.0);
        assert_eq!(r2.beams.len(), 1);
    }

    #[test]
    fn baselines_work_without_context_model() {
        for mode in [Mode::Baseline1, Mode::Baseline2] {
            let e = engine(mode, false).unwrap();
            let mut st = e.new_state();
            let r = e.reply(&mut st, "hi there", None).unwrap();
            assert!(r.user_act.is_none());
            assert_eq!(st.transcript()[0].act, None);
        }
    }
}
