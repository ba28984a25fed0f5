use serde::{Deserialize, Serialize};

use super::model::{DecoderState, FusedKeys, Seq2Seq};
use crate::autodiff::{log_softmax, Scalar};
use crate::corpus::{TokenSequence, EOS, SOS};
use crate::da_encoder::ContextVector;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeStrategy {
    Greedy,
    Beam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    pub strategy: DecodeStrategy,
    pub beam_width: usize,
    /// α in `score / len^α`.
    pub length_penalty: f64,
    /// 1-based rank of the final beam returned as the response.
    pub chosen_beam: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            strategy: DecodeStrategy::Beam,
            beam_width: 3,
            length_penalty: 0.0,
            chosen_beam: 3,
        }
    }
}

impl DecodeConfig {
    pub fn greedy() -> Self {
        DecodeConfig {
            strategy: DecodeStrategy::Greedy,
            beam_width: 1,
            chosen_beam: 1,
            ..Default::default()
        }
    }

    pub fn beam(width: usize, chosen_beam: usize) -> Self {
        DecodeConfig {
            strategy: DecodeStrategy::Beam,
            beam_width: width,
            chosen_beam,
            length_penalty: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategy == DecodeStrategy::Beam
            && !(1 <= self.chosen_beam && self.chosen_beam <= self.beam_width)
        {
            return Err(Error::Config(format!(
                "chosen beam {} must lie in 1..={}",
                self.chosen_beam, self.beam_width
            )));
        }
        if !self.length_penalty.is_finite() || self.length_penalty < 0.0 {
            return Err(Error::Config(format!(
                "length penalty {} must be finite and non-negative",
                self.length_penalty
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    /// Generated ids, ending with EOS when `finished`.
    pub tokens: Vec<usize>,
    pub logprob: f64,
    pub finished: bool,
}

impl Beam {
    pub fn score(&self, length_penalty: f64) -> f64 {
        if length_penalty == 0.0 {
            self.logprob
        } else {
            self.logprob / (self.tokens.len().max(1) as f64).powf(length_penalty)
        }
    }

    pub fn sequence(&self) -> TokenSequence {
        TokenSequence::new(self.tokens.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamOutput {
    /// Final beams, best first.
    pub beams: Vec<Beam>,
    /// 0-based index of the returned beam.
    pub chosen: usize,
}

impl BeamOutput {
    pub fn response(&self) -> TokenSequence {
        self.beams[self.chosen].sequence()
    }
}

/// True when, under raw log-prob scoring, `width` finished beams already
/// beat every live hypothesis; extending a prefix never raises its score.
fn settled<T: Scalar>(
    finished: &[Beam],
    alive: &[Hypothesis<T>],
    width: usize,
    alpha: f64,
) -> bool {
    if alpha != 0.0 || finished.len() < width {
        return false;
    }
    let mut scores: Vec<f64> = finished.iter().map(|b| b.logprob).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    let best_alive = alive
        .iter()
        .map(|h| h.beam.logprob)
        .fold(f64::NEG_INFINITY, f64::max);
    scores[width - 1] >= best_alive
}

struct Hypothesis<T: Scalar> {
    beam: Beam,
    state: DecoderState<T>,
}

fn sort_desc<X>(items: &mut [X], key: impl Fn(&X) -> f64) {
    // Stable: equal scores keep their earlier order.
    items.sort_by(|a, b| key(b).total_cmp(&key(a)));
}

impl<T: Scalar> Seq2Seq<T> {
    /// Log-probabilities of the next token with forbidden ids at −∞.
    pub fn next_logprobs(
        &self,
        prev: usize,
        state: &DecoderState<T>,
        keys: &FusedKeys<T>,
        allowed: &[bool],
    ) -> Result<(Vec<f64>, DecoderState<T>)> {
        let (logits, next) = self.decode_step(prev, state, keys)?;
        let masked: Vec<f64> = logits
            .iter()
            .zip(allowed)
            .map(|(&l, &ok)| if ok { l.as_f64() } else { f64::NEG_INFINITY })
            .collect();
        Ok((log_softmax(&masked), next))
    }

    /// Argmax decoding (lowest id on ties) until EOS or `max_out_len` tokens.
    pub fn greedy_decode(
        &self,
        seq: &TokenSequence,
        ctx: Option<&ContextVector>,
    ) -> Result<TokenSequence> {
        let (keys, mut state) = self.prepare(seq, ctx)?;
        let allowed = self.allowed_tokens();
        let mut out = Vec::new();
        let mut prev = SOS;
        while out.len() < self.config().max_out_len {
            let (lp, next) = self.next_logprobs(prev, &state, &keys, &allowed)?;
            let mut best = 0;
            for (i, &v) in lp.iter().enumerate() {
                if v > lp[best] {
                    best = i;
                }
            }
            out.push(best);
            if best == EOS {
                break;
            }
            state = next;
            prev = best;
        }
        Ok(TokenSequence::new(out))
    }

    /// Beam search over summed log-probabilities.
    ///
    /// Each step keeps the best `width` non-EOS expansions of all live
    /// hypotheses; EOS expansions ranked within the top `width` retire to
    /// the finished pool. Surviving
    /// hypotheses at `max_out_len` join the finished ones, and the best
    /// `width` of those are ranked by `logprob / len^α`. With `α = 0` the
    /// search stops as soon as no live hypothesis can overtake the
    /// `width`-th finished one.
    pub fn beam_decode(
        &self,
        seq: &TokenSequence,
        ctx: Option<&ContextVector>,
        config: &DecodeConfig,
    ) -> Result<BeamOutput> {
        config.validate()?;
        let width = config.beam_width.max(1);
        let (keys, state) = self.prepare(seq, ctx)?;
        let allowed = self.allowed_tokens();
        let mut alive = vec![Hypothesis {
            beam: Beam {
                tokens: Vec::new(),
                logprob: 0.0,
                finished: false,
            },
            state,
        }];
        let mut finished: Vec<Beam> = Vec::new();
        for _ in 0..self.config().max_out_len {
            if alive.is_empty() || settled(&finished, &alive, width, config.length_penalty) {
                break;
            }
            let mut candidates = Vec::new();
            let mut states = Vec::with_capacity(alive.len());
            for (bi, hyp) in alive.iter().enumerate() {
                let prev = hyp.beam.tokens.last().copied().unwrap_or(SOS);
                let (lp, next) = self.next_logprobs(prev, &hyp.state, &keys, &allowed)?;
                for (tok, &l) in lp.iter().enumerate() {
                    if l > f64::NEG_INFINITY {
                        candidates.push((hyp.beam.logprob + l, l, bi, tok));
                    }
                }
                states.push(next);
            }
            // Ties on the summed score fall back to the step log-prob, then
            // to expansion order, so width 1 follows the greedy argmax.
            candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
            let mut next_alive = Vec::with_capacity(width);
            for (rank, (score, _, bi, tok)) in candidates.into_iter().enumerate() {
                // EOS retires only from the top `width`; live slots refill
                // from the best remaining expansions.
                let keep = if tok == EOS {
                    rank < width
                } else {
                    next_alive.len() < width
                };
                if !keep {
                    continue;
                }
                let mut tokens = alive[bi].beam.tokens.clone();
                tokens.push(tok);
                let beam = Beam {
                    tokens,
                    logprob: score,
                    finished: tok == EOS,
                };
                if beam.finished {
                    finished.push(beam);
                } else {
                    next_alive.push(Hypothesis {
                        beam,
                        state: states[bi].clone(),
                    });
                }
            }
            alive = next_alive;
        }
        let mut beams = finished;
        beams.extend(alive.into_iter().map(|h| h.beam));
        sort_desc(&mut beams, |b| b.score(config.length_penalty));
        beams.truncate(width);
        let chosen = config.chosen_beam.clamp(1, beams.len()) - 1;
        Ok(BeamOutput { beams, chosen })
    }

    /// Decodes with `config`; greedy output is reported as a single beam.
    pub fn respond(
        &self,
        seq: &TokenSequence,
        ctx: Option<&ContextVector>,
        config: &DecodeConfig,
    ) -> Result<BeamOutput> {
        match config.strategy {
            DecodeStrategy::Beam => self.beam_decode(seq, ctx, config),
            DecodeStrategy::Greedy => {
                let out = self.greedy_decode(seq, ctx)?;
                let logprob = self.sequence_logprob(seq, ctx, out.ids())?;
                Ok(BeamOutput {
                    beams: vec![Beam {
                        finished: out.ids().last() == Some(&EOS),
                        tokens: out.ids().to_vec(),
                        logprob,
                    }],
                    chosen: 0,
                })
            }
        }
    }

    /// Sum of next-token log-probabilities of `tokens` under the decoder.
    pub fn sequence_logprob(
        &self,
        seq: &TokenSequence,
        ctx: Option<&ContextVector>,
        tokens: &[usize],
    ) -> Result<f64> {
        let (keys, mut state) = self.prepare(seq, ctx)?;
        let allowed = self.allowed_tokens();
        let mut prev = SOS;
        let mut total = 0.0;
        for &tok in tokens {
            let (lp, next) = self.next_logprobs(prev, &state, &keys, &allowed)?;
            total += lp
                .get(tok)
                .copied()
                .ok_or_else(|| Error::Index(format!("token id {tok} outside vocabulary")))?;
            state = next;
            prev = tok;
        }
        Ok(total)
    }
}
