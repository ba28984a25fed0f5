use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AttentionKeys, Mode, Seq2SeqConfig};
use crate::autodiff::{Graph, NodeId, ParamId, ParamStore, Scalar, Tensor};
use crate::checkpoint::{Checkpoint, ModelKind};
use crate::corpus::{tokenize, window_concat, BucketedBatch, TokenSequence, Vocabulary, PAD};
use crate::da_encoder::ContextVector;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub(crate) struct Lstm {
    w_x: ParamId,
    w_h: ParamId,
    bias: ParamId,
    hidden: usize,
}

impl Lstm {
    fn new<T: Scalar, R: Rng>(
        params: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let w_x = params.add_glorot(
            format!("{prefix}.w_x"),
            &[input, 4 * hidden],
            input,
            4 * hidden,
            rng,
        );
        let w_h = params.add_glorot(
            format!("{prefix}.w_h"),
            &[hidden, 4 * hidden],
            hidden,
            4 * hidden,
            rng,
        );
        // Gate order i, f, g, o; forget gate starts open.
        let mut b = vec![T::zero(); 4 * hidden];
        for v in &mut b[hidden..2 * hidden] {
            *v = T::one();
        }
        let bias = params.add(format!("{prefix}.bias"), Tensor::vector(b));
        Lstm {
            w_x,
            w_h,
            bias,
            hidden,
        }
    }

    /// One step for `B` rows. Rows whose `mask` entry is 0 keep their old state.
    fn step<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        x: NodeId,
        h: NodeId,
        c: NodeId,
        mask: Option<&[T]>,
    ) -> Result<(NodeId, NodeId)> {
        let n = self.hidden;
        let (wx, wh) = (g.param(self.w_x), g.param(self.w_h));
        let bias = g.param(self.bias);
        let zx = g.matmul(x, wx)?;
        let zh = g.matmul(h, wh)?;
        let z = g.add(zx, zh)?;
        let z = g.add_row(z, bias)?;
        let i = g.slice_cols(z, 0, n)?;
        let i = g.sigmoid(i);
        let f = g.slice_cols(z, n, n)?;
        let f = g.sigmoid(f);
        let cand = g.slice_cols(z, 2 * n, n)?;
        let cand = g.tanh(cand);
        let o = g.slice_cols(z, 3 * n, n)?;
        let o = g.sigmoid(o);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_new = g.add(keep, write)?;
        let squashed = g.tanh(c_new);
        let h_new = g.mul(o, squashed)?;
        match mask {
            Some(m) if m.iter().any(|&v| v != T::one()) => {
                let inv: Vec<T> = m.iter().map(|&v| T::one() - v).collect();
                let h_in = g.row_scale(h_new, m.to_vec())?;
                let h_old = g.row_scale(h, inv.clone())?;
                let c_in = g.row_scale(c_new, m.to_vec())?;
                let c_old = g.row_scale(c, inv)?;
                Ok((g.add(h_in, h_old)?, g.add(c_in, c_old)?))
            }
            _ => Ok((h_new, c_new)),
        }
    }
}

/// Per-timestep encoder outputs of one utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStates<T: Scalar = f32> {
    /// `len × 2·encoder_hidden`, forward half first.
    pub states: Tensor<T>,
    /// Final forward state ‖ final backward state.
    pub summary: Tensor<T>,
}

impl<T: Scalar> EncoderStates<T> {
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Attention keys, one row per encoder state.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedKeys<T: Scalar = f32> {
    pub keys: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState<T: Scalar = f32> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
}

pub(crate) struct EncodedBatch {
    /// `(B*T)×2H`, row `b*T + t`.
    pub states: NodeId,
    /// `B×2H`.
    pub summary: NodeId,
    pub steps: usize,
    pub mask: Vec<bool>,
}

pub struct Seq2Seq<T: Scalar = f32> {
    config: Seq2SeqConfig,
    vocab: Vocabulary,
    params: ParamStore<T>,
    enc_embedding: ParamId,
    dec_embedding: ParamId,
    enc_fwd: Lstm,
    enc_bwd: Lstm,
    init_w: ParamId,
    init_b: ParamId,
    fuse: Option<(ParamId, ParamId)>,
    attn_w: ParamId,
    decoder: Lstm,
    out_w: ParamId,
    out_b: ParamId,
}

impl<T: Scalar> Seq2Seq<T> {
    pub fn new(config: Seq2SeqConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.mode == Mode::Baseline2 && vocab.separator().is_none() {
            return Err(Error::Config(
                "baseline2 needs a vocabulary with a <sep> token".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let (v, e) = (vocab.len(), config.embed_dim);
        let (h, d) = (config.encoder_hidden, config.decoder_hidden);
        let (s, f, k) = (config.state_dim(), config.fused_dim(), config.key_dim());
        let enc_embedding = params.add_glorot("encoder.embedding", &[v, e], v, e, &mut rng);
        let enc_fwd = Lstm::new(&mut params, "encoder.forward", e, h, &mut rng);
        let enc_bwd = Lstm::new(&mut params, "encoder.backward", e, h, &mut rng);
        let init_w = params.add_glorot("decoder.init.weight", &[s, d], s, d, &mut rng);
        let init_b = params.add_zeros("decoder.init.bias", &[d]);
        let fuse = match config.attention_keys {
            AttentionKeys::Reduced => Some((
                params.add_glorot("fuse.weight", &[f, d], f, d, &mut rng),
                params.add_zeros("fuse.bias", &[d]),
            )),
            AttentionKeys::Concat => None,
        };
        let attn_w = params.add_glorot("attention.weight", &[d, k], d, k, &mut rng);
        let dec_embedding = params.add_glorot("decoder.embedding", &[v, e], v, e, &mut rng);
        let decoder = Lstm::new(&mut params, "decoder.lstm", e, d, &mut rng);
        let out_w = params.add_glorot("output.weight", &[d + k, v], d + k, v, &mut rng);
        let out_b = params.add_zeros("output.bias", &[v]);
        Ok(Seq2Seq {
            config,
            vocab,
            params,
            enc_embedding,
            dec_embedding,
            enc_fwd,
            enc_bwd,
            init_w,
            init_b,
            fuse,
            attn_w,
            decoder,
            out_w,
            out_b,
        })
    }

    pub fn config(&self) -> &Seq2SeqConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn encode_text(&self, text: &str) -> TokenSequence {
        self.vocab.encode(&tokenize(text), self.config.max_in_len)
    }

    /// Model input for the latest utterance of `history` (oldest first):
    /// the last utterance, or in baseline2 mode the `<sep>`-joined window.
    pub fn input_for(&self, history: &[TokenSequence]) -> TokenSequence {
        let max = self.config.max_in_len;
        let seq = match (self.config.mode, self.vocab.separator()) {
            (Mode::Baseline2, Some(sep)) => window_concat(history, self.config.window, sep, max),
            _ => {
                let last = history.last().map(|s| s.ids()).unwrap_or(&[]);
                TokenSequence::new(last[..last.len().min(max)].to_vec())
            }
        };
        seq.or_unk()
    }

    pub(crate) fn encode_graph(
        &self,
        g: &mut Graph<'_, T>,
        inputs: &[Vec<usize>],
        lens: &[usize],
    ) -> Result<EncodedBatch> {
        let b = inputs.len();
        let steps = inputs.first().map_or(0, Vec::len);
        if b == 0 || steps == 0 || inputs.iter().any(|r| r.len() != steps) {
            return Err(Error::Shape(
                "encoder batch must be a non-empty rectangle".into(),
            ));
        }
        if lens.iter().any(|&l| l == 0 || l > steps) {
            return Err(Error::Input("encoder input of length zero".into()));
        }
        let h = self.config.encoder_hidden;
        let table = g.param(self.enc_embedding);
        let mut xs = Vec::with_capacity(steps);
        for t in 0..steps {
            let col: Vec<usize> = inputs.iter().map(|r| r[t]).collect();
            xs.push(g.gather(table, &col)?);
        }
        let masks: Vec<Vec<T>> = (0..steps)
            .map(|t| {
                lens.iter()
                    .map(|&l| if t < l { T::one() } else { T::zero() })
                    .collect()
            })
            .collect();
        let zero = || Tensor::zeros(&[b, h]);
        let (mut hf, mut cf) = (g.constant(zero()), g.constant(zero()));
        let mut fwd = Vec::with_capacity(steps);
        for t in 0..steps {
            (hf, cf) = self.enc_fwd.step(g, xs[t], hf, cf, Some(&masks[t]))?;
            fwd.push(hf);
        }
        let (mut hb, mut cb) = (g.constant(zero()), g.constant(zero()));
        let mut bwd = vec![hb; steps];
        for t in (0..steps).rev() {
            (hb, cb) = self.enc_bwd.step(g, xs[t], hb, cb, Some(&masks[t]))?;
            bwd[t] = hb;
        }
        let per_step = (0..steps)
            .map(|t| g.concat_cols(&[fwd[t], bwd[t]]))
            .collect::<Result<Vec<_>>>()?;
        let states = g.interleave(&per_step)?;
        let summary = g.concat_cols(&[hf, hb])?;
        let mask = lens
            .iter()
            .flat_map(|&l| (0..steps).map(move |t| t < l))
            .collect();
        Ok(EncodedBatch {
            states,
            summary,
            steps,
            mask,
        })
    }

    /// Attention keys from `(B*T)×2H` states and an optional `B×C` context.
    /// Without a context the context block is zero.
    pub(crate) fn keys_graph(
        &self,
        g: &mut Graph<'_, T>,
        states: NodeId,
        steps: usize,
        ctx: Option<NodeId>,
    ) -> Result<NodeId> {
        let rows = g.value(states).rows();
        let ctx_rows = match ctx {
            Some(c) => g.repeat_rows(c, steps)?,
            None => g.constant(Tensor::zeros(&[rows, self.config.context_dim])),
        };
        let fused = g.concat_cols(&[states, ctx_rows])?;
        match self.fuse {
            Some((w, b)) => {
                let pre = g.affine(fused, w, b)?;
                Ok(g.tanh(pre))
            }
            None => Ok(fused),
        }
    }

    pub(crate) fn initial_state_graph(
        &self,
        g: &mut Graph<'_, T>,
        summary: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let rows = g.value(summary).rows();
        let pre = g.affine(summary, self.init_w, self.init_b)?;
        let h = g.tanh(pre);
        let c = g.constant(Tensor::zeros(&[rows, self.config.decoder_hidden]));
        Ok((h, c))
    }

    /// LSTM step then attention; returns `[h ‖ summary]` features, new state
    /// and attention weights.
    pub(crate) fn decoder_features(
        &self,
        g: &mut Graph<'_, T>,
        prev: &[usize],
        h: NodeId,
        c: NodeId,
        keys: NodeId,
        key_mask: &[bool],
    ) -> Result<(NodeId, NodeId, NodeId, NodeId)> {
        let table = g.param(self.dec_embedding);
        let x = g.gather(table, prev)?;
        let (h, c) = self.decoder.step(g, x, h, c, None)?;
        let w = g.param(self.attn_w);
        let q = g.matmul(h, w)?;
        let scores = g.seq_dot(q, keys)?;
        let weights = g.masked_softmax(scores, key_mask)?;
        let summary = g.seq_weighted_sum(weights, keys)?;
        let features = g.concat_cols(&[h, summary])?;
        Ok((features, h, c, weights))
    }

    pub(crate) fn output_graph(&self, g: &mut Graph<'_, T>, features: NodeId) -> Result<NodeId> {
        g.affine(features, self.out_w, self.out_b)
    }

    fn context_node(&self, g: &mut Graph<'_, T>, ctx: &[&ContextVector]) -> Result<NodeId> {
        let dim = self.config.context_dim;
        let mut data = Vec::with_capacity(ctx.len() * dim);
        for c in ctx {
            if c.dim() != dim {
                return Err(Error::Shape(format!(
                    "context vector of {} values, model expects {dim}",
                    c.dim()
                )));
            }
            data.extend(c.values().iter().map(|&v| T::from_f64(v as f64)));
        }
        Ok(g.constant(Tensor::new(vec![ctx.len(), dim], data)?))
    }

    /// Mean per-token cross-entropy over the non-PAD targets of `batch`.
    /// `ctx` holds one vector per row and is used only in css mode.
    pub fn loss_graph(
        &self,
        g: &mut Graph<'_, T>,
        batch: &BucketedBatch,
        ctx: Option<&[&ContextVector]>,
    ) -> Result<(NodeId, usize)> {
        let rows = batch.rows();
        let tokens: usize = batch.target_lens.iter().sum();
        if rows == 0 || tokens == 0 {
            return Err(Error::Input("batch has no target tokens".into()));
        }
        let enc = self.encode_graph(g, &batch.utterances, &batch.utterance_lens)?;
        let ctx_node = match (self.config.mode.uses_context(), ctx) {
            (true, Some(c)) => {
                if c.len() != rows {
                    return Err(Error::Shape(format!(
                        "{} context vectors for {rows} rows",
                        c.len()
                    )));
                }
                Some(self.context_node(g, c)?)
            }
            _ => None,
        };
        let keys = self.keys_graph(g, enc.states, enc.steps, ctx_node)?;
        let (mut h, mut c) = self.initial_state_graph(g, enc.summary)?;
        let steps = batch.bucket;
        let mut feats = Vec::with_capacity(steps);
        let mut targets = Vec::with_capacity(steps * rows);
        let mut weights = Vec::with_capacity(steps * rows);
        let w = T::from_f64(1.0 / tokens as f64);
        for t in 0..steps {
            if batch.target_lens.iter().all(|&l| t >= l) {
                break;
            }
            let prev: Vec<usize> = batch.decoder_inputs.iter().map(|r| r[t]).collect();
            let (f, h2, c2, _) = self.decoder_features(g, &prev, h, c, keys, &enc.mask)?;
            (h, c) = (h2, c2);
            feats.push(f);
            for r in 0..rows {
                targets.push(batch.targets[r][t]);
                weights.push(if t < batch.target_lens[r] {
                    w
                } else {
                    T::zero()
                });
            }
        }
        let all = g.concat_rows(&feats)?;
        let logits = self.output_graph(g, all)?;
        Ok((g.softmax_cross_entropy(logits, &targets, &weights)?, tokens))
    }

    /// Runs the encoder over one utterance (truncated to `max_in_len`).
    pub fn encode(&self, seq: &TokenSequence) -> Result<EncoderStates<T>> {
        let ids: Vec<usize> = seq
            .ids()
            .iter()
            .copied()
            .take(self.config.max_in_len)
            .collect();
        if ids.is_empty() {
            return Err(Error::Input("cannot encode an empty utterance".into()));
        }
        let n = ids.len();
        let mut g = Graph::new(&self.params);
        let enc = self.encode_graph(&mut g, &[ids], &[n])?;
        Ok(EncoderStates {
            states: g.value(enc.states).clone(),
            summary: g.value(enc.summary).clone(),
        })
    }

    /// Fuses the context into every state; `None` takes the no-context path.
    pub fn fuse_context(
        &self,
        enc: &EncoderStates<T>,
        ctx: Option<&ContextVector>,
    ) -> Result<FusedKeys<T>> {
        if enc.states.cols() != self.config.state_dim() {
            return Err(Error::Shape(format!(
                "encoder states of width {}, expected {}",
                enc.states.cols(),
                self.config.state_dim()
            )));
        }
        let mut g = Graph::new(&self.params);
        let states = g.constant(enc.states.clone());
        let ctx_node = match ctx {
            Some(c) => Some(self.context_node(&mut g, &[c])?),
            None => None,
        };
        let keys = self.keys_graph(&mut g, states, enc.len(), ctx_node)?;
        Ok(FusedKeys {
            keys: g.value(keys).clone(),
        })
    }

    /// Context passed to the decoder for this model's mode.
    pub(crate) fn mode_context<'c>(
        &self,
        ctx: Option<&'c ContextVector>,
    ) -> Option<&'c ContextVector> {
        if self.config.mode.uses_context() {
            ctx
        } else {
            None
        }
    }

    pub fn initial_state(&self, enc: &EncoderStates<T>) -> Result<DecoderState<T>> {
        let mut g = Graph::new(&self.params);
        let s = g.constant(enc.summary.clone());
        let (h, c) = self.initial_state_graph(&mut g, s)?;
        Ok(DecoderState {
            h: g.value(h).clone(),
            c: g.value(c).clone(),
        })
    }

    /// Attention weights over the keys and the weighted key summary.
    pub fn attention(&self, query: &[T], keys: &FusedKeys<T>) -> Result<(Vec<T>, Vec<T>)> {
        let mut g = Graph::new(&self.params);
        let q = g.constant(Tensor::new(vec![1, query.len()], query.to_vec())?);
        let k = g.constant(keys.keys.clone());
        let w = g.param(self.attn_w);
        let qw = g.matmul(q, w)?;
        let scores = g.seq_dot(qw, k)?;
        let weights = g.masked_softmax(scores, &vec![true; keys.keys.rows()])?;
        let summary = g.seq_weighted_sum(weights, k)?;
        Ok((
            g.value(weights).data().to_vec(),
            g.value(summary).data().to_vec(),
        ))
    }

    /// Logits for the token after `prev` and the updated decoder state.
    pub fn decode_step(
        &self,
        prev: usize,
        state: &DecoderState<T>,
        keys: &FusedKeys<T>,
    ) -> Result<(Vec<T>, DecoderState<T>)> {
        let mut g = Graph::new(&self.params);
        let h = g.constant(state.h.clone());
        let c = g.constant(state.c.clone());
        let k = g.constant(keys.keys.clone());
        let mask = vec![true; keys.keys.rows()];
        let (f, h, c, _) = self.decoder_features(&mut g, &[prev], h, c, k, &mask)?;
        let logits = self.output_graph(&mut g, f)?;
        Ok((
            g.value(logits).data().to_vec(),
            DecoderState {
                h: g.value(h).clone(),
                c: g.value(c).clone(),
            },
        ))
    }

    /// Encoder pass, context fusion and decoder start state for one input.
    pub fn prepare(
        &self,
        seq: &TokenSequence,
        ctx: Option<&ContextVector>,
    ) -> Result<(FusedKeys<T>, DecoderState<T>)> {
        let enc = self.encode(seq)?;
        let keys = self.fuse_context(&enc, self.mode_context(ctx))?;
        Ok((keys, self.initial_state(&enc)?))
    }

    /// Token ids the decoder may emit.
    pub fn allowed_tokens(&self) -> Vec<bool> {
        use crate::corpus::{SOS, UNK};
        (0..self.vocab.len())
            .map(|i| !(i == PAD || i == SOS || (self.config.mask_unk && i == UNK)))
            .collect()
    }
}

impl Seq2Seq<f32> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_params(
            ModelKind::Seq2seq,
            serde_json::json!({ "model": self.config, "run": null }),
            self.vocab.tokens().to_vec(),
            &self.params,
        )
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind(ModelKind::Seq2seq)?;
        let config: Seq2SeqConfig = serde_json::from_value(ckpt.config["model"].clone())
            .map_err(|e| Error::Checkpoint(format!("seq2seq config: {e}")))?;
        let mut model = Seq2Seq::new(config, Vocabulary::from(ckpt.vocab.clone()), 0)?;
        ckpt.restore_into(&mut model.params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    /// Loads a checkpoint; with `expected`, the stored config must match it.
    pub fn load(path: &Path, expected: Option<&Seq2SeqConfig>) -> Result<Self> {
        let model = Self::from_checkpoint(&Checkpoint::load(path)?)?;
        if let Some(exp) = expected {
            if exp != &model.config {
                return Err(Error::Checkpoint(format!(
                    "{}: stored seq2seq config differs from the runtime config",
                    path.display()
                )));
            }
        }
        Ok(model)
    }
}

impl<T: Scalar> Seq2Seq<T> {
    pub fn cast<U: Scalar>(&self) -> Seq2Seq<U> {
        Seq2Seq {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: self.params.cast(),
            enc_embedding: self.enc_embedding,
            dec_embedding: self.dec_embedding,
            enc_fwd: self.enc_fwd,
            enc_bwd: self.enc_bwd,
            init_w: self.init_w,
            init_b: self.init_b,
            fuse: self.fuse,
            attn_w: self.attn_w,
            decoder: self.decoder,
            out_w: self.out_w,
            out_b: self.out_b,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradient_check;
    use crate::corpus::{DialoguePair, EOS, SEP_TOKEN, SOS};

    fn toy_vocab() -> Vocabulary {
        Vocabulary::build_with_reserved(vec![vec!["a", "b", "c"]], 8, &[SEP_TOKEN]).unwrap()
    }

    fn toy_config(mode: Mode) -> Seq2SeqConfig {
        Seq2SeqConfig {
            mode,
            embed_dim: 3,
            encoder_hidden: 4,
            decoder_hidden: 4,
            context_dim: 5,
            max_in_len: 6,
            max_out_len: 5,
            ..Seq2SeqConfig::default()
        }
    }

    fn ctx(seed: u64, dim: usize) -> ContextVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ContextVector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn encoder_state_count_and_width() {
        let m = Seq2Seq::<f32>::new(toy_config(Mode::Css), toy_vocab(), 1).unwrap();
        let one = m.encode(&TokenSequence::new(vec![5])).unwrap();
        assert_eq!(one.states.shape(), &[1, 8]);
        let three = m.encode(&TokenSequence::new(vec![5, 6, 7])).unwrap();
        assert_eq!(three.len(), 3);
        assert!(m.encode(&TokenSequence::new(vec![])).is_err());
    }

    #[test]
    fn backward_direction_mirrors_forward_with_shared_weights() {
        let mut m = Seq2Seq::<f64>::new(toy_config(Mode::Baseline1), toy_vocab(), 3).unwrap();
        for part in ["w_x", "w_h", "bias"] {
            let src = m.params.lookup(&format!("encoder.forward.{part}")).unwrap();
            let dst = m
                .params
                .lookup(&format!("encoder.backward.{part}"))
                .unwrap();
            let t = m.params.get(src).clone();
            m.params.set(dst, t).unwrap();
        }
        let x = TokenSequence::new(vec![4, 5, 6, 7, 5]);
        let mut rev_ids = x.ids().to_vec();
        rev_ids.reverse();
        let a = m.encode(&x).unwrap();
        let b = m.encode(&TokenSequence::new(rev_ids)).unwrap();
        let n = x.len();
        for i in 0..n {
            let fwd = &a.states.row(n - 1 - i)[..4];
            let bwd = &b.states.row(i)[4..];
            for (p, q) in fwd.iter().zip(bwd) {
                assert!((p - q).abs() < 1e-12);
            }
        }
        // Forward states of the reversed input differ from the original's.
        assert_ne!(&a.states.row(0)[..4], &b.states.row(0)[..4]);
    }

    #[test]
    fn padding_does_not_change_encoder_states() {
        let m = Seq2Seq::<f64>::new(toy_config(Mode::Css), toy_vocab(), 4).unwrap();
        let mut g = Graph::new(m.params());
        let enc = m
            .encode_graph(
                &mut g,
                &[vec![4, 5, 6, PAD, PAD], vec![6, 5, 4, 7, 5]],
                &[3, 5],
            )
            .unwrap();
        let solo = m.encode(&TokenSequence::new(vec![4, 5, 6])).unwrap();
        let batched = g.value(enc.states);
        for t in 0..3 {
            for (p, q) in batched.row(t).iter().zip(solo.states.row(t)) {
                assert!((p - q).abs() < 1e-12);
            }
        }
        for (p, q) in g.value(enc.summary).row(0).iter().zip(solo.summary.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn fused_width_and_reduction() {
        let m = Seq2Seq::<f32>::new(Seq2SeqConfig::default(), toy_vocab(), 1).unwrap();
        let fuse = m.params.lookup("fuse.weight").unwrap();
        assert_eq!(m.params.get(fuse).shape(), &[1024, 256]);
        let enc = m.encode(&TokenSequence::new(vec![4, 5])).unwrap();
        assert_eq!(enc.states.cols(), 512);
        let keys = m.fuse_context(&enc, Some(&ctx(1, 512))).unwrap();
        assert_eq!(keys.keys.shape(), &[2, 256]);
        assert!(m.fuse_context(&enc, Some(&ctx(1, 100))).is_err());
    }

    #[test]
    fn different_contexts_give_different_keys() {
        let m = Seq2Seq::<f32>::new(toy_config(Mode::Css), toy_vocab(), 2).unwrap();
        let enc = m.encode(&TokenSequence::new(vec![4, 5, 6])).unwrap();
        let a = m.fuse_context(&enc, Some(&ctx(1, 5))).unwrap();
        let b = m.fuse_context(&enc, Some(&ctx(2, 5))).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn zero_context_matches_no_context_bitwise() {
        let m = Seq2Seq::<f32>::new(toy_config(Mode::Css), toy_vocab(), 6).unwrap();
        let enc = m.encode(&TokenSequence::new(vec![4, 5, 6, 7])).unwrap();
        let with_zero = m
            .fuse_context(&enc, Some(&ContextVector::zeros(5)))
            .unwrap();
        let without = m.fuse_context(&enc, None).unwrap();
        let bits = |k: &FusedKeys| {
            k.keys
                .data()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&with_zero), bits(&without));
    }

    #[test]
    fn attention_cases() {
        let mut m = Seq2Seq::<f64>::new(toy_config(Mode::Css), toy_vocab(), 1).unwrap();
        let single = FusedKeys {
            keys: Tensor::new(vec![1, 4], vec![0.3, -0.2, 0.1, 0.9]).unwrap(),
        };
        let (w, s) = m.attention(&[0.5, 0.1, -0.4, 0.2], &single).unwrap();
        assert_eq!(w, vec![1.0]);
        assert_eq!(s, single.keys.data());
        // Identity bilinear form, orthogonal keys.
        let mut eye = vec![0.0; 16];
        for i in 0..4 {
            eye[i * 4 + i] = 1.0;
        }
        m.params
            .set(m.attn_w, Tensor::new(vec![4, 4], eye).unwrap())
            .unwrap();
        let keys = FusedKeys {
            keys: Tensor::new(vec![2, 4], vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap(),
        };
        let (w, _) = m.attention(&[0.2, 0.7, 0.0, 0.0], &keys).unwrap();
        assert!(w[1] > w[0]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn decode_step_matches_hand_arithmetic() {
        // Hidden 2, vocab 4 (the specials only), zero initial state.
        let vocab = Vocabulary::from(
            ["<pad>", "<unk>", "<sos>", "<eos>"]
                .map(String::from)
                .to_vec(),
        );
        let cfg = Seq2SeqConfig {
            mode: Mode::Baseline1,
            embed_dim: 2,
            encoder_hidden: 2,
            decoder_hidden: 2,
            context_dim: 2,
            ..Seq2SeqConfig::default()
        };
        let m = Seq2Seq::<f64>::new(cfg, vocab, 11).unwrap();
        let keys = FusedKeys {
            keys: Tensor::new(vec![2, 2], vec![0.5, -0.3, 0.2, 0.8]).unwrap(),
        };
        let state = DecoderState {
            h: Tensor::zeros(&[1, 2]),
            c: Tensor::zeros(&[1, 2]),
        };
        let (logits, next) = m.decode_step(SOS, &state, &keys).unwrap();

        let p = |name: &str| m.params.get(m.params.lookup(name).unwrap()).clone();
        let x = p("decoder.embedding").row(SOS).to_vec();
        let (wx, b) = (p("decoder.lstm.w_x"), p("decoder.lstm.bias"));
        let mut z = b.data().to_vec();
        for (j, zj) in z.iter_mut().enumerate() {
            for (k, xk) in x.iter().enumerate() {
                *zj += xk * wx.data()[k * 8 + j];
            }
        }
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let c: Vec<f64> = (0..2).map(|u| sig(z[u]) * z[4 + u].tanh()).collect();
        let h: Vec<f64> = (0..2).map(|u| sig(z[6 + u]) * c[u].tanh()).collect();
        let wa = p("attention.weight");
        let q: Vec<f64> = (0..2)
            .map(|j| (0..2).map(|i| h[i] * wa.data()[i * 2 + j]).sum())
            .collect();
        let scores: Vec<f64> = (0..2)
            .map(|t| (0..2).map(|j| q[j] * keys.keys.row(t)[j]).sum())
            .collect();
        let mx = scores[0].max(scores[1]);
        let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
        let w: Vec<f64> = e.iter().map(|v| v / (e[0] + e[1])).collect();
        let summary: Vec<f64> = (0..2)
            .map(|j| w[0] * keys.keys.row(0)[j] + w[1] * keys.keys.row(1)[j])
            .collect();
        let feat = [h[0], h[1], summary[0], summary[1]];
        let (wo, bo) = (p("output.weight"), p("output.bias"));
        for (v, &got) in logits.iter().enumerate() {
            let expected: f64 =
                bo.data()[v] + (0..4).map(|i| feat[i] * wo.data()[i * 4 + v]).sum::<f64>();
            assert!((got - expected).abs() < 1e-12);
        }
        assert_eq!(logits.len(), 4);
        assert!((next.h.data()[0] - h[0]).abs() < 1e-12);
        assert!((next.c.data()[1] - c[1]).abs() < 1e-12);
    }

    fn toy_batch() -> BucketedBatch {
        let pairs = [
            DialoguePair {
                utterance: TokenSequence::new(vec![4, 5, 6]),
                response: TokenSequence::new(vec![6, 7]),
                conversation: 0,
                turn: 0,
            },
            DialoguePair {
                utterance: TokenSequence::new(vec![7]),
                response: TokenSequence::new(vec![5]),
                conversation: 0,
                turn: 1,
            },
        ];
        let refs: Vec<&DialoguePair> = pairs.iter().collect();
        BucketedBatch::from_pairs(&refs, vec![0, 1], 3)
    }

    #[test]
    fn initial_loss_near_uniform() {
        let m = Seq2Seq::<f64>::new(toy_config(Mode::Baseline1), toy_vocab(), 8).unwrap();
        let mut g = Graph::new(m.params());
        let (loss, tokens) = m.loss_graph(&mut g, &toy_batch(), None).unwrap();
        assert_eq!(tokens, 5);
        let ln_v = (m.vocab().len() as f64).ln();
        let l = g.value(loss).data()[0];
        assert!((l - ln_v).abs() < 0.1 * ln_v, "{l} vs {ln_v}");
    }

    #[test]
    fn extra_padding_leaves_loss_unchanged() {
        let m = Seq2Seq::<f64>::new(toy_config(Mode::Baseline1), toy_vocab(), 8).unwrap();
        let b = toy_batch();
        let mut wide = b.clone();
        wide.bucket = 6;
        for r in wide
            .utterances
            .iter_mut()
            .chain(&mut wide.decoder_inputs)
            .chain(&mut wide.targets)
        {
            r.resize(6, PAD);
        }
        let loss = |batch: &BucketedBatch| {
            let mut g = Graph::new(m.params());
            let (l, _) = m.loss_graph(&mut g, batch, None).unwrap();
            g.value(l).data()[0]
        };
        assert!((loss(&b) - loss(&wide)).abs() < 1e-12);
    }

    #[test]
    fn all_pad_batch_rejected() {
        let m = Seq2Seq::<f64>::new(toy_config(Mode::Baseline1), toy_vocab(), 8).unwrap();
        let mut b = toy_batch();
        b.target_lens = vec![0, 0];
        let mut g = Graph::new(m.params());
        assert!(m.loss_graph(&mut g, &b, None).is_err());
    }

    #[test]
    fn full_network_gradient_check() {
        for mode in [Mode::Css, Mode::Baseline1] {
            let mut m = Seq2Seq::<f64>::new(toy_config(mode), toy_vocab(), 21).unwrap();
            m.params
                .fill_uniform(1.0, &mut ChaCha8Rng::seed_from_u64(21));
            let b = toy_batch();
            let (c0, c1) = (ctx(3, 5), ctx(4, 5));
            let rows = [&c0, &c1];
            let report = gradient_check(
                m.params(),
                |g| Ok(m.loss_graph(g, &b, Some(&rows))?.0),
                1e-4,
            )
            .unwrap();
            assert!(report.passed(), "{mode}: {report}");
        }
    }

    #[test]
    fn baseline2_input_joins_window() {
        let m = Seq2Seq::<f32>::new(toy_config(Mode::Baseline2), toy_vocab(), 1).unwrap();
        let sep = m.vocab().separator().unwrap();
        let h = [TokenSequence::new(vec![5]), TokenSequence::new(vec![6, 7])];
        assert_eq!(m.input_for(&h).ids(), &[5, sep, 6, 7]);
        let b1 = Seq2Seq::<f32>::new(toy_config(Mode::Baseline1), toy_vocab(), 1).unwrap();
        assert_eq!(b1.input_for(&h).ids(), &[6, 7]);
        assert_eq!(b1.input_for(&[]).ids(), &[crate::corpus::UNK]);
        assert!(b1.allowed_tokens()[EOS]);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let m = Seq2Seq::<f32>::new(toy_config(Mode::Css), toy_vocab(), 2).unwrap();
        let c = m.to_checkpoint();
        let back = Seq2Seq::from_checkpoint(&c).unwrap();
        assert_eq!(
            back.to_checkpoint().to_bytes().unwrap(),
            c.to_bytes().unwrap()
        );
    }
}
