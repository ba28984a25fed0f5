//! Dialogue-act text CNN whose pre-softmax hidden layer is the context vector.
//!
//! embed → parallel valid convolutions → max-over-time → concat → affine +
//! nonlinearity (hidden) → affine → softmax over the act classes.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    adam_step, softmax, Activation, AdamConfig, Graph, NodeId, OptimizerState, ParamId, ParamStore,
    Scalar,
};
use crate::checkpoint::{Checkpoint, ModelKind};
use crate::corpus::{tokenize, DialogueAct, TokenSequence, Vocabulary, PAD, UNK};
use crate::error::{Error, Result};
use crate::history::{LossHistory, Split};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenActivation {
    Relu,
    Tanh,
    Sigmoid,
}

impl From<HiddenActivation> for Activation {
    fn from(h: HiddenActivation) -> Self {
        match h {
            HiddenActivation::Relu => Activation::Relu,
            HiddenActivation::Tanh => Activation::Tanh,
            HiddenActivation::Sigmoid => Activation::Sigmoid,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DaConfig {
    pub embed_dim: usize,
    pub max_len: usize,
    pub windows: Vec<usize>,
    pub filters_per_window: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub hidden_activation: HiddenActivation,
    /// Dropout on the pooled features during training.
    pub dropout: f64,
}

impl Default for DaConfig {
    fn default() -> Self {
        DaConfig {
            embed_dim: 128,
            max_len: 25,
            windows: vec![3, 4, 5, 6, 8],
            filters_per_window: 128,
            hidden_dim: 512,
            num_classes: DialogueAct::COUNT,
            hidden_activation: HiddenActivation::Relu,
            dropout: 0.5,
        }
    }
}

impl DaConfig {
    pub fn pooled_dim(&self) -> usize {
        self.filters_per_window * self.windows.len()
    }

    /// Convolution output lengths, one per window.
    pub fn conv_lengths(&self) -> Vec<usize> {
        self.windows.iter().map(|w| self.max_len + 1 - w).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let max_w = self.windows.iter().copied().max().unwrap_or(0);
        if self.windows.is_empty() || self.windows.contains(&0) {
            return Err(Error::Config(
                "context model needs positive window sizes".into(),
            ));
        }
        let mut sorted = self.windows.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.windows.len() {
            return Err(Error::Config(
                "context model window sizes must be distinct".into(),
            ));
        }
        if self.max_len < max_w {
            return Err(Error::Config(format!(
                "max_len {} shorter than the widest window {max_w}",
                self.max_len
            )));
        }
        if self.embed_dim == 0 || self.filters_per_window == 0 || self.hidden_dim == 0 {
            return Err(Error::Config(
                "context model dimensions must be positive".into(),
            ));
        }
        if !(2..=DialogueAct::COUNT).contains(&self.num_classes) {
            return Err(Error::Config(format!(
                "num_classes must be in 2..={}, got {}",
                DialogueAct::COUNT,
                self.num_classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Pre-softmax hidden activation of the context model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextVector(Vec<f32>);

impl ContextVector {
    pub fn new(values: Vec<f32>) -> Self {
        ContextVector(values)
    }

    pub fn zeros(dim: usize) -> Self {
        ContextVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

/// Elementwise mean; an empty list gives the zero vector of `dim`.
pub fn average_context(vectors: &[&ContextVector], dim: usize) -> Result<ContextVector> {
    if let Some(bad) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(Error::Shape(format!(
            "context vector of {} values, expected {dim}",
            bad.dim()
        )));
    }
    if vectors.is_empty() {
        return Ok(ContextVector::zeros(dim));
    }
    let mut acc = vec![0.0f64; dim];
    for v in vectors {
        for (a, &x) in acc.iter_mut().zip(v.values()) {
            *a += x as f64;
        }
    }
    let n = vectors.len() as f64;
    Ok(ContextVector(
        acc.into_iter().map(|a| (a / n) as f32).collect(),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DaOutput {
    pub hidden: ContextVector,
    pub probs: Vec<f32>,
}

impl DaOutput {
    /// Most probable class; ties go to the lower index.
    pub fn act(&self) -> DialogueAct {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        DialogueAct::from_index(best).unwrap_or(DialogueAct::Other)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledUtterance {
    pub tokens: TokenSequence,
    pub label: DialogueAct,
}

struct ConvLayer {
    width: usize,
    filters: ParamId,
    bias: ParamId,
}

pub struct DaEncoder<T: Scalar = f32> {
    config: DaConfig,
    vocab: Vocabulary,
    params: ParamStore<T>,
    embedding: ParamId,
    convs: Vec<ConvLayer>,
    hidden_w: ParamId,
    hidden_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

impl<T: Scalar> DaEncoder<T> {
    pub fn new(config: DaConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let (v, e, f) = (vocab.len(), config.embed_dim, config.filters_per_window);
        let embedding = params.add_glorot("embedding", &[v, e], v, e, &mut rng);
        let mut convs = Vec::new();
        for &w in &config.windows {
            let filters =
                params.add_glorot(format!("conv{w}.filters"), &[w, e, f], w * e, f, &mut rng);
            let bias = params.add_zeros(format!("conv{w}.bias"), &[f]);
            convs.push(ConvLayer {
                width: w,
                filters,
                bias,
            });
        }
        let (p, h, c) = (config.pooled_dim(), config.hidden_dim, config.num_classes);
        let hidden_w = params.add_glorot("hidden.weight", &[p, h], p, h, &mut rng);
        let hidden_b = params.add_zeros("hidden.bias", &[h]);
        let out_w = params.add_glorot("output.weight", &[h, c], h, c, &mut rng);
        let out_b = params.add_zeros("output.bias", &[c]);
        Ok(DaEncoder {
            config,
            vocab,
            params,
            embedding,
            convs,
            hidden_w,
            hidden_b,
            out_w,
            out_b,
        })
    }

    pub fn config(&self) -> &DaConfig {
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

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub fn encode_text(&self, text: &str) -> TokenSequence {
        self.vocab.encode(&tokenize(text), self.config.max_len)
    }

    /// Fixed-length model input: first `max_len` ids, PAD after, UNK if empty.
    pub fn prepare(&self, seq: &TokenSequence) -> Vec<usize> {
        let mut ids: Vec<usize> = seq
            .ids()
            .iter()
            .copied()
            .take(self.config.max_len)
            .collect();
        if ids.is_empty() {
            ids.push(UNK);
        }
        ids.resize(self.config.max_len, PAD);
        ids
    }

    /// Builds hidden (`B×hidden_dim`) and logits (`B×classes`) nodes for
    /// prepared inputs. `dropout_rng` enables training-mode dropout.
    pub fn forward_graph<R: Rng>(
        &self,
        g: &mut Graph<'_, T>,
        inputs: &[Vec<usize>],
        dropout_rng: Option<&mut R>,
    ) -> Result<(NodeId, NodeId)> {
        let l = self.config.max_len;
        let flat: Vec<usize> = inputs.iter().flat_map(|r| r.iter().copied()).collect();
        if inputs.iter().any(|r| r.len() != l) {
            return Err(Error::Shape(format!(
                "context model inputs must have length {l}"
            )));
        }
        if let Some(&bad) = flat.iter().find(|&&i| i >= self.vocab.len()) {
            return Err(Error::Index(format!("token id {bad} outside vocabulary")));
        }
        let table = g.param(self.embedding);
        let emb = g.gather(table, &flat)?;
        let mut pooled = Vec::with_capacity(self.convs.len());
        for c in &self.convs {
            let k = g.param(c.filters);
            let b = g.param(c.bias);
            let conv = g.conv1d_valid(emb, k, b, l)?;
            pooled.push(g.max_over_time(conv, l + 1 - c.width)?);
        }
        let mut features = g.concat_cols(&pooled)?;
        if let Some(rng) = dropout_rng {
            let p = self.config.dropout;
            if p > 0.0 {
                let keep = T::from_f64(1.0 / (1.0 - p));
                let n = g.value(features).len();
                let mask = (0..n)
                    .map(|_| {
                        if rng.gen::<f64>() < p {
                            T::zero()
                        } else {
                            keep
                        }
                    })
                    .collect();
                features = g.mul_const(features, mask)?;
            }
        }
        let pre = g.affine(features, self.hidden_w, self.hidden_b)?;
        let hidden = g.activation(pre, self.config.hidden_activation.into());
        let logits = g.affine(hidden, self.out_w, self.out_b)?;
        Ok((hidden, logits))
    }

    /// Mean cross-entropy over a labelled batch.
    pub fn loss_graph<R: Rng>(
        &self,
        g: &mut Graph<'_, T>,
        inputs: &[Vec<usize>],
        labels: &[usize],
        dropout_rng: Option<&mut R>,
    ) -> Result<NodeId> {
        let (_, logits) = self.forward_graph(g, inputs, dropout_rng)?;
        let w = T::from_f64(1.0 / inputs.len() as f64);
        g.softmax_cross_entropy(logits, labels, &vec![w; labels.len()])
    }

    pub fn forward_batch(&self, seqs: &[TokenSequence]) -> Result<Vec<DaOutput>> {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(64) {
            let inputs: Vec<Vec<usize>> = chunk.iter().map(|s| self.prepare(s)).collect();
            let mut g = Graph::new(&self.params);
            let (hidden, logits) = self.forward_graph::<ChaCha8Rng>(&mut g, &inputs, None)?;
            let (hv, lv) = (g.value(hidden), g.value(logits));
            for r in 0..inputs.len() {
                let hidden = ContextVector(hv.row(r).iter().map(|v| v.as_f64() as f32).collect());
                let probs = softmax(lv.row(r))
                    .into_iter()
                    .map(|p| p.as_f64() as f32)
                    .collect();
                out.push(DaOutput { hidden, probs });
            }
        }
        Ok(out)
    }

    pub fn forward(&self, seq: &TokenSequence) -> Result<DaOutput> {
        Ok(self.forward_batch(std::slice::from_ref(seq))?.remove(0))
    }

    pub fn forward_text(&self, text: &str) -> Result<DaOutput> {
        self.forward(&self.encode_text(text))
    }
}

impl DaEncoder<f32> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_params(
            ModelKind::DaEncoder,
            serde_json::json!({ "model": self.config, "run": null }),
            self.vocab.tokens().to_vec(),
            &self.params,
        )
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind(ModelKind::DaEncoder)?;
        let config: DaConfig = serde_json::from_value(ckpt.config["model"].clone())
            .map_err(|e| Error::Checkpoint(format!("context model config: {e}")))?;
        let vocab = Vocabulary::from(ckpt.vocab.clone());
        let mut model = DaEncoder::new(config, vocab, 0)?;
        ckpt.restore_into(&mut model.params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    /// Loads a checkpoint; with `expected`, the stored config must match it.
    pub fn load(path: &Path, expected: Option<&DaConfig>) -> Result<Self> {
        let model = Self::from_checkpoint(&Checkpoint::load(path)?)?;
        if let Some(exp) = expected {
            if exp != &model.config {
                return Err(Error::Checkpoint(format!(
                    "{}: stored context-model config differs from the runtime config",
                    path.display()
                )));
            }
        }
        Ok(model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DaTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Set from the run's global seed.
    #[serde(skip)]
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for DaTrainConfig {
    fn default() -> Self {
        DaTrainConfig {
            epochs: 10,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

/// Minimizes cross-entropy; one train row (running loss and accuracy under
/// dropout) and, when `validation` is non-empty, one validation row per epoch.
pub fn train_da(
    model: &mut DaEncoder<f32>,
    train: &[LabeledUtterance],
    validation: &[LabeledUtterance],
    cfg: &DaTrainConfig,
) -> Result<LossHistory> {
    if train.is_empty() {
        return Err(Error::Config("context-model training set is empty".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Config(
            "epochs and batch size must be positive".into(),
        ));
    }
    if let Some(u) = train
        .iter()
        .chain(validation)
        .find(|u| u.label.index() >= model.config.num_classes)
    {
        return Err(Error::Config(format!(
            "label {} outside the model's {} classes",
            u.label, model.config.num_classes
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::new(&model.params, cfg.adam.clone());
    let inputs: Vec<Vec<usize>> = train.iter().map(|u| model.prepare(&u.tokens)).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = LossHistory::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Vec<usize>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train[i].label.index()).collect();
            let mut grads = {
                let mut g = Graph::new(&model.params);
                let (_, logits) = model.forward_graph(&mut g, &batch, Some(&mut rng))?;
                for (r, &y) in labels.iter().enumerate() {
                    if argmax(g.value(logits).row(r)) == y {
                        correct += 1;
                    }
                }
                let w = 1.0 / batch.len() as f32;
                let loss = g.softmax_cross_entropy(logits, &labels, &vec![w; labels.len()])?;
                loss_sum += g.value(loss).data()[0] as f64 * batch.len() as f64;
                g.backward(loss)?
            };
            adam_step(&mut model.params, &mut grads, &mut opt)?;
        }
        history.push(
            epoch,
            Split::Train,
            loss_sum / train.len() as f64,
            Some(correct as f64 / train.len() as f64),
        );
        if !validation.is_empty() {
            let (acc, loss, _) = evaluate_with_loss(model, validation)?;
            history.push(epoch, Split::Validation, loss, Some(acc));
        }
    }
    Ok(history)
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// 10×10 counts, rows are true classes, columns predictions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; DialogueAct::COUNT]; DialogueAct::COUNT],
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: DialogueAct, predicted: DialogueAct) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn count(&self, truth: DialogueAct, predicted: DialogueAct) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..DialogueAct::COUNT).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> [u64; DialogueAct::COUNT] {
        let mut s = [0; DialogueAct::COUNT];
        for (i, row) in self.counts.iter().enumerate() {
            s[i] = row.iter().sum();
        }
        s
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let names: Vec<&str> = DialogueAct::ALL.iter().map(|a| a.name()).collect();
        writeln!(w, "{}", names.join(","))?;
        for row in &self.counts {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }
}

fn evaluate_with_loss<T: Scalar>(
    model: &DaEncoder<T>,
    data: &[LabeledUtterance],
) -> Result<(f64, f64, ConfusionMatrix)> {
    if model.config.num_classes != DialogueAct::COUNT {
        return Err(Error::Checkpoint(format!(
            "model predicts {} classes, evaluation needs {}",
            model.config.num_classes,
            DialogueAct::COUNT
        )));
    }
    let mut cm = ConfusionMatrix::default();
    let mut loss = 0.0;
    let seqs: Vec<TokenSequence> = data.iter().map(|u| u.tokens.clone()).collect();
    for (u, out) in data.iter().zip(model.forward_batch(&seqs)?) {
        loss -= (out.probs[u.label.index()].max(f32::MIN_POSITIVE) as f64).ln();
        cm.record(u.label, out.act());
    }
    let n = data.len().max(1) as f64;
    Ok((cm.accuracy(), loss / n, cm))
}

/// Accuracy (trace / total) and confusion matrix over `data`.
pub fn evaluate_da<T: Scalar>(
    model: &DaEncoder<T>,
    data: &[LabeledUtterance],
) -> Result<(f64, ConfusionMatrix)> {
    let (acc, _, cm) = evaluate_with_loss(model, data)?;
    Ok((acc, cm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradient_check;

    fn tiny_vocab() -> Vocabulary {
        Vocabulary::build(vec![vec!["a", "b", "c", "d", "e"]], 20).unwrap()
    }

    fn small_config() -> DaConfig {
        DaConfig {
            embed_dim: 4,
            max_len: 6,
            windows: vec![2, 3],
            filters_per_window: 2,
            hidden_dim: 8,
            dropout: 0.0,
            ..DaConfig::default()
        }
    }

    #[test]
    fn default_dimension_chain() {
        let c = DaConfig::default();
        assert_eq!(c.pooled_dim(), 640);
        assert_eq!(c.hidden_dim, 512);
        assert_eq!(c.conv_lengths(), vec![23, 22, 21, 20, 18]);
        assert_eq!(c.num_classes, 10);
    }

    #[test]
    fn probs_normalized_and_hidden_sized() {
        let m = DaEncoder::<f32>::new(small_config(), tiny_vocab(), 1).unwrap();
        let out = m.forward_text("a b c d e a b c d e").unwrap();
        assert_eq!(out.hidden.dim(), 8);
        assert_eq!(out.probs.len(), 10);
        let s: f32 = out.probs.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        let empty = m.forward_text("").unwrap();
        assert!(empty.hidden.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn extraction_is_pure() {
        let m = DaEncoder::<f32>::new(small_config(), tiny_vocab(), 5).unwrap();
        let a = m.forward_text("a c e").unwrap();
        let b = m.forward_text("a c e").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reduced_network_passes_gradient_check() {
        let m = DaEncoder::<f64>::new(small_config(), tiny_vocab(), 9).unwrap();
        let inputs: Vec<Vec<usize>> = ["a b c d e a", "c", "e d"]
            .iter()
            .map(|t| m.prepare(&m.encode_text(t)))
            .collect();
        let labels = [1, 4, 9];
        let report = gradient_check(
            m.params(),
            |g| m.loss_graph::<ChaCha8Rng>(g, &inputs, &labels, None),
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn average_context_cases() {
        let v = ContextVector::new(vec![1.0, -2.0, 3.0]);
        let w = ContextVector::new(vec![3.0, 0.0, -1.0]);
        assert_eq!(average_context(&[&v, &v], 3).unwrap(), v);
        assert_eq!(average_context(&[], 3).unwrap(), ContextVector::zeros(3));
        assert_eq!(
            average_context(&[&v, &w], 3).unwrap().values(),
            &[2.0, -1.0, 1.0]
        );
        assert!(average_context(&[&v], 4).is_err());
    }

    #[test]
    fn confusion_matrix_accounting() {
        let mut cm = ConfusionMatrix::default();
        for a in DialogueAct::ALL {
            cm.record(a, a);
        }
        cm.record(DialogueAct::Question, DialogueAct::Other);
        assert_eq!(cm.total(), 11);
        assert_eq!(cm.trace(), 10);
        assert_eq!(cm.row_sums()[DialogueAct::Question.index()], 2);
        assert!((cm.accuracy() - 10.0 / 11.0).abs() < 1e-12);
        let mut buf = Vec::new();
        cm.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.starts_with("Accept,NonOpinionated,"));
    }

    #[test]
    fn empty_training_set_is_config_error() {
        let mut m = DaEncoder::<f32>::new(small_config(), tiny_vocab(), 1).unwrap();
        let err = train_da(&mut m, &[], &[], &DaTrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let m = DaEncoder::<f32>::new(small_config(), tiny_vocab(), 2).unwrap();
        let c = m.to_checkpoint();
        let back = DaEncoder::from_checkpoint(&c).unwrap();
        assert_eq!(
            back.to_checkpoint().to_bytes().unwrap(),
            c.to_bytes().unwrap()
        );
        assert_eq!(
            back.forward_text("a b").unwrap(),
            m.forward_text("a b").unwrap()
        );
    }
}
