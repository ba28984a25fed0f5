use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::Seq2Seq;
use crate::autodiff::{adam_step, AdamConfig, Graph, OptimizerState};
use crate::corpus::{bucket_batches, BatchConfig, BucketedBatch, DialoguePair};
use crate::da_encoder::ContextVector;
use crate::error::{Error, Result};
use crate::history::{LossHistory, Split};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seq2SeqTrainConfig {
    pub epochs: usize,
    /// Set from the run's global seed.
    #[serde(skip)]
    pub seed: u64,
    pub batch: BatchConfig,
    pub adam: AdamConfig,
    /// Stop once an epoch's mean train loss falls below this.
    pub target_loss: Option<f64>,
}

impl Default for Seq2SeqTrainConfig {
    fn default() -> Self {
        Seq2SeqTrainConfig {
            epochs: 10,
            seed: 0,
            batch: BatchConfig::default(),
            adam: AdamConfig::default(),
            target_loss: None,
        }
    }
}

fn batch_context<'c>(
    model: &Seq2Seq<f32>,
    batch: &BucketedBatch,
    ctx: &'c [ContextVector],
) -> Option<Vec<&'c ContextVector>> {
    model
        .mode()
        .uses_context()
        .then(|| batch.pair_indices.iter().map(|&i| &ctx[i]).collect())
}

fn check_contexts(
    model: &Seq2Seq<f32>,
    pairs: &[DialoguePair],
    ctx: &[ContextVector],
) -> Result<()> {
    if model.mode().uses_context() && ctx.len() != pairs.len() {
        return Err(Error::Config(format!(
            "css training needs one context vector per pair ({} pairs, {} vectors)",
            pairs.len(),
            ctx.len()
        )));
    }
    Ok(())
}

/// Teacher-forced training with Adam. Writes one train row per epoch (token
/// weighted mean loss before each update) and, when `validation` is
/// non-empty, one validation row. `*_ctx` are ignored outside css mode.
pub fn train_seq2seq(
    model: &mut Seq2Seq<f32>,
    train: &[DialoguePair],
    train_ctx: &[ContextVector],
    validation: &[DialoguePair],
    validation_ctx: &[ContextVector],
    cfg: &Seq2SeqTrainConfig,
) -> Result<LossHistory> {
    if train.is_empty() {
        return Err(Error::Config("seq2seq training set is empty".into()));
    }
    cfg.batch.validate()?;
    check_contexts(model, train, train_ctx)?;
    check_contexts(model, validation, validation_ctx)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::new(model.params(), cfg.adam.clone());
    let mut history = LossHistory::default();
    for epoch in 1..=cfg.epochs {
        let batches = bucket_batches(train, &cfg.batch, rng.next_u64())?;
        if batches.batches.is_empty() {
            return Err(Error::Config(
                "no training pair fits the bucket bounds".into(),
            ));
        }
        let (mut loss_sum, mut tokens) = (0.0f64, 0usize);
        for batch in &batches.batches {
            let rows = batch_context(model, batch, train_ctx);
            let mut grads = {
                let mut g = Graph::new(model.params());
                let (loss, n) = model.loss_graph(&mut g, batch, rows.as_deref())?;
                loss_sum += g.value(loss).data()[0] as f64 * n as f64;
                tokens += n;
                g.backward(loss)?
            };
            adam_step(model.params_mut(), &mut grads, &mut opt)?;
        }
        let train_loss = loss_sum / tokens as f64;
        history.push(epoch, Split::Train, train_loss, None);
        if !validation.is_empty() {
            let v = validation_loss(model, validation, validation_ctx, &cfg.batch)?;
            history.push(epoch, Split::Validation, v, None);
        }
        log::info!("epoch {epoch}: train loss {train_loss:.4}");
        if cfg.target_loss.is_some_and(|t| train_loss < t) {
            break;
        }
    }
    Ok(history)
}

/// Token-weighted mean per-token loss, no updates.
pub fn validation_loss(
    model: &Seq2Seq<f32>,
    pairs: &[DialoguePair],
    ctx: &[ContextVector],
    batch: &BatchConfig,
) -> Result<f64> {
    check_contexts(model, pairs, ctx)?;
    let batches = bucket_batches(pairs, batch, 0)?;
    let (mut sum, mut tokens) = (0.0f64, 0usize);
    for b in &batches.batches {
        let rows = batch_context(model, b, ctx);
        let mut g = Graph::new(model.params());
        let (loss, n) = model.loss_graph(&mut g, b, rows.as_deref())?;
        sum += g.value(loss).data()[0] as f64 * n as f64;
        tokens += n;
    }
    if tokens == 0 {
        return Err(Error::Input(
            "no validation pair fits the bucket bounds".into(),
        ));
    }
    Ok(sum / tokens as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{TokenSequence, Vocabulary};
    use crate::seq2seq::{Mode, Seq2SeqConfig};

    fn setup(mode: Mode) -> (Seq2Seq<f32>, Vec<DialoguePair>) {
        let vocab = Vocabulary::build(vec![vec!["a", "b", "c", "d"]], 10).unwrap();
        let cfg = Seq2SeqConfig {
            mode,
            embed_dim: 6,
            encoder_hidden: 6,
            decoder_hidden: 6,
            context_dim: 3,
            ..Seq2SeqConfig::default()
        };
        let pairs = (0..6)
            .map(|i| DialoguePair {
                utterance: TokenSequence::new(vec![4 + i % 4, 5]),
                response: TokenSequence::new(vec![4 + (i + 1) % 4]),
                conversation: i,
                turn: 0,
            })
            .collect();
        (Seq2Seq::new(cfg, vocab, 0).unwrap(), pairs)
    }

    #[test]
    fn loss_decreases_and_is_reproducible() {
        let cfg = Seq2SeqTrainConfig {
            epochs: 15,
            adam: AdamConfig {
                lr: 1e-2,
                ..AdamConfig::default()
            },
            ..Seq2SeqTrainConfig::default()
        };
        let (mut a, pairs) = setup(Mode::Baseline1);
        let ha = train_seq2seq(&mut a, &pairs, &[], &pairs, &[], &cfg).unwrap();
        let first = ha.records[0].loss;
        let last = ha.last(Split::Train).unwrap().loss;
        assert!(last < first, "{first} -> {last}");
        let (mut b, _) = setup(Mode::Baseline1);
        let hb = train_seq2seq(&mut b, &pairs, &[], &pairs, &[], &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(
            a.to_checkpoint().to_bytes().unwrap(),
            b.to_checkpoint().to_bytes().unwrap()
        );
    }

    #[test]
    fn css_requires_contexts() {
        let (mut m, pairs) = setup(Mode::Css);
        let err = train_seq2seq(
            &mut m,
            &pairs,
            &[],
            &[],
            &[],
            &Seq2SeqTrainConfig::default(),
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
