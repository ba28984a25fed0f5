use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{TokenSequence, EOS, PAD, SOS};
use crate::error::{Error, Result};

pub const MAX_SEQ_LEN: usize = 50;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DialoguePair {
    pub utterance: TokenSequence,
    /// Response content ids, without SOS/EOS.
    pub response: TokenSequence,
    pub conversation: usize,
    pub turn: usize,
}

/// A padded batch of pairs sharing one length bucket.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BucketedBatch {
    pub bucket: usize,
    /// `rows × bucket` utterance ids, PAD after the true length.
    pub utterances: Vec<Vec<usize>>,
    /// `rows × bucket` decoder inputs: SOS, response ids, PAD.
    pub decoder_inputs: Vec<Vec<usize>>,
    /// `rows × bucket` decoder targets: response ids, EOS, PAD.
    pub targets: Vec<Vec<usize>>,
    pub utterance_lens: Vec<usize>,
    /// Response length + 1 (the EOS / SOS step).
    pub target_lens: Vec<usize>,
    /// Index of each row's pair in the input slice.
    pub pair_indices: Vec<usize>,
}

impl BucketedBatch {
    pub fn rows(&self) -> usize {
        self.utterances.len()
    }

    /// Builds a single batch from pairs padded to `bucket`.
    pub fn from_pairs(pairs: &[&DialoguePair], indices: Vec<usize>, bucket: usize) -> Self {
        let mut b = BucketedBatch {
            bucket,
            utterances: Vec::with_capacity(pairs.len()),
            decoder_inputs: Vec::with_capacity(pairs.len()),
            targets: Vec::with_capacity(pairs.len()),
            utterance_lens: Vec::with_capacity(pairs.len()),
            target_lens: Vec::with_capacity(pairs.len()),
            pair_indices: indices,
        };
        for p in pairs {
            let utt = p.utterance.clone().or_unk();
            b.utterance_lens.push(utt.len().min(bucket));
            b.utterances.push(utt.padded(bucket));
            let resp = p.response.ids();
            let n = resp.len().min(bucket.saturating_sub(1));
            let mut dec = Vec::with_capacity(bucket);
            dec.push(SOS);
            dec.extend_from_slice(&resp[..n]);
            dec.resize(bucket, PAD);
            let mut tgt = Vec::with_capacity(bucket);
            tgt.extend_from_slice(&resp[..n]);
            tgt.push(EOS);
            tgt.resize(bucket, PAD);
            b.decoder_inputs.push(dec);
            b.targets.push(tgt);
            b.target_lens.push(n + 1);
        }
        b
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchConfig {
    pub bucket_bounds: Vec<usize>,
    pub batch_size: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            bucket_bounds: vec![10, 15, 25, 50],
            batch_size: 32,
        }
    }
}

impl BatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bucket_bounds.is_empty()
            || self.bucket_bounds.windows(2).any(|w| w[0] >= w[1])
            || self.bucket_bounds[0] == 0
        {
            return Err(Error::Config(format!(
                "bucket bounds must be strictly ascending and positive, got {:?}",
                self.bucket_bounds
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Smallest bound that fits `max(len(utt), len(resp) + 1)`.
pub fn bucket_for(pair: &DialoguePair, bounds: &[usize]) -> Option<usize> {
    let need = pair.utterance.len().max(1).max(pair.response.len() + 1);
    bounds.iter().copied().find(|&b| b >= need)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batches {
    pub batches: Vec<BucketedBatch>,
    pub dropped: usize,
}

/// Buckets, shuffles and batches pairs; a pure function of its inputs.
pub fn bucket_batches(pairs: &[DialoguePair], config: &BatchConfig, seed: u64) -> Result<Batches> {
    config.validate()?;
    let bounds = &config.bucket_bounds;
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); bounds.len()];
    let mut dropped = 0;
    for (i, p) in pairs.iter().enumerate() {
        match bucket_for(p, bounds) {
            Some(b) => buckets[bounds.iter().position(|&x| x == b).unwrap_or(0)].push(i),
            None => dropped += 1,
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batches = Vec::new();
    for (members, &bound) in buckets.iter_mut().zip(bounds) {
        members.shuffle(&mut rng);
        for chunk in members.chunks(config.batch_size) {
            let rows: Vec<&DialoguePair> = chunk.iter().map(|&i| &pairs[i]).collect();
            batches.push(BucketedBatch::from_pairs(&rows, chunk.to_vec(), bound));
        }
    }
    batches.shuffle(&mut rng);
    Ok(Batches { batches, dropped })
}

/// Joins the last `k` utterances with `separator`, keeping the rightmost
/// `max_len` ids.
pub fn window_concat(
    history: &[TokenSequence],
    k: usize,
    separator: usize,
    max_len: usize,
) -> TokenSequence {
    let k = k.max(1);
    let start = history.len().saturating_sub(k);
    let mut ids = Vec::new();
    for (n, seq) in history[start..].iter().enumerate() {
        if n > 0 {
            ids.push(separator);
        }
        ids.extend_from_slice(seq.ids());
    }
    if ids.len() > max_len {
        ids.drain(..ids.len() - max_len);
    }
    TokenSequence::new(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(u: usize, r: usize) -> DialoguePair {
        DialoguePair {
            utterance: TokenSequence::new(vec![5; u]),
            response: TokenSequence::new(vec![6; r]),
            conversation: 0,
            turn: 0,
        }
    }

    #[test]
    fn bucket_assignment() {
        let bounds = [10, 25, 50];
        assert_eq!(bucket_for(&pair(7, 9), &bounds), Some(10));
        assert_eq!(bucket_for(&pair(7, 10), &bounds), Some(25));
        assert_eq!(bucket_for(&pair(30, 60), &bounds), None);
    }

    #[test]
    fn overlong_pairs_are_dropped_and_counted() {
        let pairs = vec![pair(3, 3), pair(30, 60), pair(51, 2)];
        let out = bucket_batches(&pairs, &BatchConfig::default(), 0).unwrap();
        assert_eq!(out.dropped, 2);
        assert_eq!(out.batches.len(), 1);
        let b = &out.batches[0];
        assert_eq!(b.bucket, 10);
        assert_eq!(b.decoder_inputs[0][..5], [SOS, 6, 6, 6, PAD]);
        assert_eq!(b.targets[0][..5], [6, 6, 6, EOS, PAD]);
        assert_eq!(b.target_lens[0], 4);
    }

    #[test]
    fn same_seed_same_stream() {
        let pairs: Vec<_> = (0..100).map(|i| pair(1 + i % 40, i % 30)).collect();
        let cfg = BatchConfig {
            batch_size: 7,
            ..BatchConfig::default()
        };
        let a = bucket_batches(&pairs, &cfg, 42).unwrap();
        let b = bucket_batches(&pairs, &cfg, 42).unwrap();
        assert_eq!(a, b);
        let c = bucket_batches(&pairs, &cfg, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bad_bounds_rejected() {
        let cfg = BatchConfig {
            bucket_bounds: vec![10, 10],
            batch_size: 1,
        };
        assert!(bucket_batches(&[], &cfg, 0).is_err());
    }

    #[test]
    fn window_cases() {
        let h = vec![
            TokenSequence::new(vec![10, 11]),
            TokenSequence::new(vec![12]),
            TokenSequence::new(vec![13, 14, 15]),
        ];
        assert_eq!(window_concat(&h, 1, 4, 50).ids(), &[13, 14, 15]);
        assert_eq!(window_concat(&h, 2, 4, 50).ids(), &[12, 4, 13, 14, 15]);
        let long = vec![TokenSequence::new((100..140).collect()); 2];
        let w = window_concat(&long, 2, 4, 50);
        assert_eq!(w.len(), 50);
        assert_eq!(*w.ids().last().unwrap(), 139);
        assert_eq!(w.ids()[0], 131);
        assert_eq!(w.ids()[9], 4);
    }

    proptest! {
        #[test]
        fn rows_respect_bucket_and_padding(
            lens in proptest::collection::vec((0usize..60, 0usize..60), 1..80),
            seed in 0u64..1000,
            batch_size in 1usize..10,
        ) {
            let pairs: Vec<_> = lens.iter().map(|&(u, r)| pair(u, r)).collect();
            let cfg = BatchConfig { batch_size, ..BatchConfig::default() };
            let out = bucket_batches(&pairs, &cfg, seed).unwrap();
            let kept: usize = out.batches.iter().map(|b| b.rows()).sum();
            prop_assert_eq!(kept + out.dropped, pairs.len());
            for b in &out.batches {
                for r in 0..b.rows() {
                    prop_assert!(b.utterance_lens[r] <= b.bucket);
                    prop_assert!(b.target_lens[r] <= b.bucket);
                    for row in [&b.utterances[r], &b.targets[r]] {
                        let first_pad = row.iter().position(|&x| x == PAD).unwrap_or(row.len());
                        prop_assert!(row[first_pad..].iter().all(|&x| x == PAD));
                    }
                }
            }
        }
    }
}
