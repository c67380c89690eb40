use rand::seq::SliceRandom;

use super::dataset::{Batch, Dataset};
use crate::numerics::Rng;
use crate::{Error, Result};

/// One iteration's large batch `d_t` and its `M` shards `d_t^i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Iteration {
    pub batch: Batch,
    pub shards: Vec<Batch>,
}

/// Per-epoch seeded permutation of the dataset cut into consecutive blocks of
/// `b * M` examples; each block is cut into `M` consecutive shards of `b`. The
/// trailing remainder of each epoch is dropped.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    n: usize,
    shard_size: usize,
    workers: usize,
    rng: Rng,
}

impl BatchSampler {
    pub fn new(n: usize, shard_size: usize, workers: usize, rng: Rng) -> Result<Self> {
        if shard_size == 0 || workers == 0 {
            return Err(Error::invalid("shard size and worker count must be positive"));
        }
        let large = shard_size
            .checked_mul(workers)
            .ok_or_else(|| Error::invalid("b * M overflows"))?;
        if large > n {
            return Err(Error::invalid(format!(
                "b * M = {shard_size} * {workers} = {large} exceeds n = {n}"
            )));
        }
        Ok(Self {
            n,
            shard_size,
            workers,
            rng,
        })
    }

    pub fn iterations_per_epoch(&self) -> usize {
        self.n / (self.shard_size * self.workers)
    }

    pub fn epoch(&self, epoch: u64) -> Vec<Iteration> {
        let mut order: Vec<usize> = (0..self.n).collect();
        order.shuffle(&mut self.rng.derive(epoch).generator());

        let large = self.shard_size * self.workers;
        let per_epoch = self.iterations_per_epoch() as u64;
        order
            .chunks_exact(large)
            .enumerate()
            .map(|(k, block)| {
                let t = epoch * per_epoch + k as u64 + 1;
                let shards = block
                    .chunks_exact(self.shard_size)
                    .enumerate()
                    .map(|(i, s)| Batch {
                        indices: s.to_vec(),
                        shard_of: Some((t, i)),
                    })
                    .collect();
                Iteration {
                    batch: Batch {
                        indices: block.to_vec(),
                        shard_of: None,
                    },
                    shards,
                }
            })
            .collect()
    }
}

/// Batches of one epoch of `data`.
pub fn sample_batches(
    data: &Dataset,
    shard_size: usize,
    workers: usize,
    rng: Rng,
    epoch: u64,
) -> Result<Vec<Iteration>> {
    Ok(BatchSampler::new(data.n(), shard_size, workers, rng)?.epoch(epoch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{streams, Rng};
    use proptest::prelude::*;

    fn rng() -> Rng {
        Rng::new(3, streams::SAMPLER)
    }

    #[test]
    fn eight_examples_two_by_two() {
        let s = BatchSampler::new(8, 2, 2, rng()).unwrap();
        let its = s.epoch(0);
        assert_eq!(its.len(), 2);
        let mut seen: Vec<usize> = its.iter().flat_map(|it| it.batch.indices.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..8).collect::<Vec<_>>());
        assert_eq!(its[1].shards[1].shard_of, Some((2, 1)));
    }

    #[test]
    fn remainder_is_dropped() {
        let s = BatchSampler::new(10, 2, 2, rng()).unwrap();
        let its = s.epoch(4);
        assert_eq!(its.len(), 2);
        let used: usize = its.iter().map(|it| it.batch.len()).sum();
        assert_eq!(used, 8);
        assert_eq!(its[0].shards[0].shard_of, Some((9, 0)));
    }

    #[test]
    fn same_seed_same_sequence() {
        let a = BatchSampler::new(50, 3, 4, rng()).unwrap();
        let b = BatchSampler::new(50, 3, 4, rng()).unwrap();
        assert_eq!(a.epoch(2), b.epoch(2));
        assert_ne!(a.epoch(2), a.epoch(3));
    }

    #[test]
    fn oversized_batch_rejected() {
        assert!(BatchSampler::new(7, 2, 4, rng()).is_err());
        assert!(BatchSampler::new(7, 0, 4, rng()).is_err());
    }

    proptest! {
        #[test]
        fn shards_partition_the_batch(n in 1usize..200, b in 1usize..8, m in 1usize..8, seed: u64, epoch in 0u64..5) {
            prop_assume!(b * m <= n);
            let s = BatchSampler::new(n, b, m, Rng::new(seed, streams::SAMPLER)).unwrap();
            let its = s.epoch(epoch);
            prop_assert_eq!(its.len(), n / (b * m));
            let mut all = Vec::new();
            for it in &its {
                prop_assert_eq!(it.shards.len(), m);
                let joined: Vec<usize> = it.shards.iter().flat_map(|s| s.indices.clone()).collect();
                prop_assert_eq!(&joined, &it.batch.indices);
                prop_assert!(it.shards.iter().all(|s| s.len() == b));
                all.extend(joined);
            }
            let before = all.len();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), before);
            prop_assert!(all.iter().all(|&i| i < n));
        }
    }
}
