//! Seeded minibatch schedules.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DatasetSplit;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub shuffle_seed: u64,
    pub drop_last: bool,
}

impl BatchPlan {
    pub fn full(n: usize) -> Self {
        Self {
            batch_size: n,
            shuffle_seed: 0,
            drop_last: false,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        if self.drop_last && self.batch_size > n {
            return Err(invalid(format!(
                "batch size {} exceeds {n} examples with drop_last",
                self.batch_size
            )));
        }
        Ok(())
    }

    /// One batch per epoch covering the whole split.
    pub fn is_full_batch(&self, n: usize) -> bool {
        self.batch_size >= n
    }

    pub fn batches_per_epoch(&self, n: usize) -> usize {
        if self.drop_last {
            n / self.batch_size
        } else {
            n.div_ceil(self.batch_size)
        }
    }

    /// Example order for `epoch`; the identity in full-batch mode.
    pub fn epoch_order(&self, n: usize, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        if !self.is_full_batch(n) {
            let mut rng = ChaCha8Rng::seed_from_u64(self.shuffle_seed.wrapping_add(epoch));
            order.shuffle(&mut rng);
        }
        order
    }

    /// Index lists of every batch in `epoch`.
    pub fn epoch_batches(&self, n: usize, epoch: u64) -> Vec<Vec<usize>> {
        let order = self.epoch_order(n, epoch);
        let mut out: Vec<Vec<usize>> = order.chunks(self.batch_size).map(<[usize]>::to_vec).collect();
        if self.drop_last && out.last().is_some_and(|b| b.len() < self.batch_size) {
            out.pop();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub labels: Vec<u8>,
}

/// All batches of one epoch.
pub fn batches<'a>(split: &'a DatasetSplit, plan: &BatchPlan, epoch: u64) -> Result<impl Iterator<Item = Batch> + 'a> {
    plan.validate(split.len())?;
    Ok(plan
        .epoch_batches(split.len(), epoch)
        .into_iter()
        .map(move |idx| {
            let s = split.select(&idx);
            Batch {
                inputs: s.images,
                labels: s.labels,
            }
        }))
}

/// An endless sequence of batch index lists, reshuffled every epoch.
#[derive(Debug, Clone)]
pub struct BatchStream {
    plan: BatchPlan,
    n: usize,
    epoch: u64,
    pending: std::vec::IntoIter<Vec<usize>>,
}

impl BatchStream {
    pub fn new(plan: BatchPlan, n: usize) -> Result<Self> {
        plan.validate(n)?;
        if plan.batches_per_epoch(n) == 0 {
            return Err(invalid("batch plan yields no batches"));
        }
        Ok(Self {
            plan,
            n,
            epoch: 0,
            pending: plan.epoch_batches(n, 0).into_iter(),
        })
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn next_indices(&mut self) -> Vec<usize> {
        loop {
            if let Some(b) = self.pending.next() {
                return b;
            }
            self.epoch += 1;
            self.pending = self.plan.epoch_batches(self.n, self.epoch).into_iter();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split(n: usize) -> DatasetSplit {
        DatasetSplit::new("s", (0..n).map(|i| i as f64).collect(), vec![0; n], 1).unwrap()
    }

    #[test]
    fn full_batch_is_whole_split() {
        let s = split(7);
        let b: Vec<Batch> = batches(&s, &BatchPlan::full(7), 0).unwrap().collect();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].inputs, s.images);
    }

    #[test]
    fn drop_last_count() {
        let plan = BatchPlan {
            batch_size: 3,
            shuffle_seed: 1,
            drop_last: true,
        };
        assert_eq!(batches(&split(10), &plan, 0).unwrap().count(), 3);
        let keep = BatchPlan { drop_last: false, ..plan };
        let sizes: Vec<usize> = batches(&split(10), &keep, 0).unwrap().map(|b| b.labels.len()).collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
    }

    #[test]
    fn epochs_reshuffle_reproducibly() {
        let plan = BatchPlan {
            batch_size: 4,
            shuffle_seed: 42,
            drop_last: false,
        };
        let e0 = plan.epoch_order(20, 0);
        let e1 = plan.epoch_order(20, 1);
        assert_ne!(e0, e1);
        assert_eq!(e0, plan.epoch_order(20, 0));
        let mut sorted = e1.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn stream_crosses_epochs() {
        let plan = BatchPlan {
            batch_size: 4,
            shuffle_seed: 5,
            drop_last: false,
        };
        let mut s = BatchStream::new(plan, 10).unwrap();
        let first: Vec<Vec<usize>> = (0..3).map(|_| s.next_indices()).collect();
        assert_eq!(s.epoch(), 0);
        let next = s.next_indices();
        assert_eq!(s.epoch(), 1);
        assert_eq!(first, plan.epoch_batches(10, 0));
        assert_eq!(next, plan.epoch_batches(10, 1)[0]);
    }

    #[test]
    fn invalid_plans() {
        assert!(BatchPlan { batch_size: 0, shuffle_seed: 0, drop_last: false }.validate(5).is_err());
        assert!(BatchPlan { batch_size: 6, shuffle_seed: 0, drop_last: true }.validate(5).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn each_example_once_per_epoch(n in 1usize..200, bs in 1usize..50, seed: u64, epoch in 0u64..5) {
                let plan = BatchPlan { batch_size: bs, shuffle_seed: seed, drop_last: false };
                let mut seen: Vec<usize> = plan.epoch_batches(n, epoch).concat();
                seen.sort_unstable();
                prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            }
        }
    }
}
