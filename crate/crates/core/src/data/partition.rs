use rand::seq::SliceRandom;

use super::{Batch, Dataset};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

/// Assignment of sample indices to workers: every worker sees the shared
/// overlap set plus its own disjoint unique set.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    overlap_ratio: f64,
    worker_count: usize,
    seed: u64,
    overlap: Vec<usize>,
    unique: Vec<Vec<usize>>,
    shards: Vec<Vec<usize>>,
}

/// `floor(r * n)`, nudged so that ratios like 0.29 * 100 land on 29.
fn overlap_size(r: f64, n: usize) -> usize {
    (r * n as f64 + 1e-9).floor() as usize
}

impl PartitionPlan {
    /// Partitions `n` samples. The overlap set is a prefix of one seeded
    /// permutation, so for a fixed seed raising `r` only ever adds indices.
    /// The remainder of the permutation is dealt in contiguous runs; the
    /// first `(n - o) mod k` workers take one extra index each.
    pub fn new(n: usize, overlap_ratio: f64, worker_count: usize, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&overlap_ratio) {
            return Err(Error::Config(format!(
                "overlap ratio must lie in [0, 1), got {overlap_ratio}"
            )));
        }
        if worker_count == 0 {
            return Err(Error::Config("worker count must be positive".into()));
        }
        let o = overlap_size(overlap_ratio, n);
        if o + worker_count > n {
            return Err(Error::Config(format!(
                "{n} samples cannot give {worker_count} workers a unique sample each after an overlap of {o}"
            )));
        }

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng::stream(seed, 0, "partition"));

        let overlap = perm[..o].to_vec();
        let rest = &perm[o..];
        let base = rest.len() / worker_count;
        let extra = rest.len() % worker_count;
        let mut unique = Vec::with_capacity(worker_count);
        let mut start = 0;
        for j in 0..worker_count {
            let len = base + usize::from(j < extra);
            unique.push(rest[start..start + len].to_vec());
            start += len;
        }
        let shards = unique
            .iter()
            .map(|s| overlap.iter().chain(s).copied().collect())
            .collect();

        Ok(Self {
            overlap_ratio,
            worker_count,
            seed,
            overlap,
            unique,
            shards,
        })
    }

    pub fn overlap_ratio(&self) -> f64 {
        self.overlap_ratio
    }

    pub fn worker_count(&self) -> usize {
        self.worker_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The shared set `O`.
    pub fn overlap(&self) -> &[usize] {
        &self.overlap
    }

    /// Worker `j`'s unique set `S_j`.
    pub fn unique(&self, worker: usize) -> &[usize] {
        &self.unique[worker]
    }

    /// Worker `j`'s full shard `O ∪ S_j`.
    pub fn shard(&self, worker: usize) -> &[usize] {
        &self.shards[worker]
    }

    /// Indices of mini-batch `step` for `worker`.
    ///
    /// Each epoch is a fresh seeded permutation of the shard cut into
    /// `ceil(|shard| / m)` consecutive batches; the last batch of an epoch is
    /// short when `m` does not divide the shard size, so every index is
    /// visited exactly once per epoch.
    pub fn batch_indices(&self, worker: usize, batch_size: usize, step: u64) -> Result<Vec<usize>> {
        if worker >= self.worker_count {
            return Err(Error::Config(format!(
                "worker {worker} out of range for {} workers",
                self.worker_count
            )));
        }
        let shard = &self.shards[worker];
        if batch_size == 0 || batch_size > shard.len() {
            return Err(Error::Config(format!(
                "batch size {batch_size} must be in 1..={} for worker {worker}",
                shard.len()
            )));
        }
        let per_epoch = shard.len().div_ceil(batch_size) as u64;
        let epoch = step / per_epoch;
        let slot = (step % per_epoch) as usize;

        let worker_seed = rng::derive_seed(self.seed, worker as u64, "batch");
        let mut order = shard.clone();
        order.shuffle(&mut rng::stream(worker_seed, epoch, "epoch"));
        let start = slot * batch_size;
        let end = (start + batch_size).min(order.len());
        order.truncate(end);
        Ok(order.split_off(start))
    }
}

pub fn partition<T: Scalar>(
    dataset: &Dataset<T>,
    overlap_ratio: f64,
    worker_count: usize,
    seed: u64,
) -> Result<PartitionPlan> {
    PartitionPlan::new(dataset.len(), overlap_ratio, worker_count, seed)
}

pub fn next_batch<T: Scalar>(
    plan: &PartitionPlan,
    dataset: &Dataset<T>,
    worker: usize,
    batch_size: usize,
    step: u64,
) -> Result<Batch<T>> {
    dataset.gather(&plan.batch_indices(worker, batch_size, step)?)
}
