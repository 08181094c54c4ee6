//! Datasets: IDX loading, stratified subsets, batching and synthetic data.

pub mod batches;
pub mod idx;
pub mod synthetic;

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

pub use batches::{Batch, BatchPlan, BatchStream};
pub use idx::load_idx;

/// Row-major examples with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub name: String,
    /// `len() × width` values.
    pub images: Vec<f64>,
    pub labels: Vec<u8>,
    pub width: usize,
}

impl DatasetSplit {
    pub fn new(name: impl Into<String>, images: Vec<f64>, labels: Vec<u8>, width: usize) -> Result<Self> {
        if width == 0 || images.len() != labels.len() * width {
            return Err(invalid(format!(
                "{} values do not form {} rows of width {width}",
                images.len(),
                labels.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            images,
            labels,
            width,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.images[i * self.width..(i + 1) * self.width]
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut images = Vec::with_capacity(indices.len() * self.width);
        for &i in indices {
            images.extend_from_slice(self.row(i));
        }
        Self {
            name: self.name.clone(),
            images,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            width: self.width,
        }
    }

    /// Number of examples per label, in label order.
    pub fn class_counts(&self) -> BTreeMap<u8, usize> {
        let mut counts = BTreeMap::new();
        for l in &self.labels {
            *counts.entry(*l).or_insert(0) += 1;
        }
        counts
    }
}

/// Per-class sample sizes proportional to class frequency.
///
/// Floors first, then the leftover slots go to the largest fractional
/// remainders, lower label first on ties.
pub fn stratified_counts(counts: &BTreeMap<u8, usize>, n: usize) -> BTreeMap<u8, usize> {
    let total: usize = counts.values().sum();
    let mut take: BTreeMap<u8, usize> = BTreeMap::new();
    let mut remainders = Vec::new();
    for (&label, &c) in counts {
        let exact = n as u128 * c as u128;
        take.insert(label, (exact / total as u128) as usize);
        remainders.push((exact % total as u128, label));
    }
    let assigned: usize = take.values().sum();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, label) in remainders.into_iter().take(n - assigned) {
        *take.get_mut(&label).expect("label present") += 1;
    }
    take
}

/// Deterministic stratified sample of `n` examples, kept in original order.
pub fn subset(split: &DatasetSplit, n: usize, seed: u64) -> Result<DatasetSplit> {
    if n == 0 || n > split.len() {
        return Err(invalid(format!(
            "cannot take {n} examples from a split of {}",
            split.len()
        )));
    }
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, l) in split.labels.iter().enumerate() {
        by_class.entry(*l).or_default().push(i);
    }
    let counts = by_class.iter().map(|(l, v)| (*l, v.len())).collect();
    let take = stratified_counts(&counts, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(n);
    for (label, members) in &by_class {
        let k = take[label];
        chosen.extend(sample(&mut rng, members.len(), k).into_iter().map(|j| members[j]));
    }
    chosen.sort_unstable();
    Ok(split.select(&chosen))
}
