//! Gaussian-blob classification data for runs that need no downloads.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use super::DatasetSplit;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobSpec {
    pub classes: u8,
    pub width: usize,
    /// Standard deviation of each blob around its centre.
    pub spread: f64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            width: 784,
            spread: 0.5,
        }
    }
}

/// Train and test splits drawn around the same class centres.
pub fn blobs(spec: &BlobSpec, n_train: usize, n_test: usize, seed: u64) -> Result<(DatasetSplit, DatasetSplit)> {
    if spec.classes < 2 || spec.width == 0 {
        return Err(invalid("blobs need at least two classes and a positive width"));
    }
    let noise = Normal::new(0.0, spec.spread).map_err(|e| invalid(format!("blob spread: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new_inclusive(-1.0, 1.0);
    let centres: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..spec.width).map(|_| unit.sample(&mut rng)).collect())
        .collect();
    let mut draw = |n: usize, name: &str| {
        let labels: Vec<u8> = (0..n).map(|i| (i % spec.classes as usize) as u8).collect();
        let mut images = Vec::with_capacity(n * spec.width);
        for l in &labels {
            images.extend(centres[*l as usize].iter().map(|c| c + noise.sample(&mut rng)));
        }
        DatasetSplit::new(name, images, labels, spec.width)
    };
    Ok((draw(n_train, "blobs-train")?, draw(n_test, "blobs-test")?))
}
