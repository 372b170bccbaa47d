use std::path::Path;

use serde::{Deserialize, Serialize};

use super::idx::{encode_idx_images, encode_idx_labels, load_idx_images, load_idx_labels};
use crate::error::{Error, Result};
use crate::math::{Matrix, Rng, Stream};
use crate::network::Dataset;

/// Flat feature vectors in `[0, 1]` with class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl LabeledDataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if dim == 0 || n_classes == 0 {
            return Err(Error::Domain("feature dimension and class count must be positive".into()));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::Length {
                expected: dim * labels.len(),
                found: features.len(),
            });
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Domain(format!("label {l} out of range for {n_classes} classes")));
        }
        if features.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("feature values must lie in [0, 1]".into()));
        }
        Ok(Self {
            dim,
            features,
            labels,
            n_classes,
        })
    }

    /// Pairs an image file with its label file.
    pub fn from_idx_files(images: &Path, labels: &Path, n_classes: usize) -> Result<Self> {
        let img = load_idx_images(images)?;
        let lab = load_idx_labels(labels)?;
        if lab.len() != img.count {
            return Err(Error::Length {
                expected: img.count,
                found: lab.len(),
            });
        }
        Self::new(
            img.rows * img.cols,
            img.pixels,
            lab.into_iter().map(usize::from).collect(),
            n_classes,
        )
    }

    /// Writes the dataset as an image/label IDX pair of `rows x cols` images.
    ///
    /// Features are quantized to `round(255 v)`, so datasets loaded from IDX
    /// round-trip exactly.
    pub fn write_idx(&self, images: &Path, labels: &Path, rows: usize, cols: usize) -> Result<()> {
        if rows * cols != self.dim {
            return Err(Error::Domain(format!("{rows}x{cols} images do not hold {} features", self.dim)));
        }
        if self.n_classes > 256 {
            return Err(Error::Domain("IDX labels hold at most 256 classes".into()));
        }
        let pixels: Vec<u8> = self.features.iter().map(|v| (v * 255.0).round() as u8).collect();
        let label_bytes: Vec<u8> = self.labels.iter().map(|&l| l as u8).collect();
        std::fs::write(images, encode_idx_images(self.len(), rows, cols, &pixels)?).map_err(|e| Error::io(images, e))?;
        std::fs::write(labels, encode_idx_labels(&label_bytes)?).map_err(|e| Error::io(labels, e))?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        self.labels.iter().for_each(|&l| counts[l] += 1);
        counts
    }

    /// Rows `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.feature(i));
        }
        LabeledDataset {
            dim: self.dim,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// Feature matrix and one-hot targets for training.
    pub fn to_training(&self) -> Result<Dataset> {
        if self.is_empty() {
            return Err(Error::Domain("empty dataset".into()));
        }
        let inputs = Matrix::from_vec(self.len(), self.dim, self.features.clone())?;
        let mut targets = Matrix::zeros(self.len(), self.n_classes);
        for (i, &l) in self.labels.iter().enumerate() {
            targets.set(i, l, 1.0);
        }
        Dataset::new(inputs, targets)
    }
}

fn permutation(n: usize, seed: u64, index: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    Rng::stream(seed, Stream::Shuffle, index).shuffle(&mut order);
    order
}

const SPLIT_STREAM: u64 = 1_000;
const SUBSAMPLE_STREAM: u64 = 1_001;

/// Shuffled train/validation/test partition.
///
/// Split sizes are `round(f * n)` taken in order, each capped by what
/// remains, so the three parts never overlap.
pub fn split(data: &LabeledDataset, fractions: (f64, f64, f64), seed: u64) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let (a, b, c) = fractions;
    let valid = [a, b, c].iter().all(|f| f.is_finite() && *f >= 0.0) && a + b + c > 0.0 && a + b + c <= 1.0 + 1e-12;
    if !valid {
        return Err(Error::Domain(format!("invalid split fractions {fractions:?}")));
    }
    let n = data.len();
    let order = permutation(n, seed, SPLIT_STREAM);
    let mut start = 0;
    let mut take = |f: f64| {
        let k = ((f * n as f64).round() as usize).min(n - start);
        let part = data.select(&order[start..start + k]);
        start += k;
        part
    };
    let train = take(a);
    let val = take(b);
    let test = take(c);
    Ok((train, val, test))
}

/// `n` rows drawn without replacement.
///
/// Stratified draws allot each class `n * count / total` rows, rounding by
/// largest remainder, so every class is within one of its exact share.
pub fn subsample(data: &LabeledDataset, n: usize, seed: u64, stratified: bool) -> Result<LabeledDataset> {
    if n > data.len() {
        return Err(Error::Domain(format!("cannot draw {n} rows from {}", data.len())));
    }
    let order = permutation(data.len(), seed, SUBSAMPLE_STREAM);
    if !stratified {
        return Ok(data.select(&order[..n]));
    }
    let counts = data.class_counts();
    let total = data.len() as f64;
    let exact: Vec<f64> = counts.iter().map(|&c| n as f64 * c as f64 / total).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut by_remainder: Vec<usize> = (0..counts.len()).collect();
    by_remainder.sort_by(|&x, &y| {
        let rx = exact[x] - quota[x] as f64;
        let ry = exact[y] - quota[y] as f64;
        ry.total_cmp(&rx).then(x.cmp(&y))
    });
    let mut missing = n - quota.iter().sum::<usize>();
    for &k in &by_remainder {
        if missing == 0 {
            break;
        }
        if quota[k] < counts[k] {
            quota[k] += 1;
            missing -= 1;
        }
    }
    let mut chosen = Vec::with_capacity(n);
    for &i in &order {
        let l = data.labels[i];
        if quota[l] > 0 {
            quota[l] -= 1;
            chosen.push(i);
        }
    }
    Ok(data.select(&chosen))
}

/// Per-feature standardization fitted on one matrix and applied to others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Features with spread below `1e-12` keep a unit divisor.
    pub fn fit(x: &Matrix) -> Self {
        let (n, d) = x.shape();
        let mut mean = vec![0.0; d];
        for row in x.as_slice().chunks(d) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for row in x.as_slice().chunks(d) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd < 1e-12 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &mut Matrix) -> Result<()> {
        if x.cols() != self.mean.len() {
            return Err(Error::Shape {
                op: "Standardizer::apply",
                left: x.shape(),
                right: (1, self.mean.len()),
            });
        }
        let d = x.cols();
        for row in x.as_mut_slice().chunks_mut(d) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(())
    }
}
