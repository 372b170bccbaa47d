use serde::{Deserialize, Serialize};

use super::backward::Gradients;
use super::layer::Network;
use crate::error::{Error, Result};
use crate::math::Matrix;

/// How backward-pass gradients are folded into the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Keep the latest raw gradient (zeros at edges dropped in that iteration).
    #[default]
    Raw,
    /// Exponential moving average with decay [`EMA_DECAY`].
    Ema,
}

pub const EMA_DECAY: f64 = 0.9;

/// Most recent weight gradient per layer, consumed by gradient-driven masks.
///
/// Masks at iteration `t` read the gradients written after iteration `t - 1`.
/// Before the first backward pass every entry is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCache {
    grads: Vec<Matrix>,
    staleness: Vec<usize>,
    refreshes: usize,
    mode: CacheMode,
}

impl GradientCache {
    pub fn new(net: &Network, mode: CacheMode) -> Self {
        Self {
            grads: net
                .layers()
                .iter()
                .map(|l| Matrix::zeros(l.n_out(), l.n_in()))
                .collect(),
            staleness: vec![0; net.n_layers()],
            refreshes: 0,
            mode,
        }
    }

    pub fn gradient(&self, layer: usize) -> &Matrix {
        &self.grads[layer]
    }

    /// Iterations since `layer` was last refreshed.
    pub fn staleness(&self, layer: usize) -> usize {
        self.staleness[layer]
    }

    pub fn refreshes(&self) -> usize {
        self.refreshes
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    /// Marks the start of a new iteration.
    pub fn tick(&mut self) {
        self.staleness.iter_mut().for_each(|s| *s += 1);
    }

    /// Stores raw (pre-update) gradients from a backward pass.
    pub fn refresh(&mut self, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != self.grads.len() {
            return Err(Error::Consistency(format!(
                "{} gradient layers for a {}-layer cache",
                grads.layers.len(),
                self.grads.len()
            )));
        }
        for (l, (cached, fresh)) in self.grads.iter_mut().zip(&grads.layers).enumerate() {
            if cached.shape() != fresh.weights.shape() {
                return Err(Error::Shape {
                    op: "GradientCache::refresh",
                    left: cached.shape(),
                    right: fresh.weights.shape(),
                });
            }
            match self.mode {
                CacheMode::Ema if self.refreshes > 0 => {
                    for (c, g) in cached.as_mut_slice().iter_mut().zip(fresh.weights.as_slice()) {
                        *c = EMA_DECAY * *c + (1.0 - EMA_DECAY) * g;
                    }
                }
                _ => *cached = fresh.weights.clone(),
            }
            self.staleness[l] = 0;
        }
        self.refreshes += 1;
        Ok(())
    }
}
