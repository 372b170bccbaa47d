//! JSON checkpoints.
//!
//! Layout:
//!
//! ```json
//! {
//!   "format": "dynadrop-checkpoint",
//!   "version": 1,
//!   "loss": "mse",
//!   "layers": [
//!     { "n_in": 2, "n_out": 1, "activation": "identity",
//!       "weights": [w00, w01], "bias": null }
//!   ]
//! }
//! ```
//!
//! `weights` is the row-major `n_out x n_in` payload; `bias` is either `null`
//! or a list of `n_out` values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::{Activation, DenseLayer, Loss, Network};
use crate::error::{Error, Result};
use crate::math::Matrix;

pub const CHECKPOINT_FORMAT: &str = "dynadrop-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct LayerRecord {
    n_in: usize,
    n_out: usize,
    activation: Activation,
    weights: Vec<f64>,
    bias: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    loss: Loss,
    layers: Vec<LayerRecord>,
}

pub fn to_json(net: &Network) -> Result<String> {
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        loss: net.loss,
        layers: net
            .layers()
            .iter()
            .map(|l| LayerRecord {
                n_in: l.n_in(),
                n_out: l.n_out(),
                activation: l.activation,
                weights: l.weights.as_slice().to_vec(),
                bias: l.bias.clone(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&ck)?)
}

pub fn from_json(text: &str) -> Result<Network> {
    let ck: Checkpoint = serde_json::from_str(text)?;
    if ck.format != CHECKPOINT_FORMAT {
        return Err(Error::Config(format!("not a checkpoint: format {:?}", ck.format)));
    }
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::Config(format!(
            "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            ck.version
        )));
    }
    let layers = ck
        .layers
        .into_iter()
        .map(|r| {
            if r.n_in == 0 || r.n_out == 0 {
                return Err(Error::Domain("checkpoint layer with zero size".into()));
            }
            if r.weights.len() != r.n_in * r.n_out {
                return Err(Error::Length {
                    expected: r.n_in * r.n_out,
                    found: r.weights.len(),
                });
            }
            let weights = Matrix::from_vec(r.n_out, r.n_in, r.weights)?;
            DenseLayer::new(weights, r.bias, r.activation)
        })
        .collect::<Result<Vec<_>>>()?;
    Network::new(layers, ck.loss)
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, to_json(net)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
