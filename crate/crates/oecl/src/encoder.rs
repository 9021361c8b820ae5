//! MLP encoder and projection producing the contrastive feature `f(x)`
//! and its hypersphere projection `z(x) = f(x) / ‖f(x)‖`.
//!
//! Layers alternate linear and relu; the final layer is linear. Parameters
//! are immutable during a forward pass; an optimizer step builds a new
//! parameter version.

use std::io::{Read as _, Write as _};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{mix, rng_from};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"OECLPAR1";
pub const PROJECT_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    /// Width m of the contrastive feature. At least 2: the norm analysis
    /// splits the feature space into a mean direction plus a perpendicular
    /// block, which needs m ≥ 2.
    pub feature_dim: usize,
    /// When false the encoder is used with raw features f(x) instead of
    /// the normalized z(x).
    pub normalize_output: bool,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("encoder.input_dim must be positive".into()));
        }
        if self.feature_dim < 2 {
            return Err(Error::Config("encoder.feature_dim must be at least 2".into()));
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("encoder hidden widths must be positive".into()));
        }
        Ok(())
    }

    /// Layer widths including input and output.
    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden_widths);
        w.push(self.feature_dim);
        w
    }
}

/// Per-layer weight matrices (fan_in x fan_out) and bias rows (1 x fan_out).
#[derive(Clone)]
pub struct EncoderParams {
    pub layers: Vec<(Tensor, Tensor)>,
}

impl std::fmt::Debug for EncoderParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let shapes: Vec<_> = self.layers.iter().map(|(w, _)| w.shape().to_vec()).collect();
        f.debug_struct("EncoderParams").field("layer_shapes", &shapes).finish()
    }
}

impl EncoderParams {
    /// All parameter tensors in declaration order (checkpoint order).
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Replace every parameter with new leaf data, keeping shapes.
    pub fn with_data(&self, data: Vec<Vec<f64>>) -> Result<EncoderParams> {
        let tensors = self.tensors();
        if data.len() != tensors.len() {
            return Err(Error::Contract("parameter count mismatch".into()));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut it = data.into_iter();
        for (w, b) in &self.layers {
            let new_w = Tensor::from_vec(it.next().unwrap(), w.shape())?;
            let new_b = Tensor::from_vec(it.next().unwrap(), b.shape())?;
            layers.push((new_w, new_b));
        }
        Ok(EncoderParams { layers })
    }
}

/// Weights uniform in ±1/√fan_in, biases zero, deterministic in seed.
pub fn init_params(config: &EncoderConfig, seed: u64) -> Result<EncoderParams> {
    config.validate()?;
    let widths = config.widths();
    let mut layers = Vec::with_capacity(widths.len() - 1);
    for l in 0..widths.len() - 1 {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut rng = rng_from(mix(seed, l as u64));
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        layers.push((
            Tensor::from_vec(w, &[fan_in, fan_out])?,
            Tensor::zeros(&[1, fan_out]),
        ));
    }
    Ok(EncoderParams { layers })
}

/// Forward pass producing f(x) for each row of `batch`.
pub fn embed(params: &EncoderParams, batch: &Tensor) -> Result<Tensor> {
    let shape = batch.shape();
    if shape.len() != 2 {
        return Err(Error::Dimension(format!("embed needs a rank-2 batch, got {shape:?}")));
    }
    let input_dim = params.layers[0].0.shape()[0];
    if shape[1] != input_dim {
        return Err(Error::Dimension(format!(
            "batch has {} columns, encoder expects {}",
            shape[1], input_dim
        )));
    }
    let mut h = batch.clone();
    let last = params.layers.len() - 1;
    for (l, (w, b)) in params.layers.iter().enumerate() {
        h = h.matmul(w)?.add(b)?;
        if l < last {
            h = h.relu()?;
        }
    }
    Ok(h)
}

/// Hypersphere projection z(x) of a feature batch.
pub fn project(features: &Tensor) -> Result<Tensor> {
    features.row_normalize(PROJECT_EPS)
}

/// Write parameters as a flat binary checkpoint: magic "OECLPAR1", then per
/// tensor a little-endian u32 rank, u64 extents, and the raw f64 data.
pub fn save_params(params: &EncoderParams, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for t in params.tensors() {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for &x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Load a checkpoint. Layer structure (alternating weight/bias records) is
/// reconstructed from the stored shapes.
pub fn load_params(path: &Path) -> Result<EncoderParams> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::Parse {
                line: 0,
                msg: "truncated checkpoint".into(),
            });
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 8)? != CHECKPOINT_MAGIC {
        return Err(Error::Parse {
            line: 0,
            msg: "bad checkpoint magic".into(),
        });
    }
    let mut tensors = Vec::new();
    while pos < bytes.len() {
        let rank = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()));
        }
        tensors.push(Tensor::from_vec(data, &shape)?);
    }
    if tensors.is_empty() || tensors.len() % 2 != 0 {
        return Err(Error::Parse {
            line: 0,
            msg: "checkpoint does not contain weight/bias pairs".into(),
        });
    }
    let mut layers = Vec::new();
    for pair in tensors.chunks(2) {
        let (w, b) = (&pair[0], &pair[1]);
        if w.shape().len() != 2 || b.shape() != [1, w.shape()[1]] {
            return Err(Error::Parse {
                line: 0,
                msg: "checkpoint tensor shapes are not an MLP layer".into(),
            });
        }
        layers.push((w.clone(), b.clone()));
    }
    Ok(EncoderParams { layers })
}
