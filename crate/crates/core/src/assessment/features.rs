//! Feature construction for classification: adaptive average pooling of
//! content embeddings to fixed width 512, and the linear head that inserts
//! a per-frame linear map before pooling.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::params::{uniform_init, zeros, Params};
use crate::separator::ContentEmbedding;

use super::metrics::ClassLabel;

/// Number of time bins the content embedding is pooled into; 64 rows x 8
/// bins = 512 features.
pub const POOL_BINS: usize = 8;
/// Fixed width of pooled content features.
pub const POOLED_DIM: usize = 512;

/// A classifier-ready sample.
#[derive(Debug, Clone)]
pub struct FeatureVector {
    pub values: Array1<f32>,
    pub label: ClassLabel,
    pub sample_id: String,
}

/// Column range of pooling bin `b` for `k` input columns: the documented
/// rule `[floor(b k / 8), floor((b+1) k / 8))`, widened to at least one
/// column so short embeddings (k < 8) reuse the column under the bin's left
/// edge instead of averaging nothing.
fn bin_range(b: usize, k: usize) -> (usize, usize) {
    // start <= k - 1 and the widened end <= k hold for all b in [0, 8).
    let start = b * k / POOL_BINS;
    let end = ((b + 1) * k / POOL_BINS).max(start + 1);
    (start, end)
}

/// Adaptive average pooling of a `[64, K]` content embedding over time to
/// 8 bins, flattened row-major to width 512.
pub fn pool_content_embedding(content: &ContentEmbedding) -> Result<Array1<f32>> {
    let rows = content.values.nrows();
    let k = content.values.ncols();
    if k == 0 {
        return Err(Error::EmptyEmbedding);
    }
    if rows * POOL_BINS != POOLED_DIM {
        return Err(Error::ShapeError(format!(
            "expected 64-row content embedding, got {rows}"
        )));
    }
    let mut out = Array1::zeros(POOLED_DIM);
    for r in 0..rows {
        for b in 0..POOL_BINS {
            let (start, end) = bin_range(b, k);
            let mut acc = 0.0f64;
            for c in start..end {
                acc += content.values[[r, c]] as f64;
            }
            out[r * POOL_BINS + b] = (acc / (end - start) as f64) as f32;
        }
    }
    Ok(out)
}

/// Parameter names of the content linear head: a per-frame 64 x 64 map
/// applied before pooling (`pre.*`) and the final 512 -> 2 projection
/// (`out.*`).
pub fn init_linear_head(seed: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Params::new();
    p.insert("pre.w", uniform_init(&mut rng, &[64, 64], 64));
    p.insert("pre.b", zeros(&[64]));
    p.insert("out.w", uniform_init(&mut rng, &[POOLED_DIM, 2], POOLED_DIM));
    p.insert("out.b", zeros(&[2]));
    p
}

/// Forward pass of the content linear head: per-frame linear map along the
/// feature axis, adaptive pooling to 512, then projection to 2 logits.
pub fn linear_head_forward(content: &ContentEmbedding, params: &Params) -> Result<[f64; 2]> {
    let rows = content.values.nrows();
    let k = content.values.ncols();
    if k == 0 {
        return Err(Error::EmptyEmbedding);
    }
    if rows != 64 {
        return Err(Error::ShapeError(format!(
            "linear head expects 64-row content embeddings, got {rows}"
        )));
    }
    let pre_w = params.get("pre.w")?;
    let pre_b = params.get("pre.b")?;
    let out_w = params.get("out.w")?;
    let out_b = params.get("out.b")?;
    if pre_w.shape() != [64, 64] || out_w.shape() != [POOLED_DIM, 2] {
        return Err(Error::ShapeError(format!(
            "head weight shapes {:?} / {:?} do not match [64,64] / [512,2]",
            pre_w.shape(),
            out_w.shape()
        )));
    }

    // Per-frame map: mapped[:, t] = pre_w^T . content[:, t] + pre_b.
    let mut mapped = Array2::<f32>::zeros((64, k));
    for t in 0..k {
        for o in 0..64 {
            let mut acc = pre_b[[o]] as f64;
            for i in 0..64 {
                acc += (pre_w[[i, o]] * content.values[[i, t]]) as f64;
            }
            mapped[[o, t]] = acc as f32;
        }
    }
    let pooled = pool_content_embedding(&ContentEmbedding {
        values: mapped,
        source_id: content.source_id.clone(),
    })?;
    let mut logits = [out_b[[0]] as f64, out_b[[1]] as f64];
    for (j, logit) in logits.iter_mut().enumerate() {
        for i in 0..POOLED_DIM {
            *logit += (pooled[i] * out_w[[i, j]]) as f64;
        }
    }
    Ok(logits)
}
