//! Generalized end-to-end (GE2E) similarity matrix and softmax loss, in two
//! forms: a plain-array implementation serving as the inference API and
//! test oracle, and a graph composition used during training.

use ndarray::{Array1, Array2, Array3, ArrayD};

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::nn::layers::{l2_normalize_rows, logsumexp_rows};

/// A batch of utterance embeddings arranged `[speakers, utterances, dim]`.
#[derive(Debug, Clone)]
pub struct Ge2eBatch {
    pub embeddings: Array3<f32>,
}

impl Ge2eBatch {
    pub fn new(embeddings: Array3<f32>) -> Result<Self> {
        let (s, u, _) = embeddings.dim();
        if s < 2 {
            return Err(Error::DegenerateBatch(format!(
                "need at least 2 speakers, got {s}"
            )));
        }
        if u < 2 {
            return Err(Error::DegenerateBatch(format!(
                "need at least 2 utterances per speaker, got {u}"
            )));
        }
        Ok(Self { embeddings })
    }

    pub fn num_speakers(&self) -> usize {
        self.embeddings.dim().0
    }

    pub fn utterances_per_speaker(&self) -> usize {
        self.embeddings.dim().1
    }
}

fn cosine(a: &Array1<f32>, b: &Array1<f32>) -> f32 {
    let dot: f32 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    let na: f32 = a.iter().map(|x| x * x).sum::<f32>().sqrt();
    let nb: f32 = b.iter().map(|x| x * x).sum::<f32>().sqrt();
    dot / (na * nb).max(1e-12)
}

/// Scaled cosine similarities `s(j, i, k) = w cos(e_ji, c_k) + b`, where
/// `c_k` is the centroid of speaker `k`'s utterances except that the own
/// speaker's centroid (`k = j`) excludes utterance `i` (leave-one-out).
pub fn ge2e_similarity_matrix(batch: &Ge2eBatch, w: f32, b: f32) -> Result<Array3<f32>> {
    if w <= 0.0 {
        return Err(Error::ConfigError(format!(
            "similarity scale w must be positive, got {w}"
        )));
    }
    let (s, u, d) = batch.embeddings.dim();
    let e = &batch.embeddings;

    let mut sums = Array2::<f32>::zeros((s, d));
    for j in 0..s {
        for i in 0..u {
            for c in 0..d {
                sums[[j, c]] += e[[j, i, c]];
            }
        }
    }

    let mut sim = Array3::<f32>::zeros((s, u, s));
    for j in 0..s {
        for i in 0..u {
            let eji: Array1<f32> = e.slice(ndarray::s![j, i, ..]).to_owned();
            for k in 0..s {
                let centroid: Array1<f32> = if k == j {
                    let mut c = sums.row(j).to_owned();
                    c.zip_mut_with(&eji, |cv, &ev| *cv = (*cv - ev) / (u as f32 - 1.0));
                    c
                } else {
                    sums.row(k).mapv(|v| v / u as f32)
                };
                sim[[j, i, k]] = w * cosine(&eji, &centroid) + b;
            }
        }
    }
    Ok(sim)
}

/// Softmax-variant GE2E loss: `sum over (j, i) of -log softmax(s(j, i, ·))`
/// evaluated at the own speaker index `j`.
pub fn ge2e_loss(sim: &Array3<f32>) -> f32 {
    let (s, u, _) = sim.dim();
    let mut total = 0.0f64;
    for j in 0..s {
        for i in 0..u {
            let row = sim.slice(ndarray::s![j, i, ..]);
            let max = row.iter().cloned().fold(f32::MIN, f32::max) as f64;
            let lse: f64 = row
                .iter()
                .map(|&v| ((v as f64) - max).exp())
                .sum::<f64>()
                .ln()
                + max;
            total += lse - sim[[j, i, j]] as f64;
        }
    }
    total as f32
}

/// Graph-side GE2E loss over row-normalized embeddings `e [s * u, d]` (rows
/// grouped by speaker), with trainable scaling nodes `w` and `b` (each a
/// single-element tensor). Returns a scalar node equal to [`ge2e_loss`] of
/// [`ge2e_similarity_matrix`] on the same embeddings.
pub fn ge2e_loss_graph(
    g: &mut Graph,
    e: Var,
    num_speakers: usize,
    utterances: usize,
    w: Var,
    b: Var,
) -> Result<Var> {
    if num_speakers < 2 || utterances < 2 {
        return Err(Error::DegenerateBatch(format!(
            "GE2E needs >= 2 speakers and >= 2 utterances, got {num_speakers} x {utterances}"
        )));
    }
    let n = num_speakers * utterances;
    assert_eq!(g.value(e).shape()[0], n, "embedding rows != s * u");

    // Per-speaker sums and full centroids.
    let mut speaker_sums = Vec::with_capacity(num_speakers);
    for j in 0..num_speakers {
        let block = g.slice_axis(e, 0, j * utterances, utterances);
        speaker_sums.push((block, g.sum_axis(block, 0))); // ([u, d], [1, d])
    }
    let sums: Vec<Var> = speaker_sums.iter().map(|(_, s)| *s).collect();
    let sum_mat = g.concat(&sums, 0); // [s, d]
    let centroids = g.scale(sum_mat, 1.0 / utterances as f32);
    let cnorm = l2_normalize_rows(g, centroids);

    // Cross-speaker cosine block: embeddings are unit rows, so the dot with
    // a unit centroid row is the cosine.
    let cnorm_t = g.swap_axes(cnorm, 0, 1);
    let cross = g.matmul(e, cnorm_t); // [n, s]

    // Own-speaker leave-one-out column.
    let mut own_cols = Vec::with_capacity(num_speakers);
    for (block, sum) in &speaker_sums {
        let diff = g.sub(*block, *sum); // e_ji - sum_j (broadcast)
        let loo = g.scale(diff, -1.0 / (utterances as f32 - 1.0));
        let loo_norm = l2_normalize_rows(g, loo);
        let prod = g.mul(*block, loo_norm);
        own_cols.push(g.sum_axis(prod, 1)); // [u, 1]
    }
    let own = g.concat(&own_cols, 0); // [n, 1]

    // Splice the own column into the cross matrix with a one-hot mask.
    let mut mask = Array2::<f32>::zeros((n, num_speakers));
    for j in 0..num_speakers {
        for i in 0..utterances {
            mask[[j * utterances + i, j]] = 1.0;
        }
    }
    let mask_v = g.input(mask.clone().into_dyn());
    let inv_mask_v = g.input(mask.mapv(|m| 1.0 - m).into_dyn());
    let cross_part = g.mul(cross, inv_mask_v);
    let own_part = g.mul(mask_v, own); // rhs [n, 1] broadcasts
    let cos = g.add(cross_part, own_part);

    // Affine scaling then softmax NLL against the own-speaker index.
    let scaled_w = g.mul(cos, w);
    let scaled = g.add(scaled_w, b);
    let lse = logsumexp_rows(g, scaled); // [n, 1]
    let picked = g.mul(scaled, mask_v);
    let target = g.sum_axis(picked, 1); // [n, 1]
    let nll = g.sub(lse, target);
    Ok(g.sum_all(nll))
}

/// Convenience wrapper that restacks `[s, u, d]` into the row layout used by
/// [`ge2e_loss_graph`].
pub fn flatten_batch(batch: &Ge2eBatch) -> ArrayD<f32> {
    let (s, u, d) = batch.embeddings.dim();
    batch
        .embeddings
        .to_owned()
        .into_shape_with_order((s * u, d))
        .unwrap()
        .into_dyn()
}
