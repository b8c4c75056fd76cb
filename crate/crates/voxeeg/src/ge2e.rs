//! Generalized end-to-end softmax loss over a batch of d-vectors.
//!
//! A batch groups unit-length embeddings by subject. Each embedding is
//! scored against every subject centroid as `w * cos + b` (w starts at
//! 10, b at -5, w clamped to stay positive). The centroid of the
//! embedding's own subject excludes the embedding itself, which keeps
//! the true-speaker score from seeing its own contribution. The loss
//! is the mean softmax cross-entropy of each row against its true
//! column, and the gradient function returns exact derivatives for
//! every embedding along with the scalar w and b gradients.

use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

/// Initial similarity scale.
pub const W_INIT: f64 = 10.0;
/// Initial similarity offset.
pub const B_INIT: f64 = -5.0;
/// Lower clamp keeping the scale positive after updates.
pub const W_FLOOR: f64 = 1e-6;
/// Guard for cosine denominators.
const COS_FLOOR: f64 = 1e-12;
/// Embedding norms may drift this far from 1 before being rejected.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum Ge2eError {
    #[error("batch has no subjects")]
    EmptyBatch,
    #[error("subject {subject_index} has {got} utterances, exclusive centroids need 2")]
    NeedTwoUtterances { subject_index: usize, got: usize },
    #[error("embedding {utterance_index} of subject {subject_index} has norm {norm}, not unit")]
    NonUnitDvec {
        subject_index: usize,
        utterance_index: usize,
        norm: f64,
    },
    #[error("embedding has {got} dims, batch started with {expected}")]
    DimMismatch { expected: usize, got: usize },
}

/// Loss value with the exact gradient of every input.
#[derive(Debug, Clone)]
pub struct Ge2eLoss {
    pub loss: f64,
    /// Same ragged shape as the input batch.
    pub d_embeddings: Vec<Vec<Array1<f64>>>,
    pub d_w: f64,
    /// Always zero for the softmax loss (a shared offset cancels in the
    /// softmax), kept so updates treat both scalars uniformly.
    pub d_b: f64,
}

/// Cosine similarity with a guarded denominator.
pub fn cosine(u: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
    let denom = (u.dot(&u).sqrt() * v.dot(&v).sqrt()).max(COS_FLOOR);
    u.dot(&v) / denom
}

/// Plain mean of a subject's embeddings.
pub fn centroid(utterances: &[Array1<f64>]) -> Array1<f64> {
    let mut sum = Array1::<f64>::zeros(utterances[0].len());
    for u in utterances {
        sum += u;
    }
    sum / utterances.len() as f64
}

/// Mean of a subject's embeddings with one left out.
pub fn exclusive_centroid(utterances: &[Array1<f64>], exclude: usize) -> Array1<f64> {
    let mut sum = Array1::<f64>::zeros(utterances[0].len());
    for (i, u) in utterances.iter().enumerate() {
        if i != exclude {
            sum += u;
        }
    }
    sum / (utterances.len() - 1) as f64
}

/// Clamp the similarity scale after an update.
pub fn clamp_w(w: f64) -> f64 {
    w.max(W_FLOOR)
}

fn validate(batch: &[Vec<Array1<f64>>]) -> Result<usize, Ge2eError> {
    if batch.is_empty() {
        return Err(Ge2eError::EmptyBatch);
    }
    let dim = batch[0]
        .first()
        .map(|e| e.len())
        .ok_or(Ge2eError::NeedTwoUtterances {
            subject_index: 0,
            got: 0,
        })?;
    for (j, group) in batch.iter().enumerate() {
        if group.len() < 2 {
            return Err(Ge2eError::NeedTwoUtterances {
                subject_index: j,
                got: group.len(),
            });
        }
        for (i, e) in group.iter().enumerate() {
            if e.len() != dim {
                return Err(Ge2eError::DimMismatch {
                    expected: dim,
                    got: e.len(),
                });
            }
            let norm = e.dot(e).sqrt();
            if (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Ge2eError::NonUnitDvec {
                    subject_index: j,
                    utterance_index: i,
                    norm,
                });
            }
        }
    }
    Ok(dim)
}

/// Similarity scores, one row per embedding (subjects in order, then
/// utterances in order) and one column per subject.
pub fn similarity_matrix(
    batch: &[Vec<Array1<f64>>],
    w: f64,
    b: f64,
) -> Result<Array2<f64>, Ge2eError> {
    validate(batch)?;
    let n = batch.len();
    let rows: usize = batch.iter().map(|g| g.len()).sum();
    let centroids: Vec<Array1<f64>> = batch.iter().map(|g| centroid(g)).collect();
    let mut s = Array2::<f64>::zeros((rows, n));
    let mut row = 0;
    for (j, group) in batch.iter().enumerate() {
        for (i, e) in group.iter().enumerate() {
            for k in 0..n {
                let c = if k == j {
                    exclusive_centroid(group, i)
                } else {
                    centroids[k].clone()
                };
                s[(row, k)] = w * cosine(e.view(), c.view()) + b;
            }
            row += 1;
        }
    }
    Ok(s)
}

/// Softmax GE2E loss with exact gradients for the batch and scalars.
pub fn ge2e_softmax_loss(
    batch: &[Vec<Array1<f64>>],
    w: f64,
    b: f64,
) -> Result<Ge2eLoss, Ge2eError> {
    let dim = validate(batch)?;
    let n = batch.len();
    let total_rows: usize = batch.iter().map(|g| g.len()).sum();

    let sums: Vec<Array1<f64>> = batch
        .iter()
        .map(|g| {
            let mut s = Array1::<f64>::zeros(dim);
            for e in g {
                s += e;
            }
            s
        })
        .collect();

    let mut d_embeddings: Vec<Vec<Array1<f64>>> = batch
        .iter()
        .map(|g| g.iter().map(|_| Array1::zeros(dim)).collect())
        .collect();
    let mut loss = 0.0;
    let mut d_w = 0.0;
    let mut d_b = 0.0;

    for (j, group) in batch.iter().enumerate() {
        let t_j = group.len();
        for (i, e) in group.iter().enumerate() {
            // Scores of this row against every column centroid.
            let mut cents: Vec<Array1<f64>> = Vec::with_capacity(n);
            let mut scores = Array1::<f64>::zeros(n);
            let mut coss = Array1::<f64>::zeros(n);
            for k in 0..n {
                let c = if k == j {
                    (&sums[j] - e) / (t_j - 1) as f64
                } else {
                    &sums[k] / batch[k].len() as f64
                };
                let cv = cosine(e.view(), c.view());
                coss[k] = cv;
                scores[k] = w * cv + b;
                cents.push(c);
            }
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps = scores.mapv(|s| (s - max).exp());
            let z: f64 = exps.sum();
            loss += -(scores[j] - max) + z.ln();

            let e_norm_sq = e.dot(e).max(COS_FLOOR);
            for k in 0..n {
                let p = exps[k] / z;
                let d_s = (p - if k == j { 1.0 } else { 0.0 }) / total_rows as f64;
                d_w += d_s * coss[k];
                d_b += d_s;
                if d_s == 0.0 {
                    continue;
                }
                let c = &cents[k];
                let c_norm_sq = c.dot(c).max(COS_FLOOR);
                let denom = (e_norm_sq.sqrt() * c_norm_sq.sqrt()).max(COS_FLOOR);
                let scale = d_s * w;
                // d cos / d e and d cos / d centroid.
                let d_e = scale * (c / denom - &(e * (coss[k] / e_norm_sq)));
                let d_c = scale * (e / denom - &(c * (coss[k] / c_norm_sq)));
                d_embeddings[j][i] += &d_e;
                if k == j {
                    let share = 1.0 / (t_j - 1) as f64;
                    for (m, d_em) in d_embeddings[j].iter_mut().enumerate() {
                        if m != i {
                            d_em.scaled_add(share, &d_c);
                        }
                    }
                } else {
                    let share = 1.0 / batch[k].len() as f64;
                    for d_em in d_embeddings[k].iter_mut() {
                        d_em.scaled_add(share, &d_c);
                    }
                }
            }
        }
    }

    Ok(Ge2eLoss {
        loss: loss / total_rows as f64,
        d_embeddings,
        d_w,
        d_b,
    })
}
