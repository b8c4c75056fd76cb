//! Kernel PCA with a polynomial kernel.
//!
//! Fitting subsamples at most `m` landmark frames (seeded, order
//! preserving), builds their Gram matrix under
//! `k(x, y) = (gamma * x . y + coef0) ^ degree` (defaults 1, 1, 3),
//! double-centers it, eigendecomposes, and keeps the top `k`
//! components. Dual coefficients are scaled so each component has unit
//! self-consistency (`alpha' K~ alpha = 1`) and signed so the
//! largest-magnitude coefficient is positive, which makes fitting
//! deterministic per seed. Out-of-sample frames are projected through
//! the stored centering statistics.

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

/// Eigenvalues at or below this are treated as zero rank.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;
/// Default landmark cap for [`fit`].
pub const DEFAULT_LANDMARKS: usize = 2000;

#[derive(Debug, Error)]
pub enum KpcaError {
    #[error("only {positive} positive-eigenvalue components, need {requested}")]
    RankDeficient { positive: usize, requested: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("non-finite input value")]
    NonFiniteInput,
    #[error("frame has {got} dims, model expects {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("model file {0}: {1}")]
    BadFile(std::path::PathBuf, String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Polynomial kernel constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub degree: u32,
    pub gamma: f64,
    pub coef0: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            degree: 3,
            gamma: 1.0,
            coef0: 1.0,
        }
    }
}

impl KernelParams {
    fn eval(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        (self.gamma * x.dot(&y) + self.coef0).powi(self.degree as i32)
    }
}

/// A fitted kernel-PCA model.
#[derive(Debug, Clone)]
pub struct KpcaModel {
    landmarks: Array2<f64>,
    /// M x K dual coefficients, columns ordered by descending eigenvalue.
    alphas: Array2<f64>,
    kernel_row_means: Array1<f64>,
    kernel_grand_mean: f64,
    eigenvalues: Array1<f64>,
    kernel: KernelParams,
    explained_variance_ratio: Vec<f64>,
}

/// Fit on N x D frames, keeping `k` components from at most `m`
/// landmarks.
pub fn fit(
    frames: &Array2<f64>,
    k: usize,
    m: usize,
    seed: u64,
    kernel: KernelParams,
) -> Result<KpcaModel, KpcaError> {
    let n = frames.nrows();
    if k < 1 {
        return Err(KpcaError::InsufficientData("need k >= 1".into()));
    }
    if n < k {
        return Err(KpcaError::InsufficientData(format!(
            "{n} frames cannot support {k} components"
        )));
    }
    if m < k {
        return Err(KpcaError::InsufficientData(format!(
            "landmark cap {m} below component count {k}"
        )));
    }
    if frames.iter().any(|v| !v.is_finite()) {
        return Err(KpcaError::NonFiniteInput);
    }

    // Landmark selection: everything (in order) when it fits, otherwise
    // a seeded uniform subsample sorted back into frame order.
    let indices: Vec<usize> = if n <= m {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, n, m).into_vec();
        picked.sort_unstable();
        picked
    };
    let mm = indices.len();
    let mut landmarks = Array2::<f64>::zeros((mm, frames.ncols()));
    for (row, &i) in indices.iter().enumerate() {
        landmarks.row_mut(row).assign(&frames.row(i));
    }

    // Gram matrix and its centering statistics.
    let mut gram = Array2::<f64>::zeros((mm, mm));
    for i in 0..mm {
        for j in i..mm {
            let v = kernel.eval(landmarks.row(i), landmarks.row(j));
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let row_means: Array1<f64> =
        Array1::from_iter(gram.rows().into_iter().map(|r| r.sum() / mm as f64));
    let grand_mean = row_means.sum() / mm as f64;

    let centered = nalgebra::DMatrix::from_fn(mm, mm, |i, j| {
        gram[(i, j)] - row_means[i] - row_means[j] + grand_mean
    });
    let eigen = nalgebra::linalg::SymmetricEigen::new(centered);

    let mut order: Vec<usize> = (0..mm).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .unwrap()
    });
    let positive: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| eigen.eigenvalues[i] > EIGENVALUE_FLOOR)
        .collect();
    if positive.len() < k {
        return Err(KpcaError::RankDeficient {
            positive: positive.len(),
            requested: k,
        });
    }
    let total_positive: f64 = positive.iter().map(|&i| eigen.eigenvalues[i]).sum();

    let mut alphas = Array2::<f64>::zeros((mm, k));
    let mut eigenvalues = Array1::<f64>::zeros(k);
    let mut evr = Vec::with_capacity(k);
    for (c, &src) in positive.iter().take(k).enumerate() {
        let lambda = eigen.eigenvalues[src];
        eigenvalues[c] = lambda;
        evr.push(lambda / total_positive);
        let scale = 1.0 / lambda.sqrt();
        for i in 0..mm {
            alphas[(i, c)] = eigen.eigenvectors[(i, src)] * scale;
        }
        // Sign convention: largest-magnitude coefficient positive.
        let mut arg = 0;
        for i in 1..mm {
            if alphas[(i, c)].abs() > alphas[(arg, c)].abs() {
                arg = i;
            }
        }
        if alphas[(arg, c)] < 0.0 {
            for i in 0..mm {
                alphas[(i, c)] = -alphas[(i, c)];
            }
        }
    }

    Ok(KpcaModel {
        landmarks,
        alphas,
        kernel_row_means: row_means,
        kernel_grand_mean: grand_mean,
        eigenvalues,
        kernel,
        explained_variance_ratio: evr,
    })
}

impl KpcaModel {
    pub fn components(&self) -> usize {
        self.alphas.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.landmarks.ncols()
    }

    pub fn num_landmarks(&self) -> usize {
        self.landmarks.nrows()
    }

    pub fn landmarks(&self) -> ndarray::ArrayView2<'_, f64> {
        self.landmarks.view()
    }

    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    pub fn kernel(&self) -> KernelParams {
        self.kernel
    }

    /// Project one frame to the component space.
    pub fn project(&self, frame: ArrayView1<f64>) -> Result<Array1<f64>, KpcaError> {
        if frame.len() != self.input_dim() {
            return Err(KpcaError::DimMismatch {
                expected: self.input_dim(),
                got: frame.len(),
            });
        }
        if frame.iter().any(|v| !v.is_finite()) {
            return Err(KpcaError::NonFiniteInput);
        }
        let mm = self.num_landmarks();
        let mut kx = Array1::<f64>::zeros(mm);
        for j in 0..mm {
            kx[j] = self.kernel.eval(frame, self.landmarks.row(j));
        }
        let mean_kx = kx.sum() / mm as f64;
        for j in 0..mm {
            kx[j] = kx[j] - mean_kx - self.kernel_row_means[j] + self.kernel_grand_mean;
        }
        Ok(self.alphas.t().dot(&kx))
    }

    /// Project every row of a T x D matrix.
    pub fn project_frames(&self, frames: &Array2<f64>) -> Result<Array2<f64>, KpcaError> {
        let mut out = Array2::<f64>::zeros((frames.nrows(), self.components()));
        for (i, row) in frames.rows().into_iter().enumerate() {
            out.row_mut(i).assign(&self.project(row)?);
        }
        Ok(out)
    }

    /// Rows of (1-based component, variance ratio, cumulative ratio).
    pub fn explained_variance_table(&self) -> Vec<(usize, f64, f64)> {
        let mut cumulative = 0.0;
        self.explained_variance_ratio
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                cumulative += r;
                (i + 1, r, cumulative)
            })
            .collect()
    }

    /// Persist as a little-endian binary: magic `KPCA`, u32 landmark
    /// count, component count, input dim and kernel degree, f64 gamma
    /// and coef0, then landmarks, alphas, row means, grand mean,
    /// eigenvalues and variance ratios as f64.
    pub fn save(&self, path: &Path) -> Result<(), KpcaError> {
        let (mm, k) = self.alphas.dim();
        let d = self.input_dim();
        let mut buf = Vec::with_capacity(32 + 8 * (mm * d + mm * k + mm + 1 + 2 * k));
        buf.extend_from_slice(b"KPCA");
        for v in [mm as u32, k as u32, d as u32, self.kernel.degree] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in [self.kernel.gamma, self.kernel.coef0] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut push = |v: f64| buf.extend_from_slice(&v.to_le_bytes());
        for row in self.landmarks.rows() {
            row.iter().for_each(|&v| push(v));
        }
        for row in self.alphas.rows() {
            row.iter().for_each(|&v| push(v));
        }
        self.kernel_row_means.iter().for_each(|&v| push(v));
        push(self.kernel_grand_mean);
        self.eigenvalues.iter().for_each(|&v| push(v));
        self.explained_variance_ratio.iter().for_each(|&v| push(v));
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    /// Load a model written by [`save`].
    pub fn load(path: &Path) -> Result<Self, KpcaError> {
        let bad = |what: &str| KpcaError::BadFile(path.to_path_buf(), what.into());
        let mut f = std::fs::File::open(path)
            .map_err(|e| KpcaError::BadFile(path.to_path_buf(), e.to_string()))?;
        let mut header = [0u8; 36];
        f.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
        if &header[0..4] != b"KPCA" {
            return Err(bad("bad magic"));
        }
        let u = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap()) as usize;
        let (mm, k, d, degree) = (u(4), u(8), u(12), u(16) as u32);
        let gamma = f64::from_le_bytes(header[20..28].try_into().unwrap());
        let coef0 = f64::from_le_bytes(header[28..36].try_into().unwrap());
        let mut payload = Vec::new();
        f.read_to_end(&mut payload)?;
        let expected = 8 * (mm * d + mm * k + mm + 1 + 2 * k);
        if payload.len() != expected {
            return Err(bad("payload size disagrees with header"));
        }
        let mut vals = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()));
        let mut take = |count: usize| -> Vec<f64> { vals.by_ref().take(count).collect() };
        let landmarks = Array2::from_shape_vec((mm, d), take(mm * d)).map_err(|_| bad("shape"))?;
        let alphas = Array2::from_shape_vec((mm, k), take(mm * k)).map_err(|_| bad("shape"))?;
        let kernel_row_means = Array1::from_vec(take(mm));
        let kernel_grand_mean = take(1)[0];
        let eigenvalues = Array1::from_vec(take(k));
        let explained_variance_ratio = take(k);
        Ok(KpcaModel {
            landmarks,
            alphas,
            kernel_row_means,
            kernel_grand_mean,
            eigenvalues,
            kernel: KernelParams {
                degree,
                gamma,
                coef0,
            },
            explained_variance_ratio,
        })
    }
}
