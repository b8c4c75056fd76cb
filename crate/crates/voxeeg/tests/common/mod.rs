//! Reference implementations used to cross-check the library.
//!
//! Everything here recomputes results through a different route than
//! the library takes: direct DFT sums instead of an FFT, cyclic Jacobi
//! rotations instead of the tridiagonal eigensolver, counting loops
//! instead of partition points, and central finite differences instead
//! of backpropagation. Agreement between the two routes is the point,
//! so nothing in this module may call into the code it checks beyond
//! plain data types.

#![allow(dead_code)]

use ndarray::Array2;

/// Relative tolerance with a small absolute slack for near-zero values.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}

// ---------------------------------------------------------------- MFCC

const SR: f64 = 16_000.0;
const FRAME: usize = 400;
const HOP: usize = 160;
const NFFT: usize = 512;
const NFILT: usize = 40;
const NCOEF: usize = 13;

fn mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn inv_mel(m: f64) -> f64 {
    700.0 * (10.0_f64.powf(m / 2595.0) - 1.0)
}

/// MFCC by direct DFT magnitude sums and pointwise triangle weights.
pub fn naive_mfcc(signal: &[f64]) -> Array2<f64> {
    assert!(signal.len() >= FRAME);
    let mut emphasized = vec![signal[0]];
    for i in 1..signal.len() {
        emphasized.push(signal[i] - 0.97 * signal[i - 1]);
    }
    let frames = 1 + (signal.len() - FRAME) / HOP;

    // Triangle edge frequencies in continuous FFT-bin units.
    let lo = mel(0.0);
    let hi = mel(8000.0);
    let points: Vec<f64> = (0..NFILT + 2)
        .map(|i| inv_mel(lo + (hi - lo) * i as f64 / (NFILT + 1) as f64) * NFFT as f64 / SR)
        .collect();

    let mut out = Array2::<f64>::zeros((frames, NCOEF));
    for t in 0..frames {
        let start = t * HOP;
        // Hamming window then direct DFT magnitudes for bins 0..=256.
        let windowed: Vec<f64> = (0..FRAME)
            .map(|n| {
                let w = 0.54
                    - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (FRAME - 1) as f64).cos();
                emphasized[start + n] * w
            })
            .collect();
        let mut mags = vec![0.0; NFFT / 2 + 1];
        for (k, mag) in mags.iter_mut().enumerate() {
            let mut re = 0.0;
            let mut im = 0.0;
            for (n, &x) in windowed.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * n) as f64 / NFFT as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            *mag = (re * re + im * im).sqrt();
        }

        let mut logs = vec![0.0; NFILT];
        for (f, log) in logs.iter_mut().enumerate() {
            let (left, center, right) = (points[f], points[f + 1], points[f + 2]);
            let mut energy = 0.0;
            for (b, &m) in mags.iter().enumerate() {
                let bf = b as f64;
                let w = if bf > left && bf < center {
                    (bf - left) / (center - left)
                } else if (bf - center).abs() == 0.0 {
                    1.0
                } else if bf > center && bf < right {
                    (right - bf) / (right - center)
                } else {
                    0.0
                };
                energy += w * m;
            }
            *log = energy.max(1e-10).ln();
        }

        for c in 0..NCOEF {
            let mut acc = 0.0;
            for (f, &lg) in logs.iter().enumerate() {
                acc += lg
                    * (std::f64::consts::PI * c as f64 * (2.0 * f as f64 + 1.0)
                        / (2.0 * NFILT as f64))
                        .cos();
            }
            let scale = if c == 0 {
                (1.0 / NFILT as f64).sqrt()
            } else {
                (2.0 / NFILT as f64).sqrt()
            };
            out[(t, c)] = acc * scale;
        }
    }
    out
}

// ------------------------------------------------------- eigensolver

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues in descending order with matching eigenvector columns.
pub fn jacobi_eigen(matrix: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols());
    let mut a = matrix.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..200 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(y, y)].partial_cmp(&a[(x, x)]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[(row, col)] = v[(row, src)];
        }
    }
    (values, vectors)
}

/// Kernel PCA on the full frame set by the Jacobi route. Projects the
/// given queries; signs follow the largest-coefficient convention.
pub fn kpca_oracle(
    frames: &Array2<f64>,
    queries: &Array2<f64>,
    k: usize,
    degree: i32,
    gamma: f64,
    coef0: f64,
) -> Array2<f64> {
    let n = frames.nrows();
    let kernel = |x: &[f64], y: &[f64]| -> f64 {
        let dot: f64 = x.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        (gamma * dot + coef0).powi(degree)
    };
    let rows: Vec<Vec<f64>> = frames.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut gram = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            gram[(i, j)] = kernel(&rows[i], &rows[j]);
        }
    }
    let row_means: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| gram[(i, j)]).sum::<f64>() / n as f64)
        .collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let centered = Array2::from_shape_fn((n, n), |(i, j)| {
        gram[(i, j)] - row_means[i] - row_means[j] + grand
    });
    let (values, vectors) = jacobi_eigen(&centered);

    let mut alphas = Array2::<f64>::zeros((n, k));
    for c in 0..k {
        assert!(values[c] > 1e-12, "oracle fit is rank deficient");
        let scale = 1.0 / values[c].sqrt();
        for i in 0..n {
            alphas[(i, c)] = vectors[(i, c)] * scale;
        }
        let mut arg = 0;
        for i in 1..n {
            if alphas[(i, c)].abs() > alphas[(arg, c)].abs() {
                arg = i;
            }
        }
        if alphas[(arg, c)] < 0.0 {
            for i in 0..n {
                alphas[(i, c)] = -alphas[(i, c)];
            }
        }
    }

    let mut out = Array2::<f64>::zeros((queries.nrows(), k));
    for (qi, q) in queries.rows().into_iter().enumerate() {
        let qv = q.to_vec();
        let kx: Vec<f64> = rows.iter().map(|r| kernel(&qv, r)).collect();
        let mean_kx = kx.iter().sum::<f64>() / n as f64;
        for c in 0..k {
            let mut acc = 0.0;
            for j in 0..n {
                acc += alphas[(j, c)] * (kx[j] - mean_kx - row_means[j] + grand);
            }
            out[(qi, c)] = acc;
        }
    }
    out
}

/// Linear PCA scores via the scatter matrix eigendecomposition. With a
/// degree-1, coef0-0, gamma-1 kernel these match kernel PCA scores up
/// to component sign.
pub fn linear_pca_scores(frames: &Array2<f64>, queries: &Array2<f64>, k: usize) -> Array2<f64> {
    let n = frames.nrows();
    let d = frames.ncols();
    let mean: Vec<f64> = (0..d)
        .map(|c| frames.column(c).sum() / n as f64)
        .collect();
    let mut scatter = Array2::<f64>::zeros((d, d));
    for a in 0..d {
        for b in 0..d {
            let mut acc = 0.0;
            for i in 0..n {
                acc += (frames[(i, a)] - mean[a]) * (frames[(i, b)] - mean[b]);
            }
            scatter[(a, b)] = acc;
        }
    }
    let (_values, vectors) = jacobi_eigen(&scatter);
    let mut out = Array2::<f64>::zeros((queries.nrows(), k));
    for (qi, q) in queries.rows().into_iter().enumerate() {
        for c in 0..k {
            let mut acc = 0.0;
            for a in 0..d {
                acc += (q[a] - mean[a]) * vectors[(a, c)];
            }
            out[(qi, c)] = acc;
        }
    }
    out
}

// -------------------------------------------------------------- EER

/// Equal error rate by counting loops and explicit segment
/// intersection of the two rate curves.
pub fn brute_eer(targets: &[f64], impostors: &[f64]) -> f64 {
    assert!(!targets.is_empty() && !impostors.is_empty());
    let mut thresholds: Vec<f64> = targets.iter().chain(impostors.iter()).cloned().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    let rates = |theta: f64| -> (f64, f64) {
        let fa = impostors.iter().filter(|&&s| s >= theta).count() as f64
            / impostors.len() as f64;
        let fr = targets.iter().filter(|&&s| s < theta).count() as f64 / targets.len() as f64;
        (fa, fr)
    };

    let mut prev = (1.0, 0.0);
    for i in 0..=thresholds.len() {
        let (fa, fr) = if i < thresholds.len() {
            rates(thresholds[i])
        } else {
            (0.0, 1.0)
        };
        if fa > fr {
            prev = (fa, fr);
            continue;
        }
        if fa == fr {
            return fa;
        }
        // Solve f0 + s (f1 - f0) = r0 + s (r1 - r0) for s in [0, 1].
        let (f0, r0) = prev;
        let (f1, r1) = (fa, fr);
        let s = (f0 - r0) / ((f0 - r0) + (r1 - f1));
        return f0 + s * (f1 - f0);
    }
    unreachable!("rates always cross before the virtual top threshold");
}

// ------------------------------------------------- finite differences

pub const FD_EPS: f64 = 1e-5;
pub const FD_REL: f64 = 1e-4;
pub const FD_ABS: f64 = 1e-8;

/// Central finite difference of a scalar function at one coordinate of
/// a parameter vector owned by the closure caller.
pub fn central_diff(mut f: impl FnMut(f64) -> f64, at: f64) -> f64 {
    (f(at + FD_EPS) - f(at - FD_EPS)) / (2.0 * FD_EPS)
}

/// Richardson-extrapolated central difference: combining step sizes
/// eps and eps/2 cancels the quadratic truncation term, which matters
/// where the loss curves steeply (near the normalization floor the
/// third derivative is large).
pub fn richardson_diff(mut f: impl FnMut(f64) -> f64, at: f64) -> f64 {
    let full = (f(at + FD_EPS) - f(at - FD_EPS)) / (2.0 * FD_EPS);
    let half = (f(at + FD_EPS / 2.0) - f(at - FD_EPS / 2.0)) / FD_EPS;
    (4.0 * half - full) / 3.0
}

/// Check one analytic derivative against its finite difference.
pub fn grad_matches(analytic: f64, fd: f64) -> bool {
    close(analytic, fd, FD_REL, FD_ABS)
}

// ----------------------------------------------------------- helpers

/// Deterministic pseudo-random frame matrix without pulling the
/// library's RNG choices into the oracle.
pub fn lcg_frames(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    Array2::from_shape_fn((n, d), |_| next())
}

pub fn lcg_signal(len: usize, seed: u64) -> Vec<f64> {
    lcg_frames(len, 1, seed).column(0).to_vec()
}
