//! GRU cell: forward trace and exact backward.
//!
//! Gate pre-activations stack as [reset, update, candidate] rows. The
//! reset and update gates see the plain concatenation `[x_t; h_prev]`;
//! the candidate sees `[x_t; r*h_prev]`, so the reset gate scales the
//! recurrent input before the candidate weights, and each gate carries
//! one bias. The state update is `h = (1-z)*n + z*h_prev`.

use super::{outer_acc, sigmoid, EncoderGrads, EncoderParams};
use ndarray::{s, Array1, Array2};

/// Stacked gates per hidden unit.
pub const GRU_GATES: usize = 3;

/// Activations from one time step.
pub(crate) struct GruStep {
    /// Concatenated `[x_t; h_prev]`.
    z_cat: Array1<f64>,
    r: Array1<f64>,
    z: Array1<f64>,
    n: Array1<f64>,
    /// Concatenated `[x_t; r*h_prev]` fed to the candidate rows.
    n_input: Array1<f64>,
}

pub(crate) fn forward(
    params: &EncoderParams,
    frames: &Array2<f64>,
) -> (Vec<GruStep>, Array1<f64>) {
    let hd = params.hidden;
    let d = params.input_dim;
    let mut h = Array1::<f64>::zeros(hd);
    let mut steps = Vec::with_capacity(frames.nrows());
    for row in frames.rows() {
        let mut z_cat = Array1::<f64>::zeros(d + hd);
        z_cat.slice_mut(s![0..d]).assign(&row);
        z_cat.slice_mut(s![d..]).assign(&h);
        let rz_pre =
            params.w_cell.slice(s![0..2 * hd, ..]).dot(&z_cat) + &params.b_cell.slice(s![0..2 * hd]);
        let r = rz_pre.slice(s![0..hd]).mapv(sigmoid);
        let z = rz_pre.slice(s![hd..]).mapv(sigmoid);
        let mut n_input = z_cat.clone();
        for k in 0..hd {
            n_input[d + k] = r[k] * z_cat[d + k];
        }
        let n_pre = params.w_cell.slice(s![2 * hd.., ..]).dot(&n_input)
            + &params.b_cell.slice(s![2 * hd..]);
        let n = n_pre.mapv(f64::tanh);
        let mut h_next = Array1::<f64>::zeros(hd);
        for k in 0..hd {
            h_next[k] = (1.0 - z[k]) * n[k] + z[k] * z_cat[d + k];
        }
        h = h_next;
        steps.push(GruStep {
            z_cat,
            r,
            z,
            n,
            n_input,
        });
    }
    (steps, h)
}

pub(crate) fn backward(
    params: &EncoderParams,
    steps: &[GruStep],
    dh_final: Array1<f64>,
    grads: &mut EncoderGrads,
) {
    let hd = params.hidden;
    let d = params.input_dim;
    let mut dh = dh_final;
    for step in steps.iter().rev() {
        let h_prev = step.z_cat.slice(s![d..]);
        let mut dh_prev = Array1::<f64>::zeros(hd);
        let mut drz_pre = Array1::<f64>::zeros(2 * hd);
        let mut dn_pre = Array1::<f64>::zeros(hd);
        for k in 0..hd {
            let dz_gate = dh[k] * (h_prev[k] - step.n[k]);
            let dn = dh[k] * (1.0 - step.z[k]);
            dh_prev[k] = dh[k] * step.z[k];
            dn_pre[k] = dn * (1.0 - step.n[k] * step.n[k]);
            drz_pre[hd + k] = dz_gate * step.z[k] * (1.0 - step.z[k]);
        }
        outer_acc(
            grads.w_cell.slice_mut(s![2 * hd.., ..]),
            dn_pre.view(),
            step.n_input.view(),
        );
        {
            let mut b_n = grads.b_cell.slice_mut(s![2 * hd..]);
            b_n += &dn_pre;
        }
        let d_ninput = params.w_cell.slice(s![2 * hd.., ..]).t().dot(&dn_pre);
        for k in 0..hd {
            let d_rh = d_ninput[d + k];
            dh_prev[k] += d_rh * step.r[k];
            let d_r = d_rh * h_prev[k];
            drz_pre[k] = d_r * step.r[k] * (1.0 - step.r[k]);
        }
        outer_acc(
            grads.w_cell.slice_mut(s![0..2 * hd, ..]),
            drz_pre.view(),
            step.z_cat.view(),
        );
        {
            let mut b_rz = grads.b_cell.slice_mut(s![0..2 * hd]);
            b_rz += &drz_pre;
        }
        let dz_cat = params.w_cell.slice(s![0..2 * hd, ..]).t().dot(&drz_pre);
        for k in 0..hd {
            dh_prev[k] += dz_cat[d + k];
        }
        dh = dh_prev;
    }
}
