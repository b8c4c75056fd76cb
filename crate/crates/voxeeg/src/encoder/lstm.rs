//! LSTM cell: forward trace and exact backward.
//!
//! Gate pre-activations stack as [input, forget, cell, output] rows in
//! the combined weight matrix, all driven by the concatenation
//! `[x_t; h_prev]`. The state update is `c = f*c_prev + i*g` and
//! `h = o*tanh(c)` with elementwise products.

use super::{outer_acc, sigmoid, EncoderGrads, EncoderParams};
use ndarray::{s, Array1, Array2, ArrayView1};

/// Stacked gates per hidden unit.
pub const LSTM_GATES: usize = 4;

/// Activations from one time step.
pub(crate) struct LstmStep {
    /// Concatenated `[x_t; h_prev]`.
    z: Array1<f64>,
    i: Array1<f64>,
    f: Array1<f64>,
    g: Array1<f64>,
    o: Array1<f64>,
    c: Array1<f64>,
    tanh_c: Array1<f64>,
}

pub(crate) fn forward(
    params: &EncoderParams,
    frames: &Array2<f64>,
) -> (Vec<LstmStep>, Array1<f64>) {
    let hd = params.hidden;
    let d = params.input_dim;
    let mut h = Array1::<f64>::zeros(hd);
    let mut c_prev = Array1::<f64>::zeros(hd);
    let mut steps = Vec::with_capacity(frames.nrows());
    for row in frames.rows() {
        let mut z = Array1::<f64>::zeros(d + hd);
        z.slice_mut(s![0..d]).assign(&row);
        z.slice_mut(s![d..]).assign(&h);
        let pre = params.w_cell.dot(&z) + &params.b_cell;
        let i = pre.slice(s![0..hd]).mapv(sigmoid);
        let f = pre.slice(s![hd..2 * hd]).mapv(sigmoid);
        let g = pre.slice(s![2 * hd..3 * hd]).mapv(f64::tanh);
        let o = pre.slice(s![3 * hd..]).mapv(sigmoid);
        let c = &f * &c_prev + &i * &g;
        let tanh_c = c.mapv(f64::tanh);
        h = &o * &tanh_c;
        c_prev = c.clone();
        steps.push(LstmStep {
            z,
            i,
            f,
            g,
            o,
            c,
            tanh_c,
        });
    }
    (steps, h)
}

pub(crate) fn backward(
    params: &EncoderParams,
    steps: &[LstmStep],
    dh_final: Array1<f64>,
    grads: &mut EncoderGrads,
) {
    let hd = params.hidden;
    let d = params.input_dim;
    let zeros = Array1::<f64>::zeros(hd);
    let mut dh = dh_final;
    let mut dc = Array1::<f64>::zeros(hd);
    for (t, step) in steps.iter().enumerate().rev() {
        let c_prev: ArrayView1<f64> = if t == 0 {
            zeros.view()
        } else {
            steps[t - 1].c.view()
        };
        let mut dpre = Array1::<f64>::zeros(LSTM_GATES * hd);
        for k in 0..hd {
            let d_o = dh[k] * step.tanh_c[k];
            let dc_k = dc[k] + dh[k] * step.o[k] * (1.0 - step.tanh_c[k] * step.tanh_c[k]);
            let d_i = dc_k * step.g[k];
            let d_f = dc_k * c_prev[k];
            let d_g = dc_k * step.i[k];
            dpre[k] = d_i * step.i[k] * (1.0 - step.i[k]);
            dpre[hd + k] = d_f * step.f[k] * (1.0 - step.f[k]);
            dpre[2 * hd + k] = d_g * (1.0 - step.g[k] * step.g[k]);
            dpre[3 * hd + k] = d_o * step.o[k] * (1.0 - step.o[k]);
            dc[k] = dc_k * step.f[k];
        }
        outer_acc(grads.w_cell.view_mut(), dpre.view(), step.z.view());
        grads.b_cell += &dpre;
        let dz = params.w_cell.t().dot(&dpre);
        dh = dz.slice(s![d..]).to_owned();
    }
}
