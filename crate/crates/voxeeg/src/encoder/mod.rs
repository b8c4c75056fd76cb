//! Recurrent d-vector encoder.
//!
//! A feature sequence (T x D frames) runs through a single recurrent
//! cell (LSTM or GRU, hidden width 128 by default). The final hidden
//! state passes through a dense layer to an embedding (width 128 by
//! default), which is L2-normalized into the d-vector. Forward returns
//! a cache holding every activation; backward replays it for exact
//! gradients. Caches are tied to the parameter generation that
//! produced them, so a cache from before an update step is rejected.
//!
//! Weights initialize uniformly in [-0.1, 0.1) from a seeded ChaCha8
//! stream. Biases start at zero except the LSTM forget gate, which
//! starts at 1.0 so early training does not erase the cell state.

mod gru;
mod lstm;

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use gru::GRU_GATES;
pub use lstm::LSTM_GATES;

/// Default recurrent state width.
pub const DEFAULT_HIDDEN: usize = 128;
/// Default embedding width.
pub const DEFAULT_EMBED: usize = 128;
/// Norms below this mark the d-vector degenerate instead of dividing
/// by ~zero.
pub const NORM_FLOOR: f64 = 1e-8;
const INIT_RANGE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("input has {got} columns, encoder expects {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("empty input sequence")]
    EmptyInput,
    #[error("non-finite activation at sequence end")]
    NonFiniteActivation,
    #[error("cache from parameter generation {cache}, parameters now at {params}")]
    StaleCache { cache: u64, params: u64 },
}

/// Which recurrent cell the encoder runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    /// Stacked gate count: pre-activation rows are `gates * hidden`.
    pub fn gates(self) -> usize {
        match self {
            CellKind::Lstm => LSTM_GATES,
            CellKind::Gru => GRU_GATES,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "lstm" => Some(CellKind::Lstm),
            "gru" => Some(CellKind::Gru),
            _ => None,
        }
    }
}

/// All trainable parameters plus a generation counter that advances on
/// every update.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub cell: CellKind,
    pub input_dim: usize,
    pub hidden: usize,
    pub embed: usize,
    /// Stacked gate weights, `gates * hidden` rows by `input + hidden`
    /// columns, applied to the concatenated `[x_t; h_prev]`.
    pub w_cell: Array2<f64>,
    pub b_cell: Array1<f64>,
    /// Dense projection from the final hidden state, `embed x hidden`.
    pub w_dense: Array2<f64>,
    pub b_dense: Array1<f64>,
    generation: u64,
}

/// Gradients with the same shapes as the parameters they apply to.
#[derive(Debug, Clone)]
pub struct EncoderGrads {
    pub w_cell: Array2<f64>,
    pub b_cell: Array1<f64>,
    pub w_dense: Array2<f64>,
    pub b_dense: Array1<f64>,
}

impl EncoderGrads {
    fn zeros(params: &EncoderParams) -> Self {
        EncoderGrads {
            w_cell: Array2::zeros(params.w_cell.raw_dim()),
            b_cell: Array1::zeros(params.b_cell.raw_dim()),
            w_dense: Array2::zeros(params.w_dense.raw_dim()),
            b_dense: Array1::zeros(params.b_dense.raw_dim()),
        }
    }

    /// Element-wise accumulate another gradient set.
    pub fn add_assign(&mut self, other: &EncoderGrads) {
        self.w_cell += &other.w_cell;
        self.b_cell += &other.b_cell;
        self.w_dense += &other.w_dense;
        self.b_dense += &other.b_dense;
    }

    /// Sum of squared entries, for global-norm clipping.
    pub fn sq_sum(&self) -> f64 {
        self.w_cell.iter().map(|v| v * v).sum::<f64>()
            + self.b_cell.iter().map(|v| v * v).sum::<f64>()
            + self.w_dense.iter().map(|v| v * v).sum::<f64>()
            + self.b_dense.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn scale(&mut self, factor: f64) {
        self.w_cell *= factor;
        self.b_cell *= factor;
        self.w_dense *= factor;
        self.b_dense *= factor;
    }
}

/// A speaker embedding with its identity labels.
#[derive(Debug, Clone)]
pub struct DVector {
    pub e: Array1<f64>,
    pub subject_id: String,
    pub sentence_index: u32,
    /// True when the pre-normalization output was shorter than
    /// [`NORM_FLOOR`], so `e` is not unit length.
    pub degenerate: bool,
}

pub(crate) enum CellTrace {
    Lstm(Vec<lstm::LstmStep>),
    Gru(Vec<gru::GruStep>),
}

/// Every activation from one forward pass, consumed by [`backward`].
pub struct ForwardCache {
    generation: u64,
    trace: CellTrace,
    h_final: Array1<f64>,
    /// Norm of the dense output, before flooring.
    v_norm: f64,
    e: Array1<f64>,
    degenerate: bool,
}

impl ForwardCache {
    pub fn embedding(&self) -> ArrayView1<'_, f64> {
        self.e.view()
    }

    pub fn degenerate(&self) -> bool {
        self.degenerate
    }
}

/// Build freshly initialized parameters at generation zero.
pub fn init(
    cell: CellKind,
    input_dim: usize,
    hidden: usize,
    embed: usize,
    seed: u64,
) -> EncoderParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = cell.gates() * hidden;
    let w_cell =
        Array2::from_shape_fn((rows, input_dim + hidden), |_| rng.random_range(-INIT_RANGE..INIT_RANGE));
    let w_dense =
        Array2::from_shape_fn((embed, hidden), |_| rng.random_range(-INIT_RANGE..INIT_RANGE));
    let mut b_cell = Array1::zeros(rows);
    if cell == CellKind::Lstm {
        b_cell.slice_mut(ndarray::s![hidden..2 * hidden]).fill(1.0);
    }
    EncoderParams {
        cell,
        input_dim,
        hidden,
        embed,
        w_cell,
        b_cell,
        w_dense,
        b_dense: Array1::zeros(embed),
        generation: 0,
    }
}

impl EncoderParams {
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn num_params(&self) -> usize {
        self.w_cell.len() + self.b_cell.len() + self.w_dense.len() + self.b_dense.len()
    }
}

/// Run the encoder over a T x D frame matrix.
pub fn forward(params: &EncoderParams, frames: &Array2<f64>) -> Result<ForwardCache, EncoderError> {
    if frames.nrows() == 0 {
        return Err(EncoderError::EmptyInput);
    }
    if frames.ncols() != params.input_dim {
        return Err(EncoderError::DimMismatch {
            expected: params.input_dim,
            got: frames.ncols(),
        });
    }
    let (trace, h_final) = match params.cell {
        CellKind::Lstm => {
            let (steps, h) = lstm::forward(params, frames);
            (CellTrace::Lstm(steps), h)
        }
        CellKind::Gru => {
            let (steps, h) = gru::forward(params, frames);
            (CellTrace::Gru(steps), h)
        }
    };
    let v = params.w_dense.dot(&h_final) + &params.b_dense;
    if h_final.iter().chain(v.iter()).any(|x| !x.is_finite()) {
        return Err(EncoderError::NonFiniteActivation);
    }
    let norm = v.dot(&v).sqrt();
    let degenerate = norm < NORM_FLOOR;
    let e = &v / norm.max(NORM_FLOOR);
    Ok(ForwardCache {
        generation: params.generation,
        trace,
        h_final,
        v_norm: norm,
        e,
        degenerate,
    })
}

/// Encode one utterance into a labeled d-vector.
pub fn embed(
    params: &EncoderParams,
    frames: &Array2<f64>,
    subject_id: &str,
    sentence_index: u32,
) -> Result<DVector, EncoderError> {
    let cache = forward(params, frames)?;
    Ok(DVector {
        e: cache.e,
        subject_id: subject_id.to_string(),
        sentence_index,
        degenerate: cache.degenerate,
    })
}

/// Backpropagate a loss gradient on the d-vector through the whole
/// network.
pub fn backward(
    params: &EncoderParams,
    cache: &ForwardCache,
    d_embedding: ArrayView1<f64>,
) -> Result<EncoderGrads, EncoderError> {
    if cache.generation != params.generation {
        return Err(EncoderError::StaleCache {
            cache: cache.generation,
            params: params.generation,
        });
    }
    if d_embedding.len() != params.embed {
        return Err(EncoderError::DimMismatch {
            expected: params.embed,
            got: d_embedding.len(),
        });
    }
    let mut grads = EncoderGrads::zeros(params);

    // Normalization backward. On the unit sphere only the component of
    // the incoming gradient orthogonal to e survives; the degenerate
    // branch divides by the floor exactly as forward did.
    let dv: Array1<f64> = if cache.degenerate {
        d_embedding.mapv(|x| x / NORM_FLOOR)
    } else {
        let along = cache.e.dot(&d_embedding);
        (&d_embedding - &(&cache.e * along)) / cache.v_norm
    };

    outer_acc(grads.w_dense.view_mut(), dv.view(), cache.h_final.view());
    grads.b_dense += &dv;
    let dh_final = params.w_dense.t().dot(&dv);

    match &cache.trace {
        CellTrace::Lstm(steps) => lstm::backward(params, steps, dh_final, &mut grads),
        CellTrace::Gru(steps) => gru::backward(params, steps, dh_final, &mut grads),
    }
    Ok(grads)
}

/// Plain SGD step; advances the parameter generation so caches from
/// before the step can no longer feed [`backward`].
pub fn apply_sgd(params: &mut EncoderParams, grads: &EncoderGrads, learning_rate: f64) {
    params.w_cell.scaled_add(-learning_rate, &grads.w_cell);
    params.b_cell.scaled_add(-learning_rate, &grads.b_cell);
    params.w_dense.scaled_add(-learning_rate, &grads.w_dense);
    params.b_dense.scaled_add(-learning_rate, &grads.b_dense);
    params.generation += 1;
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// acc += u (outer) v, accumulated row by row.
pub(crate) fn outer_acc(mut acc: ArrayViewMut2<f64>, u: ArrayView1<f64>, v: ArrayView1<f64>) {
    for (i, &ui) in u.iter().enumerate() {
        if ui != 0.0 {
            acc.index_axis_mut(Axis(0), i).scaled_add(ui, &v);
        }
    }
}
