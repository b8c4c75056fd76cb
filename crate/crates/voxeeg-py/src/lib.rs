//! Python bindings for the voxeeg toolkit.
//!
//! Exposes the pipeline stages that matter from a notebook: synthetic
//! corpus generation, EEG filtering, MFCC and statistical EEG
//! features, kernel PCA, the d-vector encoder, the GE2E loss, and the
//! evaluation metric. Matrices cross the boundary as plain nested
//! lists, row per frame.

use ndarray::{Array1, Array2};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::path::PathBuf;
use voxeeg::dataset::SynthSpec;
use voxeeg::dsp::BiquadCascade;
use voxeeg::encoder::{self, CellKind, EncoderParams};
use voxeeg::kpca::{self, KernelParams, KpcaModel};
use voxeeg::protocol;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Nested lists to a rectangular matrix.
fn matrix(rows: &[Vec<f64>]) -> PyResult<Array2<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(value_err("rows have unequal lengths"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((nrows, ncols), flat).map_err(value_err)
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Generate a synthetic paired audio and EEG corpus; returns the
/// manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, subjects=8, utterances=90, channels=31, noise_db=10.0, seed=0))]
fn synth_dataset(
    out_dir: PathBuf,
    subjects: usize,
    utterances: usize,
    channels: usize,
    noise_db: f64,
    seed: u64,
) -> PyResult<String> {
    let spec = SynthSpec {
        num_subjects: subjects,
        utterances_per_subject: utterances,
        channel_count: channels,
        noise_db,
        seed,
    };
    voxeeg::dataset::synth_dataset(&spec, &out_dir).map_err(value_err)?;
    Ok(out_dir.join("manifest.json").display().to_string())
}

/// 13 mel-frequency cepstral coefficients per 25 ms frame.
#[pyfunction]
fn mfcc13(audio: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    Ok(to_rows(&voxeeg::features::mfcc13(&audio).map_err(value_err)?))
}

/// Five windowed statistics per EEG channel; rows are channels.
#[pyfunction]
fn eeg155(eeg: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let channels = eeg.len();
    let m = matrix(&eeg)?;
    Ok(to_rows(
        &voxeeg::features::eeg155(&m, channels).map_err(value_err)?,
    ))
}

/// Butterworth bandpass, forward direction only.
#[pyfunction]
#[pyo3(signature = (x, f_low, f_high, fs, order=4))]
fn bandpass(x: Vec<f64>, f_low: f64, f_high: f64, fs: f64, order: usize) -> PyResult<Vec<f64>> {
    let filter = BiquadCascade::bandpass(f_low, f_high, fs, order).map_err(value_err)?;
    filter.apply(&x).map_err(value_err)
}

/// Single-notch mains filter.
#[pyfunction]
#[pyo3(signature = (x, f_center, fs, quality=30.0))]
fn notch(x: Vec<f64>, f_center: f64, fs: f64, quality: f64) -> PyResult<Vec<f64>> {
    let filter = BiquadCascade::notch(f_center, fs, quality).map_err(value_err)?;
    filter.apply(&x).map_err(value_err)
}

/// GE2E softmax loss over unit embeddings grouped by subject.
/// Returns (loss, d_embeddings, d_w, d_b).
#[pyfunction]
#[pyo3(signature = (embeddings, w=10.0, b=-5.0))]
#[allow(clippy::type_complexity)]
fn ge2e_loss(
    embeddings: Vec<Vec<Vec<f64>>>,
    w: f64,
    b: f64,
) -> PyResult<(f64, Vec<Vec<Vec<f64>>>, f64, f64)> {
    let batch: Vec<Vec<Array1<f64>>> = embeddings
        .into_iter()
        .map(|group| group.into_iter().map(Array1::from_vec).collect())
        .collect();
    let out = voxeeg::ge2e::ge2e_softmax_loss(&batch, w, b).map_err(value_err)?;
    let grads = out
        .d_embeddings
        .into_iter()
        .map(|group| group.into_iter().map(|g| g.to_vec()).collect())
        .collect();
    Ok((out.loss, grads, out.d_w, out.d_b))
}

/// Equal error rate from target and impostor score lists.
#[pyfunction]
fn eer(targets: Vec<f64>, impostors: Vec<f64>) -> PyResult<f64> {
    protocol::eer(&targets, &impostors).map_err(value_err)
}

/// Per-epoch training schedule: the sentence count of each window.
#[pyfunction]
fn train_steps_per_epoch(
    utterances_per_subject: usize,
    sentences_per_step: usize,
) -> PyResult<Vec<usize>> {
    protocol::train_steps_per_epoch(utterances_per_subject, sentences_per_step).map_err(value_err)
}

/// Rolling enrollment evaluation over precomputed embeddings.
/// Takes [(subject, [embedding per sentence])] and the window width;
/// returns (per_step_eer, target_trials, impostor_trials).
#[pyfunction]
#[allow(clippy::type_complexity)]
fn evaluate_embeddings(
    dvectors: Vec<(String, Vec<Vec<f64>>)>,
    window: usize,
) -> PyResult<(Vec<f64>, usize, usize)> {
    let converted: Vec<(String, Vec<Array1<f64>>)> = dvectors
        .into_iter()
        .map(|(s, es)| (s, es.into_iter().map(Array1::from_vec).collect()))
        .collect();
    protocol::evaluate_dvectors(&converted, window).map_err(value_err)
}

/// Polynomial kernel PCA fitted on feature frames.
#[pyclass]
struct Kpca {
    model: KpcaModel,
}

#[pymethods]
impl Kpca {
    /// Fit on row-per-frame data, keeping `k` components from at most
    /// `landmarks` frames.
    #[staticmethod]
    #[pyo3(signature = (frames, k, landmarks=2000, seed=0, degree=3, gamma=1.0, coef0=1.0))]
    fn fit(
        frames: Vec<Vec<f64>>,
        k: usize,
        landmarks: usize,
        seed: u64,
        degree: u32,
        gamma: f64,
        coef0: f64,
    ) -> PyResult<Self> {
        let m = matrix(&frames)?;
        let kernel = KernelParams {
            degree,
            gamma,
            coef0,
        };
        let model = kpca::fit(&m, k, landmarks, seed, kernel).map_err(value_err)?;
        Ok(Kpca { model })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Kpca {
            model: KpcaModel::load(&path).map_err(value_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.model.save(&path).map_err(value_err)
    }

    fn project(&self, frame: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self
            .model
            .project(Array1::from_vec(frame).view())
            .map_err(value_err)?
            .to_vec())
    }

    fn project_frames(&self, frames: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let m = matrix(&frames)?;
        Ok(to_rows(&self.model.project_frames(&m).map_err(value_err)?))
    }

    /// Rows of (component, ratio, cumulative).
    fn explained_variance(&self) -> Vec<(usize, f64, f64)> {
        self.model.explained_variance_table()
    }

    #[getter]
    fn components(&self) -> usize {
        self.model.components()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    #[getter]
    fn landmarks(&self) -> usize {
        self.model.num_landmarks()
    }
}

/// Recurrent d-vector encoder.
#[pyclass]
struct Encoder {
    params: EncoderParams,
}

#[pymethods]
impl Encoder {
    /// Freshly initialized parameters; cell is "lstm" or "gru".
    #[new]
    #[pyo3(signature = (cell, input_dim, hidden=128, embed=128, seed=0))]
    fn new(cell: &str, input_dim: usize, hidden: usize, embed: usize, seed: u64) -> PyResult<Self> {
        let cell = CellKind::from_tag(cell)
            .ok_or_else(|| value_err(format!("unknown cell {cell:?}, expected lstm or gru")))?;
        Ok(Encoder {
            params: encoder::init(cell, input_dim, hidden, embed, seed),
        })
    }

    /// Read a trained checkpoint; returns (encoder, w, b).
    #[staticmethod]
    fn load_checkpoint(path: PathBuf) -> PyResult<(Encoder, f64, f64)> {
        let (ckpt, _) = voxeeg::checkpoint::load_checkpoint(&path).map_err(value_err)?;
        Ok((
            Encoder {
                params: ckpt.params,
            },
            ckpt.w,
            ckpt.b,
        ))
    }

    /// Encode a row-per-frame utterance into a unit-norm d-vector.
    fn embed(&self, frames: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let m = matrix(&frames)?;
        let dv = encoder::embed(&self.params, &m, "", 0).map_err(value_err)?;
        if dv.degenerate {
            return Err(value_err("embedding norm underflowed"));
        }
        Ok(dv.e.to_vec())
    }

    #[getter]
    fn cell(&self) -> &'static str {
        self.params.cell.tag()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.params.input_dim
    }

    #[getter]
    fn hidden(&self) -> usize {
        self.params.hidden
    }

    #[getter]
    fn embed_dim(&self) -> usize {
        self.params.embed
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.params.num_params()
    }
}

#[pymodule]
fn voxeeg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", voxeeg::VERSION)?;
    m.add_function(wrap_pyfunction!(synth_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(mfcc13, m)?)?;
    m.add_function(wrap_pyfunction!(eeg155, m)?)?;
    m.add_function(wrap_pyfunction!(bandpass, m)?)?;
    m.add_function(wrap_pyfunction!(notch, m)?)?;
    m.add_function(wrap_pyfunction!(ge2e_loss, m)?)?;
    m.add_function(wrap_pyfunction!(eer, m)?)?;
    m.add_function(wrap_pyfunction!(train_steps_per_epoch, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_embeddings, m)?)?;
    m.add_class::<Kpca>()?;
    m.add_class::<Encoder>()?;
    Ok(())
}
