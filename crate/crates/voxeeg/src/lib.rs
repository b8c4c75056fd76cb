//! Speaker verification from speech and EEG signals.
//!
//! The pipeline, end to end:
//!
//! 1. [`dataset`] loads and stores recordings (16 kHz mono audio plus
//!    1000 Hz multichannel EEG) and can generate a synthetic corpus in
//!    which both modalities carry speaker identity.
//! 2. [`dsp`] designs and applies the EEG preprocessing filters: a 4th
//!    order Butterworth bandpass (0.1-70 Hz) and a 60 Hz notch.
//! 3. [`features`] computes MFCC-13 from audio and five statistical
//!    features per EEG channel, both at a 100 Hz frame rate.
//! 4. [`kpca`] reduces the 155-dim EEG features to 30 dims with
//!    polynomial-kernel PCA fitted on training frames.
//! 5. [`encoder`] maps a variable-length feature sequence to a unit-norm
//!    d-vector with a single LSTM or GRU layer plus a dense projection,
//!    with exact reverse-mode gradients.
//! 6. [`ge2e`] implements centroids, the scaled-cosine similarity matrix
//!    and the generalized end-to-end softmax loss with full gradients.
//! 7. [`protocol`] runs the training schedule (sentence-windowed batches
//!    of two random subjects) and the rolling enrollment/evaluation EER
//!    measurement.
//! 8. [`checkpoint`] persists trained encoders.

pub mod checkpoint;
pub mod dataset;
pub mod dsp;
pub mod encoder;
pub mod features;
pub mod ge2e;
pub mod kpca;
pub mod protocol;

/// Version string embedded into artifacts for provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
