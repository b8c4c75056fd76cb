//! Enrollment and evaluation protocol plus the training loop.
//!
//! Both phases slice each subject's U sentences into consecutive
//! windows of N, the last window ragged when N does not divide U.
//! A training epoch walks the window list in order; each step draws
//! 2 distinct training subjects, batches their sentences from the
//! current window, encodes them, and takes one SGD step on the GE2E
//! loss with the gradient clipped to a global norm of 3. Evaluation
//! step s enrolls plain-mean centroids from window s and scores every
//! embedding of window s+1 against every centroid by raw cosine,
//! yielding one equal error rate per step. The final window only ever
//! serves as evaluation material, so U sentences at window N give
//! ceil(U/N) windows but one fewer scored step.

mod eer;

pub use eer::eer;

use crate::encoder::{self, CellKind, EncoderError, EncoderParams};
use crate::features::FeatureProvider;
use crate::ge2e::{self, Ge2eError};
use ndarray::Array1;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;
use thiserror::Error;

/// Default subjects drawn per training batch.
pub const DEFAULT_SUBJECTS_PER_BATCH: usize = 2;
/// Default sentences per window, and so per subject per batch.
pub const DEFAULT_SENTENCES_PER_STEP: usize = 3;
/// Default SGD learning rate.
pub const DEFAULT_LEARNING_RATE: f64 = 0.01;
/// Default global gradient norm clip.
pub const DEFAULT_GRAD_CLIP: f64 = 3.0;
/// Default training epochs.
pub const DEFAULT_EPOCHS: usize = 40;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid enrollment window: {0}")]
    InvalidWindow(String),
    #[error("{windows} enrollment window(s), scoring needs at least 2")]
    TooFewWindows { windows: usize },
    #[error("a trial side has no scores")]
    EmptyScores,
    #[error("non-finite trial score")]
    NonFiniteScore,
    #[error("features unavailable: {0}")]
    FeatureMissing(String),
    #[error("encoder produced a degenerate d-vector for {subject} sentence {sentence}")]
    DegenerateBatch { subject: String, sentence: u32 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Loss(#[from] Ge2eError),
}

/// Consecutive sentence ranges of width `window`, the last one ragged.
pub fn enrollment_windows(
    num_sentences: usize,
    window: usize,
) -> Result<Vec<Range<usize>>, ProtocolError> {
    if window == 0 {
        return Err(ProtocolError::InvalidWindow("window must be positive".into()));
    }
    if num_sentences == 0 {
        return Err(ProtocolError::InvalidWindow("no sentences to window".into()));
    }
    let mut out = Vec::with_capacity(num_sentences.div_ceil(window));
    let mut start = 0;
    while start < num_sentences {
        let end = (start + window).min(num_sentences);
        out.push(start..end);
        start = end;
    }
    Ok(out)
}

/// Per-epoch step schedule: the sentence count of each window, in
/// order. One training step consumes one window.
pub fn train_steps_per_epoch(
    utterances_per_subject: usize,
    sentences_per_step: usize,
) -> Result<Vec<usize>, ProtocolError> {
    if utterances_per_subject < sentences_per_step {
        return Err(ProtocolError::InvalidWindow(format!(
            "window of {} sentences exceeds the {} available",
            sentences_per_step, utterances_per_subject
        )));
    }
    Ok(enrollment_windows(utterances_per_subject, sentences_per_step)?
        .into_iter()
        .map(|r| r.len())
        .collect())
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub cell: CellKind,
    pub hidden: usize,
    pub embed: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub grad_clip_norm: f64,
    pub subjects_per_batch: usize,
    /// Window width N: sentences batched per subject per step.
    pub sentences_per_step: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(cell: CellKind, seed: u64) -> Self {
        TrainConfig {
            cell,
            hidden: encoder::DEFAULT_HIDDEN,
            embed: encoder::DEFAULT_EMBED,
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            grad_clip_norm: DEFAULT_GRAD_CLIP,
            subjects_per_batch: DEFAULT_SUBJECTS_PER_BATCH,
            sentences_per_step: DEFAULT_SENTENCES_PER_STEP,
            seed,
        }
    }
}

/// One logged training step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossEntry {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

/// Trained parameters with the similarity scalars and the loss path.
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub w: f64,
    pub b: f64,
    pub loss_log: Vec<LossEntry>,
}

/// Mean logged loss within one epoch.
pub fn mean_epoch_loss(log: &[LossEntry], epoch: usize) -> Option<f64> {
    let losses: Vec<f64> = log
        .iter()
        .filter(|e| e.epoch == epoch)
        .map(|e| e.loss)
        .collect();
    if losses.is_empty() {
        None
    } else {
        Some(losses.iter().sum::<f64>() / losses.len() as f64)
    }
}

fn draw_distinct(rng: &mut ChaCha8Rng, upper: usize, count: usize) -> Vec<usize> {
    let mut picked = Vec::with_capacity(count);
    while picked.len() < count {
        let v = rng.random_range(0..upper);
        if !picked.contains(&v) {
            picked.push(v);
        }
    }
    picked
}

/// Train an encoder on the given subjects' features with GE2E loss.
pub fn train(
    provider: &dyn FeatureProvider,
    subjects: &[String],
    num_sentences: u32,
    config: &TrainConfig,
) -> Result<TrainOutcome, ProtocolError> {
    if config.subjects_per_batch < 2 {
        return Err(ProtocolError::InvalidConfig(
            "need at least 2 subjects per batch".into(),
        ));
    }
    if subjects.len() < config.subjects_per_batch {
        return Err(ProtocolError::InvalidConfig(format!(
            "{} train subjects cannot fill batches of {}",
            subjects.len(),
            config.subjects_per_batch
        )));
    }
    let windows = enrollment_windows(num_sentences as usize, config.sentences_per_step)?;
    if (num_sentences as usize) < config.sentences_per_step {
        return Err(ProtocolError::InvalidConfig(format!(
            "window of {} sentences exceeds the {} available",
            config.sentences_per_step, num_sentences
        )));
    }
    if windows.iter().any(|w| w.len() < 2) {
        return Err(ProtocolError::InvalidConfig(
            "a window holds a single sentence; exclusive centroids need 2".into(),
        ));
    }

    let mut params = encoder::init(
        config.cell,
        provider.input_dim(),
        config.hidden,
        config.embed,
        config.seed,
    );
    let mut w = ge2e::W_INIT;
    let mut b = ge2e::B_INIT;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let mut loss_log = Vec::with_capacity(config.epochs * windows.len());

    for epoch in 0..config.epochs {
        for (step, window) in windows.iter().enumerate() {
            let subject_picks = draw_distinct(&mut rng, subjects.len(), config.subjects_per_batch);
            let mut batch: Vec<Vec<Array1<f64>>> = Vec::with_capacity(subject_picks.len());
            let mut caches = Vec::new();
            for &si in &subject_picks {
                let subject = &subjects[si];
                let mut group = Vec::with_capacity(window.len());
                for ui in window.clone() {
                    let sentence = ui as u32;
                    let frames = provider
                        .frames(subject, sentence)
                        .map_err(|e| ProtocolError::FeatureMissing(e.to_string()))?;
                    let cache = encoder::forward(&params, frames)?;
                    if cache.degenerate() {
                        return Err(ProtocolError::DegenerateBatch {
                            subject: subject.clone(),
                            sentence,
                        });
                    }
                    group.push(cache.embedding().to_owned());
                    caches.push(cache);
                }
                batch.push(group);
            }

            let out = ge2e::ge2e_softmax_loss(&batch, w, b)?;
            loss_log.push(LossEntry {
                epoch,
                step,
                loss: out.loss,
            });

            let mut grads: Option<encoder::EncoderGrads> = None;
            let mut cache_it = caches.iter();
            for group_grads in &out.d_embeddings {
                for d_e in group_grads {
                    let cache = cache_it.next().unwrap();
                    let g = encoder::backward(&params, cache, d_e.view())?;
                    match grads.as_mut() {
                        Some(acc) => acc.add_assign(&g),
                        None => grads = Some(g),
                    }
                }
            }
            let mut grads = grads.expect("batch is never empty");

            // Clip the global norm over every parameter, the similarity
            // scalars included.
            let norm = (grads.sq_sum() + out.d_w * out.d_w + out.d_b * out.d_b).sqrt();
            let (d_w, d_b) = if norm > config.grad_clip_norm {
                let scale = config.grad_clip_norm / norm;
                grads.scale(scale);
                (out.d_w * scale, out.d_b * scale)
            } else {
                (out.d_w, out.d_b)
            };

            encoder::apply_sgd(&mut params, &grads, config.learning_rate);
            w = ge2e::clamp_w(w - config.learning_rate * d_w);
            b -= config.learning_rate * d_b;
        }
    }

    Ok(TrainOutcome {
        params,
        w,
        b,
        loss_log,
    })
}

/// Encode every sentence of every subject, in the given order.
pub fn compute_dvectors(
    params: &EncoderParams,
    provider: &dyn FeatureProvider,
    subjects: &[String],
    num_sentences: u32,
) -> Result<Vec<(String, Vec<Array1<f64>>)>, ProtocolError> {
    let mut out = Vec::with_capacity(subjects.len());
    for subject in subjects {
        let mut embeddings = Vec::with_capacity(num_sentences as usize);
        for sentence in 0..num_sentences {
            let frames = provider
                .frames(subject, sentence)
                .map_err(|e| ProtocolError::FeatureMissing(e.to_string()))?;
            let dv = encoder::embed(params, frames, subject, sentence)?;
            if dv.degenerate {
                return Err(ProtocolError::DegenerateBatch {
                    subject: subject.clone(),
                    sentence,
                });
            }
            embeddings.push(dv.e);
        }
        out.push((subject.clone(), embeddings));
    }
    Ok(out)
}

/// Verification results over the rolling windows.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub feature_kind: String,
    pub cell_kind: String,
    pub n_sentences: usize,
    pub num_subjects: usize,
    pub utterances_per_subject: usize,
    pub num_windows: usize,
    pub num_steps: usize,
    pub per_step_eer: Vec<f64>,
    pub mean_eer: f64,
    pub num_target_trials: usize,
    pub num_impostor_trials: usize,
    pub note: String,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Score precomputed per-subject d-vectors through the rolling
/// enrollment protocol. Each subject must hold one embedding per
/// sentence, in sentence order.
pub fn evaluate_dvectors(
    dvectors: &[(String, Vec<Array1<f64>>)],
    window: usize,
) -> Result<(Vec<f64>, usize, usize), ProtocolError> {
    if dvectors.len() < 2 {
        return Err(ProtocolError::InvalidConfig(
            "verification needs at least 2 subjects".into(),
        ));
    }
    let num_sentences = dvectors[0].1.len();
    if dvectors.iter().any(|(_, e)| e.len() != num_sentences) {
        return Err(ProtocolError::InvalidWindow(
            "subjects have unequal sentence counts".into(),
        ));
    }
    let windows = enrollment_windows(num_sentences, window)?;
    if windows.len() < 2 {
        return Err(ProtocolError::TooFewWindows {
            windows: windows.len(),
        });
    }

    let mut per_step = Vec::with_capacity(windows.len() - 1);
    let mut total_targets = 0;
    let mut total_impostors = 0;
    for s in 0..windows.len() - 1 {
        let enroll = &windows[s];
        let eval = &windows[s + 1];
        let centroids: Vec<Array1<f64>> = dvectors
            .iter()
            .map(|(_, es)| {
                let mut c = Array1::<f64>::zeros(es[0].len());
                for e in &es[enroll.start..enroll.end] {
                    c += e;
                }
                c / enroll.len() as f64
            })
            .collect();
        let mut targets = Vec::new();
        let mut impostors = Vec::new();
        for (claimed, centroid) in centroids.iter().enumerate() {
            for (actual, (_, es)) in dvectors.iter().enumerate() {
                for e in &es[eval.start..eval.end] {
                    let score = ge2e::cosine(e.view(), centroid.view());
                    if actual == claimed {
                        targets.push(score);
                    } else {
                        impostors.push(score);
                    }
                }
            }
        }
        total_targets += targets.len();
        total_impostors += impostors.len();
        per_step.push(eer(&targets, &impostors)?);
    }
    Ok((per_step, total_targets, total_impostors))
}

/// Full evaluation: encode the subjects and report per-step equal
/// error rates.
pub fn evaluate(
    params: &EncoderParams,
    provider: &dyn FeatureProvider,
    subjects: &[String],
    num_sentences: u32,
    window: usize,
    feature_kind: &str,
    cell_kind: &str,
) -> Result<EvalReport, ProtocolError> {
    let dvectors = compute_dvectors(params, provider, subjects, num_sentences)?;
    report_from_dvectors(&dvectors, window, feature_kind, cell_kind)
}

/// Build the full report from precomputed d-vectors.
pub fn report_from_dvectors(
    dvectors: &[(String, Vec<Array1<f64>>)],
    window: usize,
    feature_kind: &str,
    cell_kind: &str,
) -> Result<EvalReport, ProtocolError> {
    let (per_step_eer, num_target_trials, num_impostor_trials) =
        evaluate_dvectors(dvectors, window)?;
    let num_sentences = dvectors[0].1.len();
    let windows = enrollment_windows(num_sentences, window)?;
    let num_steps = per_step_eer.len();
    let mean_eer = per_step_eer.iter().sum::<f64>() / num_steps as f64;
    let last = windows.last().unwrap().len();
    let ragged = if last == window {
        String::new()
    } else {
        format!(" The final window holds only {last} sentence(s).")
    };
    let note = format!(
        "{} windows of {} sentence(s) give {} scored steps: each step enrolls on one \
         window and evaluates on the next, so the final window is never enrolled.{}",
        windows.len(),
        window,
        num_steps,
        ragged
    );
    Ok(EvalReport {
        feature_kind: feature_kind.to_string(),
        cell_kind: cell_kind.to_string(),
        n_sentences: window,
        num_subjects: dvectors.len(),
        utterances_per_subject: num_sentences,
        num_windows: windows.len(),
        num_steps,
        per_step_eer,
        mean_eer,
        num_target_trials,
        num_impostor_trials,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_split_evenly_and_raggedly() {
        let even = enrollment_windows(90, 3).unwrap();
        assert_eq!(even.len(), 30);
        assert!(even.iter().all(|r| r.len() == 3));
        assert_eq!(even[0], 0..3);
        assert_eq!(even[29], 87..90);

        let ragged = enrollment_windows(90, 20).unwrap();
        let lens: Vec<usize> = ragged.iter().map(|r| r.len()).collect();
        assert_eq!(lens, vec![20, 20, 20, 20, 10]);

        assert!(enrollment_windows(90, 0).is_err());
        assert!(enrollment_windows(0, 3).is_err());
        assert_eq!(enrollment_windows(5, 10).unwrap(), vec![0..5]);
    }

    #[test]
    fn step_schedule_lists_window_sizes() {
        assert_eq!(train_steps_per_epoch(90, 3).unwrap(), vec![3; 30]);
        assert_eq!(
            train_steps_per_epoch(90, 20).unwrap(),
            vec![20, 20, 20, 20, 10]
        );
        assert_eq!(train_steps_per_epoch(90, 90).unwrap(), vec![90]);
        assert!(matches!(
            train_steps_per_epoch(5, 10),
            Err(ProtocolError::InvalidWindow(_))
        ));
    }

    #[test]
    fn draw_distinct_yields_distinct_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let picks = draw_distinct(&mut rng, 7, 4);
            assert_eq!(picks.len(), 4);
            let mut sorted = picks.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 4);
            assert!(picks.iter().all(|&p| p < 7));
        }
    }

    #[test]
    fn separable_dvectors_reach_zero_eer() {
        let mut e0 = Array1::<f64>::zeros(4);
        e0[0] = 1.0;
        let mut e1 = Array1::<f64>::zeros(4);
        e1[1] = 1.0;
        let dvectors = vec![
            ("s01".to_string(), vec![e0.clone(); 6]),
            ("s02".to_string(), vec![e1.clone(); 6]),
        ];
        let (per_step, targets, impostors) = evaluate_dvectors(&dvectors, 2).unwrap();
        assert_eq!(per_step.len(), 2);
        assert!(per_step.iter().all(|&e| e == 0.0));
        // Per step: 2 claims x 2 subjects x 2 eval sentences = 8 trials,
        // half targets.
        assert_eq!(targets, 8);
        assert_eq!(impostors, 8);
    }

    #[test]
    fn ninety_sentences_at_window_three_score_29_steps() {
        let mut e0 = Array1::<f64>::zeros(3);
        e0[0] = 1.0;
        let mut e1 = Array1::<f64>::zeros(3);
        e1[2] = 1.0;
        let dvectors = vec![
            ("a".to_string(), vec![e0; 90]),
            ("b".to_string(), vec![e1; 90]),
        ];
        let report = report_from_dvectors(&dvectors, 3, "mfcc13", "lstm").unwrap();
        assert_eq!(report.num_windows, 30);
        assert_eq!(report.num_steps, 29);
        assert_eq!(report.per_step_eer.len(), 29);
        assert!(report.note.contains("29"));
        assert!(report.note.contains("never enrolled"));
    }

    #[test]
    fn too_few_windows_is_an_error() {
        let e = Array1::<f64>::ones(2) / 2.0_f64.sqrt();
        let dvectors = vec![
            ("a".to_string(), vec![e.clone(); 4]),
            ("b".to_string(), vec![e; 4]),
        ];
        assert!(matches!(
            evaluate_dvectors(&dvectors, 4),
            Err(ProtocolError::TooFewWindows { windows: 1 })
        ));
    }

    #[test]
    fn report_json_round_trips() {
        let mut e0 = Array1::<f64>::zeros(3);
        e0[0] = 1.0;
        let mut e1 = Array1::<f64>::zeros(3);
        e1[1] = 1.0;
        let dvectors = vec![
            ("a".to_string(), vec![e0; 6]),
            ("b".to_string(), vec![e1; 6]),
        ];
        let report = report_from_dvectors(&dvectors, 3, "concat43", "gru").unwrap();
        let json = report.to_json();
        let back = EvalReport::from_json(&json).unwrap();
        assert_eq!(report, back);
        assert!(json.ends_with('\n'));
    }
}
