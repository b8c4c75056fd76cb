//! MFCC against the direct-DFT reference.

mod common;

use voxeeg::features::{mfcc13, mfcc_frame_count, FeatureError, MFCC_FRAME_HOP, MFCC_FRAME_LEN};

#[test]
fn library_matches_naive_dft_route() {
    let mut signals: Vec<Vec<f64>> = vec![
        common::lcg_signal(4800, 1),
        (0..4000)
            .map(|n| (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 16_000.0).sin())
            .collect(),
    ];
    // A tone buried in deterministic noise.
    let mix: Vec<f64> = common::lcg_signal(3200, 7)
        .iter()
        .enumerate()
        .map(|(n, &x)| {
            0.3 * x + 0.7 * (2.0 * std::f64::consts::PI * 1500.0 * n as f64 / 16_000.0).sin()
        })
        .collect();
    signals.push(mix);

    for (si, signal) in signals.iter().enumerate() {
        let ours = mfcc13(signal).unwrap();
        let reference = common::naive_mfcc(signal);
        assert_eq!(ours.dim(), reference.dim());
        let mut worst = 0.0_f64;
        for (a, b) in ours.iter().zip(reference.iter()) {
            worst = worst.max((a - b).abs());
        }
        assert!(worst < 1e-6, "signal {si}: max deviation {worst}");
    }
}

#[test]
fn shape_contract_over_random_lengths() {
    let mut state = 0x9e3779b97f4a7c15_u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    for _ in 0..50 {
        let len = MFCC_FRAME_LEN + (next() as usize % 15_600);
        let signal = common::lcg_signal(len, next());
        let frames = mfcc13(&signal).unwrap();
        let expect = 1 + (len - MFCC_FRAME_LEN) / MFCC_FRAME_HOP;
        assert_eq!(frames.dim(), (expect, 13));
        assert_eq!(mfcc_frame_count(len), Some(expect));
        assert!(frames.iter().all(|v| v.is_finite()));
    }
    for len in [0, 1, MFCC_FRAME_LEN - 1] {
        assert!(matches!(
            mfcc13(&vec![0.0; len]),
            Err(FeatureError::TooShort(_))
        ));
        assert_eq!(mfcc_frame_count(len), None);
    }
}
