//! Equal error rate from target and impostor score lists.
//!
//! Sweeping a threshold over the sorted unique scores (accept when
//! score >= threshold) traces the false-accept rate down from 1 and
//! the false-reject rate up from 0. The crossing of the two staircase
//! curves is found exactly: at a candidate threshold where they meet,
//! that shared rate is returned; otherwise the crossing falls between
//! two adjacent candidates and linear interpolation on both rates
//! gives the point where they agree. The result depends only on the
//! ordering of scores, so any strictly increasing rescaling of the
//! scores leaves it unchanged, and swapping the two lists maps an
//! equal error rate e to exactly 1 - e.

use super::ProtocolError;

/// Rates at one threshold: fraction of impostors at or above it and
/// fraction of targets below it.
fn rates(threshold: f64, targets: &[f64], impostors: &[f64]) -> (f64, f64) {
    let imp_below = impostors.partition_point(|&s| s < threshold);
    let far = (impostors.len() - imp_below) as f64 / impostors.len() as f64;
    let targ_below = targets.partition_point(|&s| s < threshold);
    let frr = targ_below as f64 / targets.len() as f64;
    (far, frr)
}

/// Equal error rate of a verification trial set.
pub fn eer(target_scores: &[f64], impostor_scores: &[f64]) -> Result<f64, ProtocolError> {
    if target_scores.is_empty() || impostor_scores.is_empty() {
        return Err(ProtocolError::EmptyScores);
    }
    if target_scores
        .iter()
        .chain(impostor_scores.iter())
        .any(|s| !s.is_finite())
    {
        return Err(ProtocolError::NonFiniteScore);
    }
    let mut targets = target_scores.to_vec();
    let mut impostors = impostor_scores.to_vec();
    targets.sort_by(|a, b| a.partial_cmp(b).unwrap());
    impostors.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut candidates: Vec<f64> = targets.iter().chain(impostors.iter()).cloned().collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();

    // At the lowest candidate FAR is 1 and FRR is 0, so the difference
    // starts positive; past the top score it is -1. Walk to the first
    // non-positive difference.
    let mut prev = (1.0, 0.0);
    for i in 0..=candidates.len() {
        let (far, frr) = if i < candidates.len() {
            rates(candidates[i], &targets, &impostors)
        } else {
            (0.0, 1.0)
        };
        let d = far - frr;
        if d > 0.0 {
            prev = (far, frr);
            continue;
        }
        if d == 0.0 {
            return Ok(far);
        }
        let (f0, r0) = prev;
        let (f1, r1) = (far, frr);
        let span = (r1 - r0) - (f1 - f0);
        let s = (f0 - r0) / span;
        return Ok(f0 + s * (f1 - f0));
    }
    unreachable!("difference reaches -1 at the virtual top threshold");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_scores_have_zero_eer() {
        let e = eer(&[0.8, 0.9, 0.95], &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn identical_scores_are_coin_flips() {
        let e = eer(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert!((e - 0.5).abs() < 1e-12);
    }

    #[test]
    fn interleaved_scores_are_coin_flips() {
        let e = eer(&[1.0, 3.0], &[2.0, 4.0]).unwrap();
        assert!((e - 0.5).abs() < 1e-12);
    }

    #[test]
    fn inverted_scores_have_unit_eer() {
        let e = eer(&[0.1, 0.2], &[0.8, 0.9]).unwrap();
        assert_eq!(e, 1.0);
    }

    #[test]
    fn empty_sides_are_rejected() {
        assert!(matches!(eer(&[], &[0.1]), Err(ProtocolError::EmptyScores)));
        assert!(matches!(eer(&[0.1], &[]), Err(ProtocolError::EmptyScores)));
    }

    #[test]
    fn non_finite_scores_are_rejected() {
        assert!(matches!(
            eer(&[0.5, f64::NAN], &[0.1]),
            Err(ProtocolError::NonFiniteScore)
        ));
        assert!(matches!(
            eer(&[0.5], &[f64::INFINITY]),
            Err(ProtocolError::NonFiniteScore)
        ));
    }

    #[test]
    fn single_overlap_interpolates() {
        // Candidates 0.5 and 0.6 bracket the crossing: rates move from
        // (FAR 1/2, FRR 1/3) to (0, 1/3), meeting a third of the way.
        let e = eer(&[0.4, 0.6, 0.7], &[0.5, 0.3]).unwrap();
        assert!((e - 1.0 / 3.0).abs() < 1e-12);
    }
}
