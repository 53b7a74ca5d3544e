//! Calibration and selective-classification metrics over (confidence, correctness) pairs.
//!
//! All functions here are pure and deterministic; they share no state and are
//! safe to call concurrently.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One prediction's confidence paired with whether it was correct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidencePoint {
    pub confidence: f64,
    pub correct: bool,
}

impl ConfidencePoint {
    pub fn new(confidence: f64, correct: bool) -> Self {
        Self {
            confidence,
            correct,
        }
    }
}

/// A single equal-width confidence bin with its aggregate statistics.
///
/// `mean_confidence` and `mean_accuracy` are `None` exactly when the bin is
/// empty; they are never reported as 0/0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub mean_accuracy: Option<f64>,
}

/// How the per-bin gap enters the ECE sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EceForm {
    /// Squared gap per bin (the default, and the form reported everywhere).
    #[default]
    Squared,
    /// Absolute gap per bin, kept for cross-tool comparison only.
    Absolute,
}

fn validate(points: &[ConfidencePoint]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::NoData);
    }
    for (i, p) in points.iter().enumerate() {
        if !p.confidence.is_finite() || !(0.0..=1.0).contains(&p.confidence) {
            return Err(Error::InvalidConfidence {
                index: i,
                value: p.confidence,
            });
        }
    }
    Ok(())
}

/// Index of the bin a confidence falls in. A value exactly on an interior
/// edge belongs to the higher bin; 1.0 belongs to the top bin.
fn bin_index(confidence: f64, num_bins: usize) -> usize {
    let idx = (confidence * num_bins as f64).floor() as usize;
    idx.min(num_bins - 1)
}

/// Partition points into `num_bins` equal-width bins over [0,1].
///
/// Empty bins are emitted with count 0 so diagram exports always contain
/// exactly `num_bins` records.
pub fn bin_points(points: &[ConfidencePoint], num_bins: usize) -> Result<Vec<ReliabilityBin>> {
    assert!(num_bins >= 1, "num_bins must be at least 1");
    validate(points)?;

    let mut counts = vec![0usize; num_bins];
    let mut conf_sums = vec![0.0f64; num_bins];
    let mut acc_sums = vec![0.0f64; num_bins];
    for p in points {
        let b = bin_index(p.confidence, num_bins);
        counts[b] += 1;
        conf_sums[b] += p.confidence;
        acc_sums[b] += if p.correct { 1.0 } else { 0.0 };
    }

    let width = 1.0 / num_bins as f64;
    Ok((0..num_bins)
        .map(|b| {
            let (mean_confidence, mean_accuracy) = if counts[b] > 0 {
                let n = counts[b] as f64;
                (Some(conf_sums[b] / n), Some(acc_sums[b] / n))
            } else {
                (None, None)
            };
            ReliabilityBin {
                lower: b as f64 * width,
                upper: if b + 1 == num_bins {
                    1.0
                } else {
                    (b + 1) as f64 * width
                },
                count: counts[b],
                mean_confidence,
                mean_accuracy,
            }
        })
        .collect())
}

/// Expected calibration error: bin-count-weighted gap between mean accuracy
/// and mean confidence per bin. Empty bins carry weight zero.
pub fn ece_with_form(
    points: &[ConfidencePoint],
    num_bins: usize,
    form: EceForm,
) -> Result<f64> {
    let bins = bin_points(points, num_bins)?;
    let n = points.len() as f64;
    Ok(bins
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| {
            let gap = b.mean_accuracy.unwrap() - b.mean_confidence.unwrap();
            let err = match form {
                EceForm::Squared => gap * gap,
                EceForm::Absolute => gap.abs(),
            };
            (b.count as f64 / n) * err
        })
        .sum())
}

/// ECE in the default squared-gap form.
pub fn ece(points: &[ConfidencePoint], num_bins: usize) -> Result<f64> {
    ece_with_form(points, num_bins, EceForm::Squared)
}

/// Brier score: mean squared error between confidence and the 0/1 correctness label.
pub fn brier(points: &[ConfidencePoint]) -> Result<f64> {
    validate(points)?;
    let n = points.len() as f64;
    Ok(points
        .iter()
        .map(|p| {
            let label = if p.correct { 1.0 } else { 0.0 };
            (p.confidence - label).powi(2)
        })
        .sum::<f64>()
        / n)
}

/// Area under the selective accuracy-coverage curve.
///
/// Points are ranked by confidence descending (stable sort, so ties keep
/// input order); selective accuracy at coverage k/N is the accuracy of the
/// top-k points, and the AUC is the mean over the N coverage levels.
pub fn selective_auc(points: &[ConfidencePoint]) -> Result<f64> {
    validate(points)?;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[b]
            .confidence
            .partial_cmp(&points[a].confidence)
            .unwrap()
    });

    let n = points.len();
    let mut correct_so_far = 0usize;
    let mut auc_sum = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if points[i].correct {
            correct_so_far += 1;
        }
        auc_sum += correct_so_far as f64 / (k + 1) as f64;
    }
    Ok(auc_sum / n as f64)
}

/// Shannon entropy of a cluster-size histogram, in nats.
///
/// Lower entropy means higher confidence; when ranking for `selective_auc`
/// the negated entropy is used as the confidence key. Entropy is not a
/// probability and never enters ECE or Brier.
pub fn entropy_score(cluster_counts: &[usize]) -> Result<f64> {
    let total: usize = cluster_counts.iter().sum();
    if total == 0 {
        return Err(Error::NoSamples);
    }
    let n = total as f64;
    Ok(cluster_counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(c: f64, ok: bool) -> ConfidencePoint {
        ConfidencePoint::new(c, ok)
    }

    #[test]
    fn bin_single_point() {
        let bins = bin_points(&[pt(1.0, true)], 10).unwrap();
        assert_eq!(bins.len(), 10);
        let top = &bins[9];
        assert_eq!(top.count, 1);
        assert_eq!(top.mean_confidence, Some(1.0));
        assert_eq!(top.mean_accuracy, Some(1.0));
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 1);
    }

    #[test]
    fn bin_symmetric_split() {
        let bins = bin_points(&[pt(0.05, false), pt(0.95, true)], 2).unwrap();
        assert_eq!(bins[0].count, 1);
        assert_eq!(bins[0].mean_accuracy, Some(0.0));
        assert_eq!(bins[1].count, 1);
        assert_eq!(bins[1].mean_accuracy, Some(1.0));
    }

    #[test]
    fn bin_boundary_goes_to_higher_bin() {
        let bins = bin_points(&[pt(0.5, true)], 2).unwrap();
        assert_eq!(bins[0].count, 0);
        assert_eq!(bins[1].count, 1);
        assert_eq!(bins[0].mean_confidence, None);
    }

    #[test]
    fn bin_empty_input_errors() {
        assert!(matches!(bin_points(&[], 10), Err(Error::NoData)));
    }

    #[test]
    fn bin_invalid_confidence_names_index() {
        let err = bin_points(&[pt(0.5, true), pt(1.5, false)], 10).unwrap_err();
        match err {
            Error::InvalidConfidence { index, .. } => assert_eq!(index, 1),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn ece_perfect_confidence() {
        let points = vec![pt(1.0, true); 5];
        assert_eq!(ece(&points, 10).unwrap(), 0.0);
    }

    #[test]
    fn ece_two_bin_hand_computation() {
        // Bin [0.8,0.9): two points, acc 0.5, conf 0.8. Bin [0.6,0.7): acc 1.0, conf 0.6.
        let points = vec![pt(0.8, true), pt(0.8, false), pt(0.6, true)];
        let expected = (2.0 / 3.0) * (0.5f64 - 0.8).powi(2) + (1.0 / 3.0) * (1.0f64 - 0.6).powi(2);
        assert!((ece(&points, 10).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.11333333333333334).abs() < 1e-12);
    }

    #[test]
    fn ece_absolute_form() {
        let points = vec![pt(0.8, true), pt(0.8, false), pt(0.6, true)];
        let expected = (2.0 / 3.0) * 0.3 + (1.0 / 3.0) * 0.4;
        let got = ece_with_form(&points, 10, EceForm::Absolute).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier(&[pt(1.0, true)]).unwrap(), 0.0);
        let b = brier(&[pt(0.8, true), pt(0.4, false)]).unwrap();
        assert!((b - 0.10).abs() < 1e-15);
        let b = brier(&[pt(0.5, true), pt(0.5, false)]).unwrap();
        assert!((b - 0.25).abs() < 1e-15);
    }

    #[test]
    fn selective_auc_examples() {
        let a = selective_auc(&[pt(0.9, true), pt(0.8, true), pt(0.1, false)]).unwrap();
        assert!((a - (1.0 + 1.0 + 2.0 / 3.0) / 3.0).abs() < 1e-15);

        let all_correct = vec![pt(0.3, true), pt(0.9, true), pt(0.5, true)];
        assert_eq!(selective_auc(&all_correct).unwrap(), 1.0);

        let anti = selective_auc(&[pt(0.9, false), pt(0.1, true)]).unwrap();
        assert!((anti - 0.25).abs() < 1e-15);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy_score(&[10]).unwrap(), 0.0);
        assert!((entropy_score(&[5, 5]).unwrap() - 2.0f64.ln()).abs() < 1e-12);
        let h = entropy_score(&[7, 3]).unwrap();
        let expected = -0.7f64 * 0.7f64.ln() - 0.3f64 * 0.3f64.ln();
        assert!((h - expected).abs() < 1e-12);
        assert!(matches!(entropy_score(&[]), Err(Error::NoSamples)));
    }

    #[test]
    fn calibrated_draw_bins_agree() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let points: Vec<_> = (0..1000)
            .map(|_| {
                let u: f64 = rng.gen();
                pt(u, rng.gen::<f64>() < u)
            })
            .collect();
        for b in bin_points(&points, 10).unwrap() {
            if b.count > 0 {
                let gap = (b.mean_accuracy.unwrap() - b.mean_confidence.unwrap()).abs();
                assert!(gap <= 0.1, "bin [{},{}] gap {}", b.lower, b.upper, gap);
            }
        }
    }

    #[test]
    fn shared_confidence_brier_decomposition() {
        let c = 0.7;
        let points: Vec<_> = (0..10).map(|i| pt(c, i < 6)).collect();
        let a = 0.6;
        let expected = a * (1.0f64 - c).powi(2) + (1.0 - a) * c * c;
        assert!((brier(&points).unwrap() - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn counts_sum_to_n(confs in proptest::collection::vec(0.0f64..=1.0, 1..200), bins in 1usize..20) {
            let points: Vec<_> = confs.iter().map(|&c| pt(c, c > 0.5)).collect();
            let binned = bin_points(&points, bins).unwrap();
            prop_assert_eq!(binned.iter().map(|b| b.count).sum::<usize>(), points.len());
        }

        #[test]
        fn metrics_in_unit_interval(confs in proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 1..100)) {
            let points: Vec<_> = confs.iter().map(|&(c, ok)| pt(c, ok)).collect();
            let e = ece(&points, 10).unwrap();
            let b = brier(&points).unwrap();
            let a = selective_auc(&points).unwrap();
            prop_assert!((0.0..=1.0).contains(&e));
            prop_assert!((0.0..=1.0).contains(&b));
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn permutation_invariance(confs in proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 2..50)) {
            let points: Vec<_> = confs.iter().map(|&(c, ok)| pt(c, ok)).collect();
            let mut reversed = points.clone();
            reversed.reverse();
            prop_assert!((ece(&points, 10).unwrap() - ece(&reversed, 10).unwrap()).abs() < 1e-12);
            prop_assert!((brier(&points).unwrap() - brier(&reversed).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn aligned_ordering_upper_bounds_auc(n_correct in 1usize..10, n_wrong in 1usize..10, seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let n = n_correct + n_wrong;
            // distinct confidences so ties play no role
            let confs: Vec<f64> = (0..n).map(|i| 1.0 - (i as f64 + 0.5) / (n as f64 + 1.0)).collect();
            let mut labels: Vec<bool> = (0..n).map(|i| i < n_correct).collect();
            let aligned: Vec<_> = confs.iter().zip(&labels).map(|(&c, &ok)| pt(c, ok)).collect();
            let best = selective_auc(&aligned).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            labels.shuffle(&mut rng);
            let shuffled: Vec<_> = confs.iter().zip(&labels).map(|(&c, &ok)| pt(c, ok)).collect();
            prop_assert!(selective_auc(&shuffled).unwrap() <= best + 1e-12);
        }
    }
}
