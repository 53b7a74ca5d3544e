//! Temperature scaling by NLL minimization, plus the fold rotations behind
//! ECE-t, BS-t, and fitted linguistic-expression probabilities.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expressions::ExpressionMap;
use crate::metrics::{self, ConfidencePoint, EceForm};

/// Confidences are clamped into [EPS, 1-EPS] before the NLL; verbalized
/// probabilities of exactly 0.0 or 1.0 are common.
pub const CONFIDENCE_EPS: f64 = 1e-4;
/// Temperature search bounds.
pub const BETA_MIN: f64 = 0.01;
pub const BETA_MAX: f64 = 100.0;

/// Result of a one-dimensional temperature fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureFit {
    pub beta: f64,
    pub nll_at_beta: f64,
    pub fold_index: i64,
    /// Set when every confidence is 0.5 and beta is unidentifiable.
    pub unidentifiable: bool,
}

/// Deterministic assignment of point indices to folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub num_folds: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// Seeded shuffle followed by a contiguous split; fold sizes differ by
    /// at most one.
    pub fn new(num_points: usize, num_folds: usize, seed: u64) -> Self {
        assert!(num_folds >= 1);
        let mut order: Vec<usize> = (0..num_points).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);

        let mut assignments = vec![0usize; num_points];
        let base = num_points / num_folds;
        let extra = num_points % num_folds;
        let mut pos = 0;
        for fold in 0..num_folds {
            let size = base + usize::from(fold < extra);
            for &idx in &order[pos..pos + size] {
                assignments[idx] = fold;
            }
            pos += size;
        }
        Self {
            num_folds,
            assignments,
            seed,
        }
    }

    pub fn indices_in(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|&(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn indices_not_in(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|&(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Binary temperature scaling: p^beta / (p^beta + (1-p)^beta).
///
/// Strictly monotone in `p` for any fixed beta > 0, so confidence rankings
/// (and hence selective AUC) are unchanged by scaling.
pub fn scale_confidence(p: f64, beta: f64) -> f64 {
    let p = p.clamp(CONFIDENCE_EPS, 1.0 - CONFIDENCE_EPS);
    let a = p.powf(beta);
    let b = (1.0 - p).powf(beta);
    a / (a + b)
}

fn nll(points: &[ConfidencePoint], beta: f64) -> f64 {
    points
        .iter()
        .map(|pt| {
            let scaled = scale_confidence(pt.confidence, beta);
            let scaled = scaled.clamp(CONFIDENCE_EPS, 1.0 - CONFIDENCE_EPS);
            if pt.correct {
                -scaled.ln()
            } else {
                -(1.0 - scaled).ln()
            }
        })
        .sum()
}

/// Golden-section search for the minimizer of `f` over [lo, hi].
fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    (lo + hi) / 2.0
}

/// Fit the temperature minimizing NLL of the scaled confidences.
///
/// The search runs over ln(beta) in [ln BETA_MIN, ln BETA_MAX]; separable
/// data pushes beta to the search bound, which is the documented boundary
/// behavior rather than an error.
pub fn fit_temperature(points: &[ConfidencePoint]) -> Result<TemperatureFit> {
    if points.is_empty() {
        return Err(Error::NoData);
    }
    let any_correct = points.iter().any(|p| p.correct);
    let any_wrong = points.iter().any(|p| !p.correct);
    if !any_correct || !any_wrong {
        return Err(Error::DegenerateLabels);
    }
    if points.iter().all(|p| p.confidence == 0.5) {
        return Ok(TemperatureFit {
            beta: 1.0,
            nll_at_beta: nll(points, 1.0),
            fold_index: -1,
            unidentifiable: true,
        });
    }

    let obj = |ln_beta: f64| nll(points, ln_beta.exp());
    let ln_beta = golden_section(obj, BETA_MIN.ln(), BETA_MAX.ln(), 1e-5);
    let beta = ln_beta.exp().clamp(BETA_MIN, BETA_MAX);
    Ok(TemperatureFit {
        beta,
        nll_at_beta: nll(points, beta),
        fold_index: -1,
        unidentifiable: false,
    })
}

/// One skipped rotation in a fold procedure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RotationWarning {
    pub fold_index: usize,
    pub message: String,
}

/// Output of the 5-fold ECE-t / BS-t procedure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossFitMetrics {
    pub ece_t: f64,
    pub bs_t: f64,
    pub temperatures: Vec<TemperatureFit>,
    pub warnings: Vec<RotationWarning>,
}

/// For each fold: fit a temperature on that fold, scale the remaining folds'
/// confidences, and compute ECE and Brier there. ECE-t and BS-t are the
/// averages over the rotations.
pub fn cross_fit_metrics(
    points: &[ConfidencePoint],
    num_folds: usize,
    num_bins: usize,
    seed: u64,
) -> Result<CrossFitMetrics> {
    assert!(num_folds >= 2, "num_folds must be at least 2");
    if points.is_empty() {
        return Err(Error::NoData);
    }
    let plan = FoldPlan::new(points.len(), num_folds, seed);

    let mut eces = Vec::new();
    let mut briers = Vec::new();
    let mut temperatures = Vec::new();
    let mut warnings = Vec::new();
    for fold in 0..num_folds {
        let fit_points: Vec<_> = plan.indices_in(fold).iter().map(|&i| points[i]).collect();
        let mut fit = match fit_temperature(&fit_points) {
            Ok(fit) => fit,
            Err(e) => {
                warnings.push(RotationWarning {
                    fold_index: fold,
                    message: e.to_string(),
                });
                continue;
            }
        };
        fit.fold_index = fold as i64;

        let eval: Vec<_> = plan
            .indices_not_in(fold)
            .iter()
            .map(|&i| ConfidencePoint::new(scale_confidence(points[i].confidence, fit.beta), points[i].correct))
            .collect();
        eces.push(metrics::ece(&eval, num_bins)?);
        briers.push(metrics::brier(&eval)?);
        temperatures.push(fit);
    }

    if eces.is_empty() {
        return Err(Error::AllRotationsFailed(
            warnings
                .iter()
                .map(|w| format!("fold {}: {}", w.fold_index, w.message))
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    Ok(CrossFitMetrics {
        ece_t: eces.iter().sum::<f64>() / eces.len() as f64,
        bs_t: briers.iter().sum::<f64>() / briers.len() as f64,
        temperatures,
        warnings,
    })
}

/// One (expression, correctness) observation from a linguistic-confidence run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpressionRecord {
    pub expression: String,
    pub correct: bool,
}

/// Replace each sufficiently-used expression's probability with its empirical
/// accuracy; rarely-used expressions keep the fallback (human survey) value.
///
/// `min_usage_fraction = None` uses the literal 1/N threshold, i.e. any usage
/// at all qualifies.
pub fn fit_expression_probs(
    records: &[ExpressionRecord],
    expressions: &[String],
    fallback: &ExpressionMap,
    min_usage_fraction: Option<f64>,
) -> Result<ExpressionMap> {
    if records.is_empty() {
        return Err(Error::NoData);
    }
    let n = records.len();
    let fraction = min_usage_fraction.unwrap_or(1.0 / n as f64);
    let min_uses = ((fraction * n as f64).ceil() as usize).max(1);

    let mut used: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for rec in records {
        if !expressions.iter().any(|e| e == &rec.expression) {
            return Err(Error::UnknownExpression(rec.expression.clone()));
        }
        let entry = used.entry(rec.expression.as_str()).or_insert((0, 0));
        entry.0 += 1;
        if rec.correct {
            entry.1 += 1;
        }
    }

    let mut fitted = ExpressionMap::new();
    for expr in expressions {
        let fallback_prob = fallback.get(expr).ok_or_else(|| {
            Error::Config(format!("fallback map missing expression {expr:?}"))
        })?;
        let prob = match used.get(expr.as_str()) {
            Some(&(uses, correct)) if uses >= min_uses => correct as f64 / uses as f64,
            _ => fallback_prob,
        };
        fitted.insert(expr.clone(), prob);
    }
    Ok(fitted)
}

/// Output of the nested 20-rotation procedure for fitted expressions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NestedLingOptMetrics {
    pub ece: f64,
    pub auc: f64,
    pub ece_t: f64,
    pub bs_t: f64,
    pub temperatures: Vec<TemperatureFit>,
    pub warnings: Vec<RotationWarning>,
    /// Number of ordered (temperature-fold, eval-fold) rotations performed.
    pub num_nested_rotations: usize,
}

fn map_records(
    records: &[ExpressionRecord],
    indices: &[usize],
    map: &ExpressionMap,
) -> Result<Vec<ConfidencePoint>> {
    indices
        .iter()
        .map(|&i| {
            let rec = &records[i];
            let p = map
                .get(&rec.expression)
                .ok_or_else(|| Error::UnknownExpression(rec.expression.clone()))?;
            Ok(ConfidencePoint::new(p, rec.correct))
        })
        .collect()
}

/// The two nested fold procedures for fitted expression probabilities.
///
/// ECE/AUC: fit expression probabilities on 4 folds, evaluate on the held-out
/// fold, average over the 5 rotations. ECE-t/BS-t: for every ordered pair of
/// distinct (temperature-fold, eval-fold) — 20 rotations with 5 folds — fit
/// expressions on the other 3 folds, fit a temperature on the temperature
/// fold's mapped confidences, and evaluate on the eval fold.
pub fn nested_ling_opt_metrics(
    records: &[ExpressionRecord],
    expressions: &[String],
    fallback: &ExpressionMap,
    min_usage_fraction: Option<f64>,
    num_folds: usize,
    num_bins: usize,
    seed: u64,
) -> Result<NestedLingOptMetrics> {
    assert!(num_folds >= 3, "nested procedure needs at least 3 folds");
    if records.is_empty() {
        return Err(Error::NoData);
    }
    let plan = FoldPlan::new(records.len(), num_folds, seed);
    let mut warnings = Vec::new();

    // Outer procedure: raw ECE and AUC on each held-out fold.
    let mut eces = Vec::new();
    let mut aucs = Vec::new();
    for eval_fold in 0..num_folds {
        let fit_idx = plan.indices_not_in(eval_fold);
        let fit_records: Vec<_> = fit_idx.iter().map(|&i| records[i].clone()).collect();
        let result = fit_expression_probs(&fit_records, expressions, fallback, min_usage_fraction)
            .and_then(|map| {
                let eval = map_records(records, &plan.indices_in(eval_fold), &map)?;
                Ok((
                    metrics::ece_with_form(&eval, num_bins, EceForm::Squared)?,
                    metrics::selective_auc(&eval)?,
                ))
            });
        match result {
            Ok((e, a)) => {
                eces.push(e);
                aucs.push(a);
            }
            Err(e) => warnings.push(RotationWarning {
                fold_index: eval_fold,
                message: format!("ece/auc rotation: {e}"),
            }),
        }
    }

    // Nested procedure: all ordered (temperature-fold, eval-fold) pairs.
    let mut ece_ts = Vec::new();
    let mut bs_ts = Vec::new();
    let mut temperatures = Vec::new();
    let mut num_nested_rotations = 0;
    for temp_fold in 0..num_folds {
        for eval_fold in 0..num_folds {
            if eval_fold == temp_fold {
                continue;
            }
            num_nested_rotations += 1;
            let expr_idx: Vec<usize> = (0..records.len())
                .filter(|&i| {
                    plan.assignments[i] != temp_fold && plan.assignments[i] != eval_fold
                })
                .collect();
            let expr_records: Vec<_> = expr_idx.iter().map(|&i| records[i].clone()).collect();
            let result = fit_expression_probs(
                &expr_records,
                expressions,
                fallback,
                min_usage_fraction,
            )
            .and_then(|map| {
                let temp_points = map_records(records, &plan.indices_in(temp_fold), &map)?;
                let mut fit = fit_temperature(&temp_points)?;
                fit.fold_index = temp_fold as i64;
                let eval: Vec<_> = map_records(records, &plan.indices_in(eval_fold), &map)?
                    .into_iter()
                    .map(|p| {
                        ConfidencePoint::new(scale_confidence(p.confidence, fit.beta), p.correct)
                    })
                    .collect();
                Ok((metrics::ece(&eval, num_bins)?, metrics::brier(&eval)?, fit))
            });
            match result {
                Ok((e, b, fit)) => {
                    ece_ts.push(e);
                    bs_ts.push(b);
                    temperatures.push(fit);
                }
                Err(e) => warnings.push(RotationWarning {
                    fold_index: temp_fold,
                    message: format!(
                        "nested rotation (temp {temp_fold}, eval {eval_fold}): {e}"
                    ),
                }),
            }
        }
    }

    if eces.is_empty() && ece_ts.is_empty() {
        return Err(Error::AllRotationsFailed(
            warnings
                .iter()
                .map(|w| w.message.clone())
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(NestedLingOptMetrics {
        ece: mean(&eces),
        auc: mean(&aucs),
        ece_t: mean(&ece_ts),
        bs_t: mean(&bs_ts),
        temperatures,
        warnings,
        num_nested_rotations,
    })
}
