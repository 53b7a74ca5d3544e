//! Turns manifest records into calibration scores and renders them as
//! aligned-text tables, CSV, and reliability-diagram data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::elicitation::{ExpressionMapMode, MethodSpec};
use crate::error::{Error, Result};
use crate::expressions::ExpressionSet;
use crate::manifest::ManifestRecord;
use crate::metrics::{self, ConfidencePoint, EceForm, ReliabilityBin};
use crate::scaling::{self, ExpressionRecord};

/// Scoring knobs shared by every method in a run.
#[derive(Debug, Clone)]
pub struct ScoreSettings {
    pub num_bins: usize,
    pub num_folds: usize,
    pub seed: u64,
    pub ece_form: EceForm,
    pub count_judge_failures_as_incorrect: bool,
    pub min_expression_usage_fraction: Option<f64>,
}

/// Calibration scores for one (dataset, model, method) cell. `None` metric
/// fields render as "---": entropy confidences are rank keys, so everything
/// but AUC is undefined for them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodReport {
    pub dataset: String,
    pub model_id: String,
    pub method_name: String,
    pub auc_only: bool,
    pub n_evaluated: usize,
    pub n_parse_failed: usize,
    pub n_judge_failed: usize,
    pub accuracy: Option<f64>,
    pub ece: Option<f64>,
    pub auc: Option<f64>,
    pub ece_t: Option<f64>,
    pub bs_t: Option<f64>,
    pub temperatures: Vec<f64>,
    pub expression_usage: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

/// Confidence/correctness pairs for the records that can be scored.
pub fn score_points(
    records: &[&ManifestRecord],
    count_judge_failures_as_incorrect: bool,
) -> Vec<ConfidencePoint> {
    records
        .iter()
        .filter_map(|r| r.scoreable(count_judge_failures_as_incorrect))
        .map(|(confidence, correct)| ConfidencePoint::new(confidence, correct))
        .collect()
}

pub fn compute_method_report(
    dataset: &str,
    model_id: &str,
    method: &MethodSpec,
    records: &[&ManifestRecord],
    expressions: &ExpressionSet,
    settings: &ScoreSettings,
) -> Result<MethodReport> {
    let n_parse_failed = records
        .iter()
        .filter(|r| r.outcome.elicited.is_err())
        .count();
    let n_judge_failed = records.iter().filter(|r| r.judge_failed).count();

    let mut expression_usage: BTreeMap<String, usize> = BTreeMap::new();
    for record in records {
        if let Ok(el) = &record.outcome.elicited {
            if let Some(expr) = &el.confidence_expression {
                *expression_usage.entry(expr.clone()).or_insert(0) += 1;
            }
        }
    }

    let mut report = MethodReport {
        dataset: dataset.to_string(),
        model_id: model_id.to_string(),
        method_name: method.display_name(),
        auc_only: method.auc_only(),
        n_evaluated: 0,
        n_parse_failed,
        n_judge_failed,
        accuracy: None,
        ece: None,
        auc: None,
        ece_t: None,
        bs_t: None,
        temperatures: Vec::new(),
        expression_usage,
        warnings: Vec::new(),
    };

    if let MethodSpec::Ling1s {
        expression_map_mode: ExpressionMapMode::Optimized,
    } = method
    {
        let mut expr_records = Vec::new();
        for record in records {
            let Some((_, correct)) =
                record.scoreable(settings.count_judge_failures_as_incorrect)
            else {
                continue;
            };
            let Ok(el) = &record.outcome.elicited else {
                continue;
            };
            let Some(expression) = &el.confidence_expression else {
                continue;
            };
            expr_records.push(ExpressionRecord {
                expression: expression.clone(),
                correct,
            });
        }
        report.n_evaluated = expr_records.len();
        if expr_records.is_empty() {
            report.warnings.push("no scoreable records".into());
            return Ok(report);
        }
        report.accuracy = Some(
            expr_records.iter().filter(|r| r.correct).count() as f64 / expr_records.len() as f64,
        );
        match scaling::nested_ling_opt_metrics(
            &expr_records,
            &expressions.expressions,
            &expressions.probabilities,
            settings.min_expression_usage_fraction,
            settings.num_folds,
            settings.num_bins,
            settings.seed,
        ) {
            Ok(nested) => {
                report.ece = Some(nested.ece);
                report.auc = Some(nested.auc);
                report.ece_t = Some(nested.ece_t);
                report.bs_t = Some(nested.bs_t);
                report.temperatures = nested.temperatures.iter().map(|t| t.beta).collect();
                report
                    .warnings
                    .extend(nested.warnings.into_iter().map(|w| w.message));
            }
            Err(e) => report.warnings.push(format!("nested scoring failed: {e}")),
        }
        return Ok(report);
    }

    let points = score_points(records, settings.count_judge_failures_as_incorrect);
    report.n_evaluated = points.len();
    if points.is_empty() {
        report.warnings.push("no scoreable records".into());
        return Ok(report);
    }
    report.accuracy = Some(
        points.iter().filter(|p| p.correct).count() as f64 / points.len() as f64,
    );
    report.auc = Some(metrics::selective_auc(&points)?);
    if method.auc_only() {
        return Ok(report);
    }

    report.ece = Some(metrics::ece_with_form(
        &points,
        settings.num_bins,
        settings.ece_form,
    )?);
    match scaling::cross_fit_metrics(&points, settings.num_folds, settings.num_bins, settings.seed)
    {
        Ok(cross) => {
            report.ece_t = Some(cross.ece_t);
            report.bs_t = Some(cross.bs_t);
            report.temperatures = cross.temperatures.iter().map(|t| t.beta).collect();
            report
                .warnings
                .extend(cross.warnings.into_iter().map(|w| w.message));
        }
        Err(e) => report
            .warnings
            .push(format!("temperature scaling failed: {e}")),
    }
    Ok(report)
}

fn cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.3}"),
        None => "---".to_string(),
    }
}

/// Aligned-text table, one block per (dataset, model) in input order.
pub fn render_text(reports: &[MethodReport]) -> String {
    let mut out = String::new();
    let mut groups: Vec<(String, String)> = Vec::new();
    for r in reports {
        let key = (r.dataset.clone(), r.model_id.clone());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for (dataset, model_id) in groups {
        let rows: Vec<&MethodReport> = reports
            .iter()
            .filter(|r| r.dataset == dataset && r.model_id == model_id)
            .collect();
        out.push_str(&format!("== {dataset} / {model_id} ==\n"));
        let header = [
            "Method", "Acc", "ECE", "AUC", "ECE-t", "BS-t", "N", "Failed",
        ];
        let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &rows {
            table.push(vec![
                r.method_name.clone(),
                cell(r.accuracy),
                cell(r.ece),
                cell(r.auc),
                cell(r.ece_t),
                cell(r.bs_t),
                r.n_evaluated.to_string(),
                r.n_parse_failed.to_string(),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| table.iter().map(|row| row[c].len()).max().unwrap_or(0))
            .collect();
        for row in &table {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, v)| {
                    if c == 0 {
                        format!("{v:<width$}", width = widths[c])
                    } else {
                        format!("{v:>width$}", width = widths[c])
                    }
                })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn render_csv(reports: &[MethodReport]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record([
        "dataset",
        "model",
        "method",
        "accuracy",
        "ece",
        "auc",
        "ece_t",
        "bs_t",
        "n_evaluated",
        "n_parse_failed",
        "n_judge_failed",
    ])?;
    for r in reports {
        writer.write_record([
            r.dataset.as_str(),
            r.model_id.as_str(),
            r.method_name.as_str(),
            &cell(r.accuracy),
            &cell(r.ece),
            &cell(r.auc),
            &cell(r.ece_t),
            &cell(r.bs_t),
            &r.n_evaluated.to_string(),
            &r.n_parse_failed.to_string(),
            &r.n_judge_failed.to_string(),
        ])?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagramRow {
    pub dataset: String,
    pub model: String,
    pub method: String,
    pub bin_lower: f64,
    pub bin_upper: f64,
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub mean_accuracy: Option<f64>,
}

/// Reliability-diagram data for one method, one JSON object per bin.
pub fn diagram_rows(
    dataset: &str,
    model: &str,
    method: &str,
    points: &[ConfidencePoint],
    num_bins: usize,
) -> Result<Vec<DiagramRow>> {
    let bins: Vec<ReliabilityBin> = metrics::bin_points(points, num_bins)?;
    Ok(bins
        .into_iter()
        .map(|b| DiagramRow {
            dataset: dataset.to_string(),
            model: model.to_string(),
            method: method.to_string(),
            bin_lower: b.lower,
            bin_upper: b.upper,
            count: b.count,
            mean_confidence: b.mean_confidence,
            mean_accuracy: b.mean_accuracy,
        })
        .collect())
}

pub fn render_diagram_jsonl(rows: &[DiagramRow]) -> Result<String> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    Ok(out)
}

/// "expression<TAB>count" lines, most used first, ties alphabetical.
pub fn render_usage_histogram(usage: &BTreeMap<String, usize>) -> String {
    let mut entries: Vec<(&String, &usize)> = usage.iter().collect();
    entries.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
    let mut out = String::new();
    for (expr, count) in entries {
        out.push_str(&format!("{expr}\t{count}\n"));
    }
    out
}
