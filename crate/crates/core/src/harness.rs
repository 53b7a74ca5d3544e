//! Run orchestration: wires config, datasets, model clients, the judge, the
//! manifest, and scoring into the `run` / `score` / `report` / `dry-run`
//! operations the CLI exposes.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::client::{
    HttpProvider, MockProvider, ModelClient, Provider, RateLimiter, RetryPolicy, SystemClock,
};
use crate::config::{DatasetConfig, RunConfig};
use crate::datasets::{self, Question};
use crate::elicitation::Elicitor;
use crate::equivalence::EquivalenceChecker;
use crate::error::{Error, Result};
use crate::expressions::ExpressionSet;
use crate::manifest::{Manifest, ManifestRecord, RecordKey};
use crate::metrics::EceForm;
use crate::report::{self, MethodReport, ScoreSettings};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub executed: usize,
    pub skipped: usize,
    pub parse_failures: usize,
    pub judge_failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DryRunRow {
    pub dataset: String,
    pub model_id: String,
    pub method_name: String,
    pub questions_remaining: usize,
    /// Subject-model requests only. Judge traffic depends on how varied the
    /// sampled answers turn out to be, so it is not projected.
    pub model_requests: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DryRunReport {
    pub rows: Vec<DryRunRow>,
    pub total_model_requests: usize,
}

pub struct Harness {
    config: RunConfig,
    clients: BTreeMap<String, Arc<ModelClient>>,
}

impl Harness {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let mut clients = BTreeMap::new();
        for (model_id, provider_config) in &config.models {
            let provider: Arc<dyn Provider> = match provider_config.backend.as_str() {
                "mock" => {
                    let path = provider_config
                        .fixtures_path
                        .as_ref()
                        .expect("validated: mock has fixtures_path");
                    Arc::new(MockProvider::from_file(path, None)?)
                }
                _ => Arc::new(HttpProvider::new(
                    model_id.clone(),
                    provider_config
                        .base_url
                        .clone()
                        .expect("validated: http has base_url"),
                    provider_config
                        .api_key_env
                        .as_ref()
                        .expect("validated: http has api_key_env"),
                    provider_config.timeout_secs,
                )?),
            };
            let limiter = provider_config
                .requests_per_minute
                .map(|rpm| RateLimiter::new(rpm as usize, Arc::new(SystemClock)));
            clients.insert(
                model_id.clone(),
                Arc::new(ModelClient::with_parts(
                    provider,
                    limiter,
                    RetryPolicy::default(),
                    Arc::new(SystemClock),
                )),
            );
        }
        Ok(Self { config, clients })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.config.output_dir.join("manifest.jsonl")
    }

    fn judge_cache_path(&self) -> PathBuf {
        self.config.output_dir.join("judge_cache.jsonl")
    }

    fn expressions(&self) -> Result<ExpressionSet> {
        match &self.config.expression_map {
            Some(path) => ExpressionSet::load(path),
            None => Ok(ExpressionSet::default()),
        }
    }

    /// Evaluation questions for one dataset: the whole file, or a seeded
    /// sample when `eval_count` is set.
    pub fn eval_questions(&self, dataset: &DatasetConfig) -> Result<Vec<Question>> {
        let questions = datasets::load(&dataset.path, datasets::DatasetFormat::Canonical)?;
        match dataset.eval_count {
            Some(count) => {
                let seed = self.config.derive_seed(&format!("sample:{}", dataset.name));
                datasets::sample_eval_set(&questions, count, seed)
            }
            None => Ok(questions),
        }
    }

    fn judge_for(&self, dataset: &DatasetConfig) -> Result<EquivalenceChecker> {
        let client = self
            .clients
            .get(&dataset.judge_model)
            .expect("validated: judge model exists")
            .clone();
        EquivalenceChecker::new(
            client,
            dataset.judge_model.clone(),
            Some(self.judge_cache_path()),
        )
    }

    /// Execute every (dataset, model, method, question) cell that the
    /// manifest does not already contain. Interrupt-safe: each record is
    /// flushed as soon as it is graded, so rerunning resumes where the last
    /// run stopped and touches the model only for missing cells.
    pub fn run(&self) -> Result<RunStats> {
        std::fs::create_dir_all(&self.config.output_dir)?;
        let mut manifest = Manifest::open(&self.manifest_path())?;
        let expressions = self.expressions()?;
        let mut stats = RunStats::default();

        for dataset in &self.config.datasets {
            let questions = self.eval_questions(dataset)?;
            let judge = self.judge_for(dataset)?;
            for model_id in self.config.eval_model_ids() {
                let provider_config = &self.config.models[model_id];
                let (temperature, top_p) = provider_config.sampling();
                let client = &self.clients[model_id];
                let elicitor = Elicitor {
                    client,
                    model_id: model_id.to_string(),
                    temperature,
                    top_p,
                    max_tokens: provider_config.max_tokens,
                    max_tokens_cot: provider_config.max_tokens_cot,
                    expressions: &expressions,
                    human_map: &expressions.probabilities,
                };
                for method in &self.config.methods {
                    let fingerprint = method.fingerprint();
                    for question in &questions {
                        let key = RecordKey {
                            question_id: question.id.clone(),
                            method_fingerprint: fingerprint.clone(),
                            model_id: model_id.to_string(),
                        };
                        if manifest.contains(&key) {
                            stats.skipped += 1;
                            continue;
                        }
                        let outcome = elicitor.run(question, method, &judge)?;
                        let (correct, judge_failed) = match &outcome.elicited {
                            Ok(elicited) => match judge.check(
                                &question.text,
                                &question.gold,
                                &question.aliases,
                                &elicited.answer,
                            ) {
                                Ok(verdict) => (Some(verdict.equivalent), false),
                                Err(_) => (None, true),
                            },
                            Err(_) => {
                                stats.parse_failures += 1;
                                (None, false)
                            }
                        };
                        if judge_failed {
                            stats.judge_failures += 1;
                        }
                        manifest.append(ManifestRecord {
                            key,
                            dataset: dataset.name.clone(),
                            method: method.clone(),
                            method_name: method.display_name(),
                            outcome,
                            correct,
                            judge_failed,
                        })?;
                        stats.executed += 1;
                    }
                }
            }
        }
        Ok(stats)
    }

    fn score_settings(&self) -> ScoreSettings {
        ScoreSettings {
            num_bins: self.config.num_bins,
            num_folds: self.config.num_folds,
            seed: self.config.derive_seed("folds"),
            ece_form: if self.config.absolute_ece {
                EceForm::Absolute
            } else {
                EceForm::Squared
            },
            count_judge_failures_as_incorrect: self.config.count_judge_failures_as_incorrect,
            min_expression_usage_fraction: self.config.min_expression_usage_fraction,
        }
    }

    /// Score everything in the manifest, grouped by (dataset, model, method)
    /// in config order.
    pub fn score(&self) -> Result<Vec<MethodReport>> {
        let manifest = Manifest::load(&self.manifest_path())?;
        let expressions = self.expressions()?;
        let settings = self.score_settings();
        let mut reports = Vec::new();
        for dataset in &self.config.datasets {
            for model_id in self.config.eval_model_ids() {
                for method in &self.config.methods {
                    let fingerprint = method.fingerprint();
                    let records: Vec<&ManifestRecord> = manifest
                        .records_for(&fingerprint, model_id)
                        .into_iter()
                        .filter(|r| r.dataset == dataset.name)
                        .collect();
                    if records.is_empty() {
                        continue;
                    }
                    reports.push(report::compute_method_report(
                        &dataset.name,
                        model_id,
                        method,
                        &records,
                        &expressions,
                        &settings,
                    )?);
                }
            }
        }
        if reports.is_empty() {
            return Err(Error::NoData);
        }
        Ok(reports)
    }

    /// Write the text and CSV tables plus per-method expression-usage
    /// histograms. Returns the paths written.
    pub fn write_reports(&self, reports: &[MethodReport]) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(&self.config.output_dir)?;
        let mut written = Vec::new();

        let text_path = self.config.output_dir.join("report.txt");
        std::fs::write(&text_path, report::render_text(reports))?;
        written.push(text_path);

        let csv_path = self.config.output_dir.join("report.csv");
        std::fs::write(&csv_path, report::render_csv(reports)?)?;
        written.push(csv_path);

        for r in reports {
            if r.expression_usage.is_empty() {
                continue;
            }
            let slug: String = r
                .method_name
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
                .collect();
            let path = self
                .config
                .output_dir
                .join(format!("usage-{}-{}-{slug}.tsv", r.dataset, r.model_id));
            std::fs::write(&path, report::render_usage_histogram(&r.expression_usage))?;
            written.push(path);
        }
        Ok(written)
    }

    /// Reliability-diagram data for every scoreable (dataset, model, method)
    /// cell, written as one JSONL file.
    pub fn write_diagrams(&self) -> Result<PathBuf> {
        let manifest = Manifest::load(&self.manifest_path())?;
        let settings = self.score_settings();
        let mut rows = Vec::new();
        for dataset in &self.config.datasets {
            for model_id in self.config.eval_model_ids() {
                for method in &self.config.methods {
                    if method.auc_only() {
                        continue;
                    }
                    let fingerprint = method.fingerprint();
                    let records: Vec<&ManifestRecord> = manifest
                        .records_for(&fingerprint, model_id)
                        .into_iter()
                        .filter(|r| r.dataset == dataset.name)
                        .collect();
                    let points = report::score_points(
                        &records,
                        settings.count_judge_failures_as_incorrect,
                    );
                    if points.is_empty() {
                        continue;
                    }
                    rows.extend(report::diagram_rows(
                        &dataset.name,
                        model_id,
                        &method.display_name(),
                        &points,
                        settings.num_bins,
                    )?);
                }
            }
        }
        std::fs::create_dir_all(&self.config.output_dir)?;
        let path = self.config.output_dir.join("reliability.jsonl");
        std::fs::write(&path, report::render_diagram_jsonl(&rows)?)?;
        Ok(path)
    }

    /// Project how many subject-model requests a `run` would make, honoring
    /// whatever the manifest already contains. Makes no model calls.
    pub fn dry_run(&self) -> Result<DryRunReport> {
        let manifest_path = self.manifest_path();
        let manifest = if manifest_path.exists() {
            Some(Manifest::load(&manifest_path)?)
        } else {
            None
        };
        let mut rows = Vec::new();
        let mut total = 0usize;
        for dataset in &self.config.datasets {
            let questions = self.eval_questions(dataset)?;
            for model_id in self.config.eval_model_ids() {
                for method in &self.config.methods {
                    let fingerprint = method.fingerprint();
                    let remaining = questions
                        .iter()
                        .filter(|q| {
                            manifest.as_ref().is_none_or(|m| {
                                !m.contains(&RecordKey {
                                    question_id: q.id.clone(),
                                    method_fingerprint: fingerprint.clone(),
                                    model_id: model_id.to_string(),
                                })
                            })
                        })
                        .count();
                    let requests = remaining * method.requests_per_question();
                    total += requests;
                    rows.push(DryRunRow {
                        dataset: dataset.name.clone(),
                        model_id: model_id.to_string(),
                        method_name: method.display_name(),
                        questions_remaining: remaining,
                        model_requests: requests,
                    });
                }
            }
        }
        Ok(DryRunReport {
            rows,
            total_model_requests: total,
        })
    }
}

pub fn render_dry_run(report: &DryRunReport) -> String {
    let mut out = String::new();
    for row in &report.rows {
        out.push_str(&format!(
            "{} / {} / {}: {} questions remaining, {} model requests\n",
            row.dataset, row.model_id, row.method_name, row.questions_remaining, row.model_requests
        ));
    }
    out.push_str(&format!(
        "total model requests: {} (judge requests not projected)\n",
        report.total_model_requests
    ));
    out
}

/// Helper shared by tests and the e2e suite: a self-contained mock study.
pub fn render_stats(stats: &RunStats) -> String {
    format!(
        "executed {} records ({} skipped, {} parse failures, {} judge failures)\n",
        stats.executed, stats.skipped, stats.parse_failures, stats.judge_failures
    )
}
