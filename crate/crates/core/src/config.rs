//! Run configuration, loaded from TOML. Seeds are mandatory: a run that
//! cannot be replayed exactly is not a run worth recording.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::client::ProviderFamily;
use crate::elicitation::MethodSpec;
use crate::error::{Error, Result};

fn default_num_bins() -> usize {
    10
}

fn default_num_folds() -> usize {
    5
}

fn default_max_tokens() -> u32 {
    512
}

fn default_max_tokens_cot() -> u32 {
    1024
}

fn default_timeout_secs() -> u64 {
    120
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    /// Canonical question file produced by `ingest`.
    pub path: PathBuf,
    /// Model id used to grade answer equivalence for this dataset.
    pub judge_model: String,
    /// Questions drawn per run; omit to use the whole file.
    pub eval_count: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderConfig {
    #[serde(default)]
    pub family: ProviderFamily,
    /// "mock" replays fixtures from `fixtures_path`; anything else is an
    /// OpenAI-compatible HTTP endpoint.
    pub backend: String,
    pub base_url: Option<String>,
    pub api_key_env: Option<String>,
    pub fixtures_path: Option<PathBuf>,
    /// Sampling overrides; defaults come from the provider family.
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_max_tokens_cot")]
    pub max_tokens_cot: u32,
    pub requests_per_minute: Option<u64>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

impl ProviderConfig {
    pub fn sampling(&self) -> (f64, f64) {
        let (t, p) = self.family.default_sampling();
        (self.temperature.unwrap_or(t), self.top_p.unwrap_or(p))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Master seed; per-dataset sampling and fold seeds derive from it.
    pub seed: u64,
    #[serde(default = "default_num_bins")]
    pub num_bins: usize,
    #[serde(default = "default_num_folds")]
    pub num_folds: usize,
    /// When grading fails outright, score the record as incorrect instead of
    /// dropping it.
    #[serde(default)]
    pub count_judge_failures_as_incorrect: bool,
    /// Report absolute-gap ECE instead of the squared-gap default.
    #[serde(default)]
    pub absolute_ece: bool,
    pub output_dir: PathBuf,
    /// Expression probability file for linguistic methods; the built-in
    /// human-survey map applies when omitted.
    pub expression_map: Option<PathBuf>,
    /// Minimum fraction of records an expression must appear in before its
    /// empirical accuracy replaces the fallback probability. The default,
    /// 1/N, means any usage qualifies.
    pub min_expression_usage_fraction: Option<f64>,
    pub datasets: Vec<DatasetConfig>,
    pub methods: Vec<MethodSpec>,
    /// Keyed by model id.
    pub models: BTreeMap<String, ProviderConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("at least one dataset is required".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        if self.num_bins < 1 {
            return Err(Error::Config("num_bins must be at least 1".into()));
        }
        if self.num_folds < 2 {
            return Err(Error::Config("num_folds must be at least 2".into()));
        }
        for method in &self.methods {
            method.validate()?;
        }
        for dataset in &self.datasets {
            if !self.models.contains_key(&dataset.judge_model) {
                return Err(Error::Config(format!(
                    "dataset {:?} names judge model {:?}, which has no [models] entry",
                    dataset.name, dataset.judge_model
                )));
            }
        }
        for (id, provider) in &self.models {
            match provider.backend.as_str() {
                "mock" => {
                    if provider.fixtures_path.is_none() {
                        return Err(Error::Config(format!(
                            "mock model {id:?} needs fixtures_path"
                        )));
                    }
                }
                "http" => {
                    if provider.base_url.is_none() || provider.api_key_env.is_none() {
                        return Err(Error::Config(format!(
                            "http model {id:?} needs base_url and api_key_env"
                        )));
                    }
                }
                other => {
                    return Err(Error::Config(format!(
                        "model {id:?}: unknown backend {other:?} (expected \"mock\" or \"http\")"
                    )));
                }
            }
        }
        if let Some(f) = self.min_expression_usage_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(
                    "min_expression_usage_fraction must be in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }

    /// Deterministic sub-seed for a named stage of the run.
    pub fn derive_seed(&self, label: &str) -> u64 {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(label.as_bytes());
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    /// Evaluation model ids: everything not referenced purely as a judge.
    pub fn eval_model_ids(&self) -> Vec<&str> {
        let judges: std::collections::HashSet<&str> = self
            .datasets
            .iter()
            .map(|d| d.judge_model.as_str())
            .collect();
        let mut ids: Vec<&str> = self
            .models
            .keys()
            .map(String::as_str)
            .filter(|id| !judges.contains(id) || self.models.len() == 1)
            .collect();
        ids.sort_unstable();
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
seed = 42
output_dir = "out"

[[datasets]]
name = "trivia"
path = "data/trivia.jsonl"
judge_model = "judge"
eval_count = 20

[[methods]]
kind = "label_prob"
n_samples = 10

[[methods]]
kind = "verb_1s_topk"
k = 4

[[methods]]
kind = "ling_1s"
expression_map_mode = "human"

[models.subject]
backend = "mock"
fixtures_path = "fixtures/subject.jsonl"

[models.judge]
backend = "mock"
fixtures_path = "fixtures/judge.jsonl"
"#;

    #[test]
    fn parses_example_with_defaults() {
        let config: RunConfig = toml::from_str(EXAMPLE).unwrap();
        config.validate().unwrap();
        assert_eq!(config.num_bins, 10);
        assert_eq!(config.num_folds, 5);
        assert!(!config.absolute_ece);
        assert_eq!(config.methods.len(), 3);
        assert_eq!(config.eval_model_ids(), vec!["subject"]);
    }

    #[test]
    fn judge_must_exist() {
        let mut config: RunConfig = toml::from_str(EXAMPLE).unwrap();
        config.datasets[0].judge_model = "missing".into();
        assert!(config.validate().is_err());
    }

    #[test]
    fn http_backend_requires_endpoint() {
        let mut config: RunConfig = toml::from_str(EXAMPLE).unwrap();
        config.models.get_mut("subject").unwrap().backend = "http".into();
        assert!(config.validate().is_err());
    }

    #[test]
    fn derive_seed_is_stable_and_label_sensitive() {
        let config: RunConfig = toml::from_str(EXAMPLE).unwrap();
        assert_eq!(config.derive_seed("folds"), config.derive_seed("folds"));
        assert_ne!(config.derive_seed("folds"), config.derive_seed("sample"));
    }
}
