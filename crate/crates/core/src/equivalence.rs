//! Semantic answer equivalence: normalization fast paths, an LLM judge, and
//! a persistent verdict cache.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::client::{ChatRequest, Message, ModelClient};
use crate::error::{Error, Result};
use crate::parse::classify_yes_no;
use crate::templates::render_equivalence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictSource {
    Exact,
    Alias,
    Judge,
    Cache,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceVerdict {
    pub equivalent: bool,
    pub source: VerdictSource,
    pub judge_raw: Option<String>,
}

/// Lowercase, trim, strip leading articles and terminal punctuation.
pub fn normalize(text: &str) -> String {
    let mut s = text.trim().to_lowercase();
    for article in ["a ", "an ", "the "] {
        if let Some(rest) = s.strip_prefix(article) {
            s = rest.trim_start().to_string();
            break;
        }
    }
    while s
        .chars()
        .last()
        .is_some_and(|c| matches!(c, '.' | '!' | '?' | ',' | ';' | ':'))
    {
        s.pop();
    }
    s.trim().to_string()
}

/// One line of the append-only cache file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    question: String,
    gold: String,
    predicted: String,
    judge_id: String,
    equivalent: bool,
    timestamp: u64,
}

fn cache_key(question: &str, gold: &str, predicted: &str, judge_id: &str) -> String {
    let mut hasher = Sha256::new();
    for part in [question, gold, predicted, judge_id] {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    hex::encode(hasher.finalize())
}

/// Persistent verdict cache: concurrent readers, serialized appends.
struct VerdictCache {
    path: Option<PathBuf>,
    entries: HashMap<String, bool>,
}

impl VerdictCache {
    fn open(path: Option<PathBuf>) -> Result<Self> {
        let mut entries = HashMap::new();
        if let Some(p) = &path {
            if p.exists() {
                for (lineno, line) in std::fs::read_to_string(p)?.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let rec: CacheRecord =
                        serde_json::from_str(line).map_err(|e| Error::Malformed {
                            line: lineno + 1,
                            message: e.to_string(),
                        })?;
                    entries.insert(rec.key, rec.equivalent);
                }
            }
        }
        Ok(Self { path, entries })
    }

    fn get(&self, key: &str) -> Option<bool> {
        self.entries.get(key).copied()
    }

    fn put(&mut self, rec: CacheRecord) -> Result<()> {
        if let Some(p) = &self.path {
            let mut file = OpenOptions::new().create(true).append(true).open(p)?;
            writeln!(file, "{}", serde_json::to_string(&rec)?)?;
        }
        self.entries.insert(rec.key, rec.equivalent);
        Ok(())
    }
}

/// Judge configuration plus fast-path and caching behavior.
pub struct EquivalenceChecker {
    client: Arc<ModelClient>,
    judge_model_id: String,
    max_tokens: u32,
    /// The exact/alias fast path is an efficiency choice; disable for
    /// fidelity runs that route everything through the judge.
    pub fast_path: bool,
    cache: Mutex<VerdictCache>,
}

/// A cluster of semantically equivalent answers: first-seen representative
/// plus all members (including the representative).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub representative: String,
    pub members: Vec<String>,
}

impl EquivalenceChecker {
    pub fn new(
        client: Arc<ModelClient>,
        judge_model_id: impl Into<String>,
        cache_path: Option<PathBuf>,
    ) -> Result<Self> {
        Ok(Self {
            client,
            judge_model_id: judge_model_id.into(),
            max_tokens: 256,
            fast_path: true,
            cache: Mutex::new(VerdictCache::open(cache_path)?),
        })
    }

    fn judge_request(&self, prompt: String) -> ChatRequest {
        ChatRequest {
            messages: vec![Message::user(prompt)],
            // the provider's most deterministic sampling configuration
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: self.max_tokens,
            model_id: self.judge_model_id.clone(),
        }
    }

    /// Decide whether `predicted` is semantically equivalent to `gold` (or
    /// any alias). Pipeline: normalization fast paths, then cache, then the
    /// judge prompt; unparseable judge replies are retried once.
    pub fn check(
        &self,
        question: &str,
        gold: &str,
        aliases: &[String],
        predicted: &str,
    ) -> Result<EquivalenceVerdict> {
        if self.fast_path {
            let norm_pred = normalize(predicted);
            if norm_pred == normalize(gold) {
                return Ok(EquivalenceVerdict {
                    equivalent: true,
                    source: VerdictSource::Exact,
                    judge_raw: None,
                });
            }
            if aliases.iter().any(|a| normalize(a) == norm_pred) {
                return Ok(EquivalenceVerdict {
                    equivalent: true,
                    source: VerdictSource::Alias,
                    judge_raw: None,
                });
            }
        }

        let key = cache_key(question, gold, predicted, &self.judge_model_id);
        if let Some(equivalent) = self.cache.lock().unwrap().get(&key) {
            return Ok(EquivalenceVerdict {
                equivalent,
                source: VerdictSource::Cache,
                judge_raw: None,
            });
        }

        let prompt = render_equivalence(question, gold, predicted);
        let mut last_raw = String::new();
        for _ in 0..2 {
            let response = self.client.complete(&self.judge_request(prompt.clone()))?;
            last_raw = response.content;
            if let Some(equivalent) = classify_yes_no(&last_raw) {
                self.cache.lock().unwrap().put(CacheRecord {
                    key,
                    question: question.to_string(),
                    gold: gold.to_string(),
                    predicted: predicted.to_string(),
                    judge_id: self.judge_model_id.clone(),
                    equivalent,
                    timestamp: SystemTime::now()
                        .duration_since(UNIX_EPOCH)
                        .unwrap_or_default()
                        .as_secs(),
                })?;
                return Ok(EquivalenceVerdict {
                    equivalent,
                    source: VerdictSource::Judge,
                    judge_raw: Some(last_raw),
                });
            }
        }
        Err(Error::JudgeUnparseable(last_raw))
    }

    /// Greedy clustering: each answer joins the first existing cluster whose
    /// representative it is equivalent to, else starts a new cluster. Judge
    /// failures treat the pair as non-equivalent (recorded in `warnings`).
    pub fn cluster(
        &self,
        answers: &[String],
        question: &str,
        warnings: &mut Vec<String>,
    ) -> Result<Vec<Cluster>> {
        let mut clusters: Vec<Cluster> = Vec::new();
        for answer in answers {
            let mut joined = false;
            for cluster in clusters.iter_mut() {
                let verdict = match self.check(question, &cluster.representative, &[], answer) {
                    Ok(v) => v,
                    Err(e) => {
                        warnings.push(format!(
                            "judge failed comparing {:?} to {:?}: {e}; treated as non-equivalent",
                            answer, cluster.representative
                        ));
                        continue;
                    }
                };
                if verdict.equivalent {
                    cluster.members.push(answer.clone());
                    joined = true;
                    break;
                }
            }
            if !joined {
                clusters.push(Cluster {
                    representative: answer.clone(),
                    members: vec![answer.clone()],
                });
            }
        }
        Ok(clusters)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{request_hash, MockFixture, MockProvider};

    fn checker_with(fixtures: Vec<MockFixture>, fallback: Option<&str>) -> EquivalenceChecker {
        let provider = MockProvider::new(fixtures, fallback.map(|s| s.to_string()));
        EquivalenceChecker::new(Arc::new(ModelClient::new(Arc::new(provider))), "judge", None)
            .unwrap()
    }

    fn judge_fixture(question: &str, gold: &str, predicted: &str, reply: &str) -> MockFixture {
        MockFixture {
            hash: request_hash(&[Message::user(render_equivalence(question, gold, predicted))]),
            reply: reply.to_string(),
        }
    }

    #[test]
    fn normalization_fast_path() {
        let checker = checker_with(vec![], None);
        let v = checker.check("Q", "Paris", &[], "paris.").unwrap();
        assert!(v.equivalent);
        assert_eq!(v.source, VerdictSource::Exact);

        let v = checker
            .check("Q", "Paris", &["The City of Light".into()], "city of light")
            .unwrap();
        assert!(v.equivalent);
        assert_eq!(v.source, VerdictSource::Alias);
    }

    #[test]
    fn judge_yes_with_reasoning() {
        let checker = checker_with(
            vec![judge_fixture(
                "Who?",
                "JFK",
                "John F. Kennedy",
                "Yes. Both refer to the same person.",
            )],
            None,
        );
        let v = checker.check("Who?", "JFK", &[], "John F. Kennedy").unwrap();
        assert!(v.equivalent);
        assert_eq!(v.source, VerdictSource::Judge);
        assert!(v.judge_raw.unwrap().starts_with("Yes"));
    }

    #[test]
    fn judge_no() {
        let checker = checker_with(vec![judge_fixture("Q", "Paris", "Lyon", "No.")], None);
        let v = checker.check("Q", "Paris", &[], "Lyon").unwrap();
        assert!(!v.equivalent);
    }

    #[test]
    fn unparseable_judge_retries_then_fails() {
        let checker = checker_with(vec![], Some("I cannot decide."));
        let err = checker.check("Q", "Paris", &[], "Lyon").unwrap_err();
        assert!(matches!(err, Error::JudgeUnparseable(_)));
    }

    #[test]
    fn symmetric_on_fast_paths() {
        let checker = checker_with(vec![], None);
        let ab = checker.check("Q", "The Eiffel Tower", &[], "eiffel tower").unwrap();
        let ba = checker.check("Q", "eiffel tower", &[], "The Eiffel Tower").unwrap();
        assert_eq!(ab.equivalent, ba.equivalent);
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache_path = dir.path().join("cache.jsonl");

        let provider = MockProvider::new(
            vec![judge_fixture("Q", "Paris", "Lyon", "No.")],
            None,
        );
        let checker = EquivalenceChecker::new(
            Arc::new(ModelClient::new(Arc::new(provider))),
            "judge",
            Some(cache_path.clone()),
        )
        .unwrap();
        let first = checker.check("Q", "Paris", &[], "Lyon").unwrap();
        assert_eq!(first.source, VerdictSource::Judge);

        // fresh checker with no fixtures: the verdict must come from cache
        let provider = MockProvider::new(vec![], None);
        let checker = EquivalenceChecker::new(
            Arc::new(ModelClient::new(Arc::new(provider))),
            "judge",
            Some(cache_path),
        )
        .unwrap();
        let second = checker.check("Q", "Paris", &[], "Lyon").unwrap();
        assert_eq!(second.source, VerdictSource::Cache);
        assert_eq!(second.equivalent, first.equivalent);
    }

    #[test]
    fn clustering_exact_fast_path_uses_no_judge_calls() {
        let provider = Arc::new(MockProvider::new(vec![], None));
        let checker = EquivalenceChecker::new(
            Arc::new(ModelClient::new(provider.clone())),
            "judge",
            None,
        )
        .unwrap();
        let answers: Vec<String> = ["Paris", "paris", "Lyon"].iter().map(|s| s.to_string()).collect();
        let mut warnings = Vec::new();
        let clusters = checker.cluster(&answers, "Q", &mut warnings).unwrap();
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].members.len(), 2);
        assert_eq!(provider.calls(), 0);

        let same = vec!["Rome".to_string(); 10];
        let clusters = checker.cluster(&same, "Q", &mut warnings).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].members.len(), 10);
        assert_eq!(provider.calls(), 0);
    }

    #[test]
    fn clustering_via_judge() {
        let checker = checker_with(
            vec![judge_fixture("Who?", "JFK", "John F. Kennedy", "Yes.")],
            Some("No."),
        );
        let answers: Vec<String> = ["JFK", "John F. Kennedy"].iter().map(|s| s.to_string()).collect();
        let mut warnings = Vec::new();
        let clusters = checker.cluster(&answers, "Who?", &mut warnings).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].representative, "JFK");
        assert_eq!(clusters[0].members.len(), 2);
    }

    #[test]
    fn always_no_judge_yields_normalized_distinct_clusters() {
        let checker = checker_with(vec![], Some("No."));
        let answers: Vec<String> = ["a", "b", "A.", "c", "b"].iter().map(|s| s.to_string()).collect();
        let mut warnings = Vec::new();
        let clusters = checker.cluster(&answers, "Q", &mut warnings).unwrap();
        assert_eq!(clusters.len(), 3);
        let total: usize = clusters.iter().map(|c| c.members.len()).sum();
        assert_eq!(total, answers.len());
    }

    #[test]
    fn fast_path_can_be_disabled() {
        let mut checker = checker_with(vec![judge_fixture("Q", "Paris", "paris", "Yes.")], None);
        checker.fast_path = false;
        let v = checker.check("Q", "Paris", &[], "paris").unwrap();
        assert_eq!(v.source, VerdictSource::Judge);
    }
}
