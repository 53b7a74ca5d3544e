//! Append-only run manifest: one JSON record per (question, method, model)
//! elicitation, preceded by a schema header line. Re-running a study appends
//! only the records that are missing, so interrupted runs resume cheaply.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::elicitation::{ElicitationOutcome, MethodSpec};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
}

/// Identity of one manifest record. The method fingerprint covers both the
/// method parameters and the template text they render.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RecordKey {
    pub question_id: String,
    pub method_fingerprint: String,
    pub model_id: String,
}

/// One elicitation result. No wall-clock fields: identical runs must produce
/// byte-identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub key: RecordKey,
    pub dataset: String,
    pub method: MethodSpec,
    pub method_name: String,
    pub outcome: ElicitationOutcome,
    /// Graded correctness; None when the elicitation failed to parse or the
    /// judge could not reach a verdict.
    pub correct: Option<bool>,
    /// Set when grading itself failed; such records are excluded from scoring
    /// unless the run opts into counting them as incorrect.
    pub judge_failed: bool,
}

impl ManifestRecord {
    pub fn scoreable(&self, count_judge_failures_as_incorrect: bool) -> Option<(f64, bool)> {
        let elicited = self.outcome.elicited.as_ref().ok()?;
        match self.correct {
            Some(correct) => Some((elicited.confidence, correct)),
            None if self.judge_failed && count_judge_failures_as_incorrect => {
                Some((elicited.confidence, false))
            }
            None => None,
        }
    }
}

/// Manifest file handle. Loading validates the header and collects keys so
/// callers can skip work that is already recorded.
pub struct Manifest {
    path: PathBuf,
    keys: HashSet<RecordKey>,
    records: Vec<ManifestRecord>,
}

impl Manifest {
    /// Opens an existing manifest or starts a new one with a header line.
    pub fn open(path: &Path) -> Result<Self> {
        if path.exists() {
            Self::load(path)
        } else {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let header = Header {
                schema: "confcal-manifest".into(),
                version: SCHEMA_VERSION,
            };
            let mut file = File::create(path)?;
            writeln!(file, "{}", serde_json::to_string(&header)?)?;
            Ok(Self {
                path: path.to_path_buf(),
                keys: HashSet::new(),
                records: Vec::new(),
            })
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Malformed {
                line: 1,
                message: "manifest is empty; expected schema header".into(),
            })?;
        let header: Header = serde_json::from_str(&header_line).map_err(|e| Error::Malformed {
            line: 1,
            message: format!("bad schema header: {e}"),
        })?;
        if header.schema != "confcal-manifest" || header.version != SCHEMA_VERSION {
            return Err(Error::Malformed {
                line: 1,
                message: format!(
                    "unsupported manifest schema {}/{}",
                    header.schema, header.version
                ),
            });
        }
        let mut keys = HashSet::new();
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord =
                serde_json::from_str(&line).map_err(|e| Error::Malformed {
                    line: i + 2,
                    message: format!("bad record: {e}"),
                })?;
            keys.insert(record.key.clone());
            records.push(record);
        }
        Ok(Self {
            path: path.to_path_buf(),
            keys,
            records,
        })
    }

    pub fn contains(&self, key: &RecordKey) -> bool {
        self.keys.contains(key)
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends one record and flushes it to disk immediately, so a crash
    /// loses at most the in-flight question.
    pub fn append(&mut self, record: ManifestRecord) -> Result<()> {
        if self.keys.contains(&record.key) {
            return Err(Error::DuplicateId(format!(
                "{}/{}/{}",
                record.key.question_id, record.key.method_fingerprint, record.key.model_id
            )));
        }
        let mut file = OpenOptions::new().append(true).open(&self.path)?;
        writeln!(file, "{}", serde_json::to_string(&record)?)?;
        file.flush()?;
        self.keys.insert(record.key.clone());
        self.records.push(record);
        Ok(())
    }

    /// Records for one (method fingerprint, model) pair, in file order.
    pub fn records_for(&self, method_fingerprint: &str, model_id: &str) -> Vec<&ManifestRecord> {
        self.records
            .iter()
            .filter(|r| {
                r.key.method_fingerprint == method_fingerprint && r.key.model_id == model_id
            })
            .collect()
    }
}
