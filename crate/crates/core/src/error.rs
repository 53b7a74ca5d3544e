use thiserror::Error;

/// Errors produced across the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no data")]
    NoData,

    #[error("no samples")]
    NoSamples,

    #[error("invalid confidence {value} at index {index}: must be finite and in [0,1]")]
    InvalidConfidence { index: usize, value: f64 },

    #[error("degenerate labels: need at least one correct and one incorrect point")]
    DegenerateLabels,

    #[error("all fold rotations failed: {0}")]
    AllRotationsFailed(String),

    #[error("unknown expression {0:?}")]
    UnknownExpression(String),

    #[error("unknown method/stage combination: {method} stage {stage}")]
    UnknownStage { method: String, stage: u8 },

    #[error("parse failure: {reason}; raw text: {raw:?}")]
    ParseFailure { reason: String, raw: String },

    #[error("judge response unparseable: {0:?}")]
    JudgeUnparseable(String),

    #[error("missing credential environment variable {0}")]
    Auth(String),

    #[error("rate limited after {attempts} attempts: {message}")]
    RateLimited { attempts: u32, message: String },

    #[error("provider error (status {status}): {body}")]
    Provider { status: u16, body: String },

    #[error("request timed out after {0} ms")]
    Timeout(u64),

    #[error("no fixture for request hash {0} and no fallback reply configured")]
    MissingFixture(String),

    #[error("malformed record at line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("duplicate question id {0:?}")]
    DuplicateId(String),

    #[error("sample count {requested} exceeds pool size {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("http transport error: {0}")]
    Http(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
