use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("truncated packet record at index {index}: {detail}")]
    Truncated { index: usize, detail: String },
    #[error("unsupported link type {0} (only Ethernet is supported)")]
    UnsupportedLinkType(u32),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("empty window")]
    EmptyWindow,
    #[error("shape error: expected {expected} features, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("empty training set")]
    EmptyTraining,
    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),
    #[error("insufficient baseline for device {device}: need {required} NORMAL samples, have {have}")]
    InsufficientBaseline {
        device: String,
        required: usize,
        have: usize,
    },
    #[error("no telemetry for device {device} in window starting at {start}")]
    MissingTelemetry { device: String, start: u64 },
    #[error("signature overlap on {feature} ({protocol}): {overlap:.4} of mass overlaps")]
    SignatureOverlap {
        feature: String,
        protocol: String,
        overlap: f64,
    },
    #[error("model error: {0}")]
    Model(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
