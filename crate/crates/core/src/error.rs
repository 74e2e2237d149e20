use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),

    #[error("invalid field parameters: {0}")]
    InvalidParams(String),

    #[error("value {value} is not an element of F_{p}")]
    MismatchedField { value: u64, p: u64 },

    #[error("attempted to invert zero")]
    InverseOfZero,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("duplicate interpolation node {0}")]
    DuplicateNode(u64),

    #[error("evaluation target {0} collides with an interpolation node")]
    TargetCollision(u64),

    #[error("coordinate {index} = {value} is outside the representable range (|round(2^q x)| must be < {limit})")]
    OutOfRange { index: usize, value: f64, limit: u64 },

    #[error("infeasible quantization: squared distances up to {bound} exceed (p-1)/2 = {half}{hint}")]
    InfeasibleQuantization { bound: u128, half: u64, hint: String },

    #[error("infeasible coding scheme: m = {m} < 2l + 2t - 1 = {required} (l = {l}, t = {t})")]
    InfeasibleScheme { m: usize, l: usize, t: usize, required: usize },

    #[error("invalid coding scheme: {0}")]
    InvalidScheme(String),

    #[error("missing pairwise distances: expected {expected}, got {got}")]
    MissingPairs { expected: usize, got: usize },

    #[error("client {client} received {got} share rows, expected {expected}")]
    IncompleteShares { client: usize, expected: usize, got: usize },

    #[error("incomplete transcript: {present} reports present, {required} required; missing clients {missing:?}")]
    IncompleteTranscript { present: usize, required: usize, missing: Vec<usize> },

    #[error("client {client} received no samples; lower the client count (m = {m})")]
    EmptyClient { client: usize, m: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("k = {k} out of range for n = {n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    EigenNonConvergence { sweeps: usize, off_norm: f64 },

    #[error("enumeration of {cases} cases exceeds budget {budget}; use a smaller p or t")]
    BudgetExceeded { cases: u128, budget: u64 },

    #[error("wire format: {0}")]
    Wire(String),

    #[error("data error at line {line}: {msg}")]
    Data { line: usize, msg: String },

    #[error("data error: {0}")]
    Dataset(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InfeasibleQuantization { .. } | Error::InfeasibleScheme { .. } => 3,
            Error::Data { .. }
            | Error::Dataset(_)
            | Error::OutOfRange { .. }
            | Error::EmptyClient { .. }
            | Error::Io(_)
            | Error::Wire(_)
            | Error::IncompleteTranscript { .. } => 4,
            _ => 2,
        }
    }
}
