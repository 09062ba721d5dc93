use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV at {path}: {detail}")]
    MalformedCsv { path: String, detail: String },

    #[error("invalid transformation code {code} for series {series} (must be 1..7)")]
    InvalidTcode { series: String, code: i64 },

    #[error("dates are not strictly increasing at row {row} ({prev} followed by {next})")]
    NonMonotoneDates {
        row: usize,
        prev: String,
        next: String,
    },

    #[error("non-positive value in series {series} at row {row} under a log transform")]
    NonPositiveLog { series: String, row: usize },

    #[error("only {surviving} complete columns survive balancing; need at least 2")]
    TooFewColumns { surviving: usize },

    #[error("column {name} is constant and cannot be standardized")]
    ConstantColumn { name: String },

    #[error("window rows [{start}..={end}] out of range for panel with {rows} rows")]
    WindowOutOfRange {
        start: i64,
        end: usize,
        rows: usize,
    },

    #[error("series {name} not found in panel")]
    MissingSeries { name: String },

    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid kernel specification: {0}")]
    InvalidKernel(String),

    #[error("truncated feature map would have {required} coordinates, exceeding the cap of {cap}")]
    FeatureMapTooLarge { required: usize, cap: usize },

    #[error("panel has {rows} rows; need at least {min}")]
    PanelTooSmall { rows: usize, min: usize },

    #[error("matrix is not symmetric (max asymmetry {max_asym:.3e} exceeds tolerance {tol:.3e})")]
    NotSymmetric { max_asym: f64, tol: f64 },

    #[error("requested {r} eigenpairs from a {d}x{d} matrix")]
    RankOutOfRange { r: usize, d: usize },

    #[error("eigensolver failed to converge for eigenvalue index {index}")]
    EigenNoConvergence { index: usize },

    #[error("input matrix is not column-centered (max column mean {max_mean:.3e})")]
    UncenteredInput { max_mean: f64 },

    #[error("Gram matrix must be centered before factor extraction")]
    GramNotCentered,

    #[error("rank-deficient input: {0}")]
    RankDeficient(String),

    #[error("insufficient sample: {rows} usable rows for {cols} regressors")]
    InsufficientSample { rows: usize, cols: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("need at least {min} observations, got {n}")]
    TooFewObservations { n: usize, min: usize },

    #[error("loss differential is constant and nonzero; DM statistic undefined")]
    DegenerateLossDifferential,

    #[error("forecast record list is empty")]
    EmptyRecords,

    #[error("forecast records share no common dates (first mismatch at {first})")]
    DateMisalignment { first: String },

    #[error("no baseline records for target {target} at horizon {horizon}")]
    MissingBaseline { target: String, horizon: usize },

    #[error("invalid date {0}; expected M/D/YYYY or YYYY-MM")]
    InvalidDate(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
