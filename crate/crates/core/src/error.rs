use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Solver,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    Parse(String),
    #[error("duplicate attribute `{0}`")]
    DuplicateAttribute(String),
    #[error("attribute `{0}` has an empty domain")]
    EmptyDomain(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown value `{value}` for attribute `{column}` at data row {row}")]
    UnknownValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("invalid clique: {0}")]
    InvalidClique(String),
    #[error("clique has {cells} cells, cap is {cap}")]
    CliqueTooLarge { cells: f64, cap: usize },
    #[error("`{name}` must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("invalid privacy parameters: {0}")]
    InvalidParams(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("exponential mechanism needs at least one candidate")]
    EmptyCandidates,
    #[error("mutual information needs two distinct attributes, got {0} twice")]
    SameAttribute(usize),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no one-way measurement for attribute `{0}`")]
    MissingOneWay(String),
    #[error("junction tree clique needs {cells} cells, cap is {cap}")]
    TreewidthTooLarge { cells: f64, cap: usize },
    #[error("measurement log is empty")]
    EmptyLog,
    #[error("cannot place {floors} whole records in a column of {n}")]
    InsufficientBudget { floors: u64, n: usize },
    #[error("expected counts must be finite and nonnegative")]
    NegativeMass,
    #[error("missing attribute `{0}`")]
    MissingAttribute(String),
    #[error("label `{label}` of attribute `{attribute}` is not an integer")]
    NonIntegerLabel { attribute: String, label: String },
    #[error("need at least 3 attributes, domain has {0}")]
    TooFewAttributes(usize),
    #[error("requested {requested} distinct triples but only {available} exist")]
    TooManyQueries { requested: usize, available: u128 },
    #[error("datasets are defined over different domains")]
    DomainMismatch,
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Variant name, printed by the CLI.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Parse(_) => "ParseError",
            Error::DuplicateAttribute(_) => "DuplicateAttribute",
            Error::EmptyDomain(_) => "EmptyDomain",
            Error::UnknownAttribute(_) => "UnknownAttribute",
            Error::UnknownValue { .. } => "UnknownValue",
            Error::HeaderMismatch(_) => "HeaderMismatch",
            Error::InvalidClique(_) => "InvalidClique",
            Error::CliqueTooLarge { .. } => "CliqueTooLarge",
            Error::NonPositiveParameter { .. } => "NonPositiveParameter",
            Error::InvalidDelta(_) => "InvalidDelta",
            Error::InvalidParams(_) => "InvalidParams",
            Error::LengthMismatch(_) => "LengthMismatch",
            Error::EmptyCandidates => "EmptyCandidates",
            Error::SameAttribute(_) => "SameAttribute",
            Error::Disconnected => "Disconnected",
            Error::EmptyDataset => "EmptyDataset",
            Error::MissingOneWay(_) => "MissingOneWay",
            Error::TreewidthTooLarge { .. } => "TreewidthTooLarge",
            Error::EmptyLog => "EmptyLog",
            Error::InsufficientBudget { .. } => "InsufficientBudget",
            Error::NegativeMass => "NegativeMass",
            Error::MissingAttribute(_) => "MissingAttribute",
            Error::NonIntegerLabel { .. } => "NonIntegerLabel",
            Error::TooFewAttributes(_) => "TooFewAttributes",
            Error::TooManyQueries { .. } => "TooManyQueries",
            Error::DomainMismatch => "DomainMismatch",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "IoError",
            Error::Csv(_) => "ParseError",
            Error::Json(_) => "ParseError",
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_)
            | Error::InvalidDelta(_)
            | Error::InvalidParams(_)
            | Error::NonPositiveParameter { .. }
            | Error::InvalidClique(_)
            | Error::TooFewAttributes(_)
            | Error::TooManyQueries { .. }
            | Error::LengthMismatch(_) => ErrorKind::Config,
            Error::TreewidthTooLarge { .. }
            | Error::CliqueTooLarge { .. }
            | Error::EmptyLog
            | Error::Disconnected
            | Error::EmptyCandidates
            | Error::InsufficientBudget { .. }
            | Error::NegativeMass => ErrorKind::Solver,
            _ => ErrorKind::Data,
        }
    }
}
