use thiserror::Error;

/// Errors raised by the clustering pipeline and its building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("need at least {required} points, got {actual}")]
    TooFewPoints { required: usize, actual: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),

    #[error("vertex {0} is isolated (zero degree); the bandwidth is too small for this data")]
    IsolatedVertex(usize),

    #[error("index {index} out of range for a graph of {n} vertices")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("part {0} has zero volume")]
    ZeroVolume(usize),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("eigensolver did not converge: {0}")]
    EigenSolver(String),

    #[error("degenerate spectrum: no informative bipartition exists")]
    DegenerateSpectrum,

    #[error("requested {requested} clusters but only {available} are possible")]
    TooManyClusters { requested: usize, available: usize },

    #[error("cluster count must be at least 1")]
    ZeroClusters,

    #[error("bandwidth grid is empty")]
    EmptyGrid,

    #[error("true labels are required for bandwidth search; use the median-distance heuristic for unlabeled data")]
    LabelsRequired,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("exact accuracy enumerates K! permutations and supports K <= {max}, got {k}; merge small classes or use assignment mode")]
    TooManyClasses { k: usize, max: usize },

    #[error("label {label} is outside 0..{k}")]
    LabelOutOfRange { label: usize, k: usize },

    #[error("group {0} has no cluster label")]
    MissingGroupLabel(usize),

    #[error("site {0} has an empty shard")]
    EmptyShard(u32),

    #[error("no codebooks to aggregate")]
    NoCodebooks,

    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),

    #[error("covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("mismatched run configurations: {0} vs {1}")]
    ConfigMismatch(String, String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
