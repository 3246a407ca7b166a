//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong between reading a CSV and emitting a report.
///
/// Row indices are zero-based over *data* rows (the header is not counted),
/// matching the indices reported in the load report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV parse error: {0}")]
    Csv(#[from] csv::Error),

    #[error("column `{column}` not found in the input header")]
    MissingColumn { column: String },

    #[error("column `{column}` mapped more than once in the schema")]
    DuplicateColumn { column: String },

    #[error("row {row}: column `{column}` has non-binary value `{value}` (expected 0 or 1)")]
    NonBinaryValue {
        column: String,
        row: usize,
        value: String,
    },

    #[error("row {row}: column `{column}` has non-numeric value `{value}`")]
    NonNumericValue {
        column: String,
        row: usize,
        value: String,
    },

    #[error("covariate `{column}` is constant; cannot standardize")]
    ConstantCovariate { column: String },

    #[error("group/exposure cell (g={g}, z={z}) has {count} rows; at least {required} required")]
    CellTooSmall {
        g: u8,
        z: u8,
        count: usize,
        required: usize,
    },

    #[error("operation left no usable rows (cell counts g0z0={0}, g0z1={1}, g1z0={2}, g1z1={3})", counts[0], counts[1], counts[2], counts[3])]
    CellCounts { counts: [usize; 4] },

    #[error("group {group} has no rows")]
    EmptyGroup { group: u8 },

    #[error("response is constant; logistic MLE is undefined")]
    ConstantResponse,

    #[error("need at least as many rows as design columns: n = {n}, p = {p}")]
    InsufficientRows { n: usize, p: usize },

    #[error("separation detected: |coefficient| reached {max_abs_coefficient:.3}, fitted probabilities are numerically degenerate")]
    Separation { max_abs_coefficient: f64 },

    #[error("{context}: system is singular or rank-deficient")]
    SingularSystem { context: String },

    #[error("{context}: expected length {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("propensity model `{which}` failed: {source}")]
    PropensityModel {
        which: String,
        #[source]
        source: Box<Error>,
    },

    #[error("sensitivity parameter must satisfy lambda >= 1, got {lambda}")]
    InvalidLambda { lambda: f64 },

    #[error("bisection bracket must start at 1 and end above 1, got ({lo}, {hi})")]
    InvalidBracket { lo: f64, hi: f64 },

    #[error("no units to optimize over")]
    EmptyUnits,

    #[error("brute-force enumeration limited to n <= {max}, got n = {n}")]
    BruteForceTooLarge { n: usize, max: usize },

    #[error("weight sum is zero; weighted mean undefined")]
    ZeroWeightSum,

    #[error("probability must lie strictly in (0, 1), got {value}")]
    ProbabilityOutOfRange { value: f64 },

    #[error("{failed} of {total} bootstrap replicates failed ({detail}); exceeds the 10% ceiling")]
    BootstrapFailures {
        failed: usize,
        total: usize,
        detail: String,
    },

    #[error("observed disparity is zero; equivalence fraction is undefined")]
    ZeroTau,

    #[error("equivalence fraction must lie in (0, 1], got {eta}")]
    InvalidEta { eta: f64 },

    #[error("contour grid needs calibration points or explicit axis limits")]
    EmptyContour,

    #[error("invalid configuration: {message}")]
    Config { message: String },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
