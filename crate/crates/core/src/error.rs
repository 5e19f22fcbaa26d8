use chrono::NaiveDate;

/// Errors returned by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// CSV header does not start with `Province/State,Country/Region,Lat,Long`.
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    /// A data row has a different number of fields than the header.
    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    /// A count cell is not a base-10 non-negative integer.
    #[error("non-numeric count in row {row}, column {col}: {cell:?}")]
    NonNumericCount {
        row: usize,
        col: usize,
        cell: String,
    },
    /// A latitude/longitude cell is not a decimal number.
    #[error("invalid coordinate in row {row}: {cell:?}")]
    InvalidCoordinate { row: usize, cell: String },
    /// Header dates are not strictly increasing consecutive calendar days.
    #[error("non-monotone header dates: {0} then {1}")]
    NonMonotoneDates(NaiveDate, NaiveDate),
    /// No row matches the requested country name.
    #[error("unknown country {0:?}")]
    UnknownCountry(String),
    /// A series never reports a single case.
    #[error("series for {0:?} is all zeros")]
    AllZero(String),

    /// Requested window does not fit before the given end index.
    #[error("window of size {w} ending at index {end} is out of range")]
    WindowOutOfRange { end: usize, w: usize },

    /// λ = 0 and the Gram matrix could not be factorized.
    #[error("singular system in ridge solve (lambda = {lambda})")]
    SingularSystem { lambda: f64 },
    /// A matrix argument contains NaN or infinity.
    #[error("non-finite input to {0}")]
    NonFiniteInput(&'static str),
    /// Operand shapes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// No training pairs available for a supervised fit.
    #[error("empty training set")]
    EmptyTrainingSet,

    /// Not enough history before the requested day.
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    /// A grid or run configuration is internally inconsistent.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Summary requested over zero records.
    #[error("no records to summarize")]
    EmptyRecords,
    /// Density estimate requested over identical samples.
    #[error("degenerate sample: all {0} values identical")]
    DegenerateSample(usize),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
