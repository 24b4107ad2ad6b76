//! Crate-wide error type.

use chrono::NaiveDate;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("duplicate dates: {0}")]
    DuplicateDates(NaiveDate),

    #[error("price table has zero tickers")]
    NoTickers,

    #[error("empty table after filtering (min coverage {min_coverage})")]
    EmptyAfterFilter { min_coverage: f64 },

    #[error("ticker {ticker} has {present} present values; interpolation needs at least 2")]
    TooFewPresentValues { ticker: String, present: usize },

    #[error("missing price for ticker {ticker} on {date}; aggregation requires a complete table")]
    MissingValue { ticker: String, date: NaiveDate },

    #[error("ticker {0} is not mapped to a sector")]
    UnmappedTicker(String),

    #[error("sector {0} has no member tickers")]
    EmptySector(String),

    #[error("need at least {needed} dates, got {got}")]
    TooFewDates { needed: usize, got: usize },

    #[error("unknown sector label {0:?}")]
    UnknownSector(String),

    #[error("non-positive price {value} for ticker {ticker} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: NaiveDate,
        value: f64,
    },

    #[error("zero variance in window ending {date} for {series}")]
    ZeroVariance { date: NaiveDate, series: String },

    #[error("window of {window} rows needs at least {needed} input rows, got {got}")]
    WindowTooLong {
        window: usize,
        needed: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cannot fit {k} clusters to {points} points")]
    TooFewPoints { k: usize, points: usize },

    #[error("fit produced duplicate centroids ({a} and {b})")]
    DuplicateCentroids { a: usize, b: usize },

    #[error("cluster id {id} out of range for k = {k}")]
    InvalidCluster { id: usize, k: usize },

    #[error("mean evidence over {count} instances is {mean}; inverse-mean scaling needs a positive mean")]
    NonPositiveMeanEvidence { mean: f64, count: usize },

    #[error("instance on {date} lies on the decision hyperplane of competitor {competitor}; input-layer propagation is undefined there")]
    HyperplaneDenominator {
        date: NaiveDate,
        competitor: usize,
    },

    #[error("cluster {0} has no instances to aggregate")]
    EmptyCluster(usize),

    #[error("change-point scan needs at least 5 points, got {0}")]
    CurveTooShort(usize),

    #[error("leftover feature pool has {pool} features; random selection needs {needed}")]
    PoolTooSmall { pool: usize, needed: usize },

    #[error("data split produced an empty {part} part (n = {n})")]
    EmptySplit { part: &'static str, n: usize },

    #[error("non-finite training loss at epoch {epoch} (seed {seed})")]
    NonFiniteLoss { seed: u64, epoch: usize },

    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("json error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn csv(path: &std::path::Path, source: csv::Error) -> Self {
        Error::Csv {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn json(path: &std::path::Path, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.display().to_string(),
            source,
        }
    }
}
