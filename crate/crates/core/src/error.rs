use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A CSV cell or row that could not be interpreted. Rows are counted
    /// 1-based over data rows (the header is row 0); `col` is absent for
    /// row-level problems such as non-monotone times.
    #[error("parse error at row {row}{}: {message}", col_suffix(.col))]
    Parse {
        row: usize,
        col: Option<usize>,
        message: String,
    },
    #[error("a series needs at least two observation rows")]
    TooShort,
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("train split is empty")]
    EmptySplit,
    #[error("split ratios ({0}, {1}, {2}) do not sum to 1")]
    BadRatios(f64, f64, f64),
    #[error("channel `{0}` has too few observations for this scheme")]
    EmptyChannel(String),
    #[error("parameter {s} outside the path domain [{lo}, {hi}]")]
    OutOfDomain { s: f64, lo: f64, hi: f64 },
    #[error("exceeded the step limit of {0}")]
    MaxStepsExceeded(usize),
    #[error("adaptive step size underflowed at s = {0}")]
    StepUnderflow(f64),
    #[error("non-finite value encountered during integration")]
    NumericalBlowup,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("adaptive solvers cannot be differentiated; use euler or rk4 for training")]
    UnsupportedForTraining,
    #[error("perturbation index {0} out of range")]
    BadIndex(usize),
    #[error("step ladder needs at least 4 distinct positive step sizes")]
    BadLadder,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn col_suffix(col: &Option<usize>) -> String {
    match col {
        Some(c) => format!(", column {c}"),
        None => String::new(),
    }
}

impl Error {
    /// Stable machine-readable name, used by the CLI diagnostic stream.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "ParseError",
            Error::TooShort => "TooShort",
            Error::InvalidSeries(_) => "InvalidSeries",
            Error::EmptySplit => "EmptySplit",
            Error::BadRatios(..) => "BadRatios",
            Error::EmptyChannel(_) => "EmptyChannel",
            Error::OutOfDomain { .. } => "OutOfDomain",
            Error::MaxStepsExceeded(_) => "MaxStepsExceeded",
            Error::StepUnderflow(_) => "StepUnderflow",
            Error::NumericalBlowup => "NumericalBlowup",
            Error::Shape(_) => "ShapeError",
            Error::UnsupportedForTraining => "UnsupportedForTraining",
            Error::BadIndex(_) => "BadIndex",
            Error::BadLadder => "BadLadder",
            Error::BadConfig(_) => "BadConfig",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
