use thiserror::Error;

/// Every failure the toolkit can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("laws are not defined on a common set of outcomes: {0}")]
    SupportMismatch(String),
    #[error("per-law variances differ by {spread:e}, exceeding tolerance {tol:e}")]
    VarianceAmbiguous { spread: f64, tol: f64 },
    #[error("common standard deviation is zero")]
    DegenerateSigma,
    #[error("bad parameters: {0}")]
    BadParameters(String),
    #[error("statistic horizon exceeded: step {m} of {n}")]
    HorizonExceeded { m: usize, n: usize },
    #[error("path length {got} does not match horizon {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("interval endpoints must satisfy a < b (got a = {a}, b = {b})")]
    BadInterval { a: f64, b: f64 },
    #[error("time must lie in (0, 1], got {0}")]
    BadTime(f64),
    #[error("unstable grid: {0}")]
    UnstableGrid(String),
    #[error("point {x} lies outside the grid [{x_min}, {x_max}]")]
    OutOfDomain { x: f64, x_min: f64, x_max: f64 },
    #[error("terminal function is not monotone")]
    NotMonotone,
    #[error("reachable state count {states} exceeds cap {cap} at step {step}")]
    StateExplosion { states: usize, cap: usize, step: usize },
    #[error("horizon n = {n} exceeds the configured cap {cap} for this statistic")]
    HorizonCap { n: usize, cap: usize },
    #[error("terminal function cannot be evaluated exactly at lattice points")]
    NotExact,
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("root finder failed to converge: {0}")]
    NoConvergence(String),
    #[error("hypothesis set is empty")]
    EmptyTheta,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidMeasure(_) => "InvalidMeasure",
            Error::SupportMismatch(_) => "SupportMismatch",
            Error::VarianceAmbiguous { .. } => "VarianceAmbiguous",
            Error::DegenerateSigma => "DegenerateSigma",
            Error::BadParameters(_) => "BadParameters",
            Error::HorizonExceeded { .. } => "HorizonExceeded",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::BadInterval { .. } => "BadInterval",
            Error::BadTime(_) => "BadTime",
            Error::UnstableGrid(_) => "UnstableGrid",
            Error::OutOfDomain { .. } => "OutOfDomain",
            Error::NotMonotone => "NotMonotone",
            Error::StateExplosion { .. } => "StateExplosion",
            Error::HorizonCap { .. } => "HorizonCap",
            Error::NotExact => "NotExact",
            Error::Infeasible(_) => "Infeasible",
            Error::NoConvergence(_) => "NoConvergence",
            Error::EmptyTheta => "EmptyTheta",
            Error::Config(_) => "ConfigError",
            Error::Parse(_) => "ParseError",
            Error::Io(_) => "IoError",
            Error::Csv(_) => "CsvError",
        }
    }

    /// Process exit code for the CLI. Usage and configuration problems map to 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse(_) => 2,
            Error::InvalidMeasure(_)
            | Error::SupportMismatch(_)
            | Error::VarianceAmbiguous { .. }
            | Error::DegenerateSigma
            | Error::BadParameters(_) => 3,
            Error::HorizonExceeded { .. } | Error::LengthMismatch { .. } => 4,
            Error::BadInterval { .. } | Error::BadTime(_) => 5,
            Error::UnstableGrid(_) | Error::OutOfDomain { .. } | Error::NotMonotone => 6,
            Error::StateExplosion { .. } | Error::HorizonCap { .. } | Error::NotExact => 7,
            Error::Infeasible(_) | Error::NoConvergence(_) | Error::EmptyTheta => 8,
            Error::Io(_) | Error::Csv(_) => 9,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
