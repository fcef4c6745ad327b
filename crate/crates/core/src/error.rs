use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient support at t={t}: {count} in-window points, need {needed}")]
    InsufficientSupport { t: f64, count: usize, needed: usize },

    #[error("weighted design is rank deficient at t={t} (condition number {condition:.3e})")]
    RankDeficient { t: f64, condition: f64 },

    #[error("solver hit its iteration cap at t={t} after {iterations} iterations (objective gap {gap:.3e})")]
    NoConvergence { t: f64, iterations: usize, gap: f64 },

    #[error("fits are on different grids or have different dimensions")]
    GridMismatch,

    #[error("empty integration window [{lo}, {hi}]")]
    EmptyWindow { lo: f64, hi: f64 },

    #[error("index {index} has no full window of half-width {half_width} in a series of length {n}")]
    IndexOutOfWindow { index: usize, half_width: usize, n: usize },

    #[error("sigma estimate is singular at t={t} (condition number {condition:.3e})")]
    SingularSigma { t: f64, condition: f64 },

    #[error("no bandwidth candidate could be evaluated")]
    AllCandidatesInfeasible,

    #[error("{count} candidates is fewer than the volatility window {window}")]
    TooFewCandidates { count: usize, window: usize },

    #[error("curve derivative {derivative:.3e} is too flat at t={t}")]
    FlatCurve { t: f64, derivative: f64 },

    #[error("design argument leaves its domain: {0}")]
    DomainError(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse { row: usize, col: usize, message: String },

    #[error("non-positive response {value} at row {row} cannot be log transformed")]
    NonPositiveForLog { row: usize, value: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attach a pipeline stage label (`module/op`) to an error.
    pub fn at(self, stage: impl Into<String>) -> Self {
        Error::Stage { stage: stage.into(), source: Box::new(self) }
    }

    /// The innermost, unlabelled error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Statistical degeneracy as opposed to bad input or I/O.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self.root(),
            Error::InsufficientSupport { .. }
                | Error::RankDeficient { .. }
                | Error::NoConvergence { .. }
                | Error::EmptyWindow { .. }
                | Error::IndexOutOfWindow { .. }
                | Error::SingularSigma { .. }
                | Error::AllCandidatesInfeasible
                | Error::TooFewCandidates { .. }
                | Error::FlatCurve { .. }
        )
    }
}

pub(crate) trait ResultExt<T> {
    fn stage(self, stage: &str) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn stage(self, stage: &str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}

/// A recoverable degradation recorded in reports instead of failing a run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// `m̂` is not strictly monotone on the grid; the pseudo-inverse is used.
    NonMonotone { series: usize },
    /// An inversion target fell outside the range of `m̂` and was clamped.
    OutOfRange { series: usize, value: f64, clamped_to: f64 },
    /// Negative eigenvalues of a covariance estimate were clipped at zero.
    PsdClipped { count: usize },
    /// Rows whose design argument left its domain were clamped.
    DomainClamped { series: usize, rows: usize },
    /// A selected bandwidth was pulled back into the admissible range.
    BandwidthClamped { series: usize, requested: f64, used: f64 },
}
