use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure classes for the whole library. Variants carry the data a caller
/// needs to act on the failure programmatically (offending point, cone
/// margins, iteration counts), not just prose.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The (possibly deformed) spectrum left the admissible cone. `margins`
    /// holds sigma_1..sigma_k of the tested point; the first non-positive
    /// entry identifies the violated cone inequality.
    #[error("spectrum outside admissible cone (sigma margins {margins:?})")]
    ConeViolation { margins: Vec<f64> },

    #[error(
        "cone sampling budget exhausted: {accepted}/{requested} accepted after {attempts} draws \
         (acceptance rate {rate:.3e})"
    )]
    SamplingBudget {
        requested: usize,
        accepted: usize,
        attempts: usize,
        rate: f64,
    },

    /// A solver iterate violated cone feasibility at a grid point.
    #[error("infeasible iterate at grid point {point:?} (sigma margins {margins:?})")]
    InfeasibleIterate { point: Vec<f64>, margins: Vec<f64> },

    #[error(
        "line search failed at t={t}: no damping factor >= {damping_min} keeps the iterate \
         feasible and decreases the residual (current residual {residual:.3e})"
    )]
    LineSearchFailure {
        t: f64,
        damping_min: f64,
        residual: f64,
    },

    #[error("Newton iteration stalled at t={t}: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence {
        t: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("linear solve stagnated: relative residual {relative_residual:.3e} after {iterations} iterations")]
    LinearSolveFailure {
        iterations: usize,
        relative_residual: f64,
    },

    #[error("continuation stalled at t={last_t} after {bisections} bisections: {source}")]
    ContinuationFailure {
        last_t: f64,
        bisections: usize,
        #[source]
        source: Box<Error>,
    },

    /// A boundary identity was evaluated on data that does not satisfy the
    /// boundary condition it presumes.
    #[error("boundary condition residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    BoundaryConditionViolation { residual: f64, tolerance: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit-code class used by the command-line front end: usage/input errors
    /// are distinguished from numerical failures.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Parameter(_) | Error::Dimension(_) | Error::Io(_))
    }
}
