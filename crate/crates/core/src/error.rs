use nalgebra::DVector;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("member {member}: {message}")]
    Member { member: usize, message: String },

    #[error("member index {index} out of range (N = {count})")]
    MemberIndex { index: usize, count: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("operator is not strongly monotone: smallest eigenvalue {eigenvalue:.3e} ({map})")]
    NonMonotone { map: &'static str, eigenvalue: f64 },

    #[error("unsupported cost family for {op}: {family}")]
    UnsupportedFamily { op: &'static str, family: &'static str },

    #[error("polyhedron is infeasible: constraint {constraint} cannot be satisfied")]
    Infeasible {
        constraint: usize,
        /// Nonnegative combination of constraint rows certifying emptiness.
        certificate: DVector<f64>,
    },

    #[error("polyhedron validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("degenerate active set (rank {rank} < {rows} active rows); use the conservative Jacobian")]
    DegenerateActiveSet { rank: usize, rows: usize },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        best: Option<DVector<f64>>,
        trace: Vec<f64>,
    },

    #[error("{solver} stagnated at residual {residual:.3e} after {iterations} iterations")]
    Stagnation {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("sensitivity recursion is not contracting (step norm {step_norm:.3e} at sweep {sweep})")]
    NonContracting { sweep: usize, step_norm: f64 },

    #[error("singular KKT system: {0}")]
    SingularKkt(String),

    #[error("adjustment lies outside the mediator set: constraint {constraint} violated by {violation:.3e}")]
    OutsideMediatorSet { constraint: usize, violation: f64 },

    #[error("mediator objective diverged: psi {psi:.3e} exceeds 10x initial {initial:.3e}; reduce the stepsize")]
    Diverged { psi: f64, initial: f64 },

    #[error("deviation bound is vacuous: kappa1 = {0:.3e}")]
    VacuousBound(f64),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("empty point set")]
    EmptySet,

    #[error("network error: {0}")]
    Network(String),

    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures map to CLI exit code 2, everything else to 1.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::Stagnation { .. }
                | Error::NonContracting { .. }
                | Error::Diverged { .. }
        )
    }

    pub(crate) fn dim(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            actual,
        }
    }
}
