use crate::exprs::{EvalError, ParseError};
use crate::jets::JetError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    /// A point violates the regularity assumptions on `f`.
    #[error("regularity violated at q = ({q1}, {q2}), u = {u}: {reason}")]
    Regularity { q1: f64, q2: f64, u: f64, reason: String },
    /// Zermelo drift too strong for the indicatrix to surround the origin.
    #[error("drift magnitude {magnitude} >= 1 at q = ({q1}, {q2})")]
    DriftTooStrong { q1: f64, q2: f64, magnitude: f64 },
    #[error("degenerate frame at q = ({q1}, {q2})")]
    DegenerateFrame { q1: f64, q2: f64 },
    #[error("inconsistent adjoint system: residual {residual} exceeds {tolerance}")]
    InconsistentAdjoint { residual: f64, tolerance: f64 },
    #[error("double bracket not collinear with the vertical field: residual {residual}")]
    Collinearity { residual: f64 },
    #[error("quadrature did not converge: last change {change}")]
    Quadrature { change: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("too many steps ({steps}) before reaching t = {target}")]
    TooManySteps { steps: usize, target: f64 },
    #[error("Jacobi formulations disagree by {mismatch}")]
    JacobiMismatch { mismatch: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn regularity(q: [f64; 2], u: f64, reason: impl Into<String>) -> Self {
        Error::Regularity {
            q1: q[0],
            q2: q[1],
            u,
            reason: reason.into(),
        }
    }

    /// Whether the failure is a breakdown of the regularity of the problem
    /// (as opposed to bad input).
    pub fn is_regularity(&self) -> bool {
        matches!(
            self,
            Error::Regularity { .. }
                | Error::DriftTooStrong { .. }
                | Error::DegenerateFrame { .. }
                | Error::InconsistentAdjoint { .. }
                | Error::Collinearity { .. }
                | Error::Jet(JetError::DivisionByZero)
                | Error::Jet(JetError::Domain { .. })
                | Error::Eval(EvalError::Jet(JetError::DivisionByZero))
                | Error::Eval(EvalError::Jet(JetError::Domain { .. }))
        )
    }
}
