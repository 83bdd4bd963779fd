//! Feedback-invariant geometry of planar optimal control problems with a
//! scalar control.
//!
//! For a system `q' = f(q, u)` on a two-dimensional state space with cost
//! `∫ φ(q, u) dt`, the crate builds the level surface of the maximized
//! Hamiltonian fiber by fiber, computes the invariants `b` and `κ` (the
//! control curvature), integrates extremals together with the Jacobi
//! equation, detects conjugate times and reports flatness.
//!
//! All numerics are generic over the scalar type ([`Real`], implemented for
//! `f32` and `f64`). Derivatives come from truncated multivariate Taylor
//! jets ([`jets::Jet`]), never from finite differences. The `*64` aliases
//! at the crate root fix the scalar to `f64`, which is what the tolerances
//! quoted throughout the documentation assume.

pub mod error;
pub mod exprs;
pub mod families;
pub mod fiber;
pub mod flow;
pub mod invariants;
pub mod jets;
pub mod ode;
pub mod system;

use std::fmt::{Debug, Display};
use std::iter::Sum;

pub use error::{Error, Result};

/// Scalar field the numerics are generic over.
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Jet64 = jets::Jet<f64>;
pub type Jet32 = jets::Jet<f32>;
pub type FiberPoint64 = fiber::FiberPoint<f64>;
pub type FiberJets64 = fiber::FiberJets<f64>;
pub type CurvatureResult64 = invariants::CurvatureResult<f64>;
pub type FlatnessReport64 = invariants::FlatnessReport<f64>;
pub type ExtremalPath64 = flow::ExtremalPath<f64>;
pub type JacobiSolution64 = flow::JacobiSolution<f64>;
pub type SturmBounds64 = flow::SturmBounds<f64>;

pub use exprs::Expr;
pub use system::{ControlDomain, ControlProblem, Dynamics, FeedbackTransform};
