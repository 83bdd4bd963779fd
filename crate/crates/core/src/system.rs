//! Control problems `q' = f(q, u)` with cost `φ(q, u)` and energy level `e`,
//! regularity checks and feedback transformations.

use std::collections::BTreeMap;

use crate::exprs::{parse, Env, Expr, Var};
use crate::jets::{wedge, Jet};
use crate::{Error, Real, Result};

/// Admissible control set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlDomain {
    /// `u ∈ [0, 2π)` with periodic wrap.
    Circle,
    Interval { lo: f64, hi: f64 },
}

impl ControlDomain {
    pub fn is_periodic(&self) -> bool {
        matches!(self, ControlDomain::Circle)
    }

    /// Canonical representative of `u` (wrapped into `[0, 2π)` on the circle).
    pub fn wrap<T: Real>(&self, u: T) -> T {
        match self {
            ControlDomain::Circle => {
                let tau = T::PI() + T::PI();
                let r = u % tau;
                if r < T::zero() {
                    r + tau
                } else {
                    r
                }
            }
            ControlDomain::Interval { .. } => u,
        }
    }
}

/// Anything that evaluates `(f1, f2, φ)` over jets.
///
/// Implementors must accept arbitrary jets in three variables (not only the
/// coordinate functions) so that problems compose with changes of variables.
pub trait Dynamics<T: Real>: Send + Sync {
    fn eval_jets(&self, q1: &Jet<T>, q2: &Jet<T>, u: &Jet<T>) -> Result<[Jet<T>; 3]>;

    fn energy(&self) -> T;

    fn control_domain(&self) -> ControlDomain;

    /// Problem-specific admissibility of a point beyond the regularity
    /// conditions, e.g. the Zermelo drift bound. Grid sweeps call this;
    /// extremal integration only needs local regularity.
    fn admissible(&self, _q: [T; 2], _u: T) -> Result<()> {
        Ok(())
    }

    /// `(f1, f2, φ)` at a point.
    fn eval_point(&self, q: [T; 2], u: T) -> Result<[T; 3]> {
        let v = Jet::variables(&[q[0], q[1], u], 0)?;
        let out = self.eval_jets(&v[0], &v[1], &v[2])?;
        Ok([out[0].value(), out[1].value(), out[2].value()])
    }
}

impl<T: Real, D: Dynamics<T> + ?Sized> Dynamics<T> for &D {
    fn eval_jets(&self, q1: &Jet<T>, q2: &Jet<T>, u: &Jet<T>) -> Result<[Jet<T>; 3]> {
        (**self).eval_jets(q1, q2, u)
    }
    fn energy(&self) -> T {
        (**self).energy()
    }
    fn control_domain(&self) -> ControlDomain {
        (**self).control_domain()
    }
    fn admissible(&self, q: [T; 2], u: T) -> Result<()> {
        (**self).admissible(q, u)
    }
}

/// Optimal control problem given by expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlProblem {
    f: [Expr; 2],
    phi: Expr,
    domain: ControlDomain,
    energy: f64,
    params: BTreeMap<String, f64>,
    bound: [Expr; 3],
    drift: Option<[Expr; 2]>,
}

impl ControlProblem {
    pub fn new(f1: Expr, f2: Expr) -> Result<Self> {
        ControlProblemBuilder::new(f1, f2).build()
    }

    pub fn builder(f1: Expr, f2: Expr) -> ControlProblemBuilder {
        ControlProblemBuilder::new(f1, f2)
    }

    /// Time-optimal problem on the circle from expression sources.
    pub fn parse(f1: &str, f2: &str) -> Result<Self> {
        Self::new(parse(f1)?, parse(f2)?)
    }

    pub fn f(&self) -> &[Expr; 2] {
        &self.f
    }

    pub fn phi(&self) -> &Expr {
        &self.phi
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// `(f1, f2, φ)` with parameters substituted.
    pub fn bound_exprs(&self) -> &[Expr; 3] {
        &self.bound
    }

    pub fn domain(&self) -> ControlDomain {
        self.domain
    }

    pub fn energy_level(&self) -> f64 {
        self.energy
    }

    pub fn drift(&self) -> Option<&[Expr; 2]> {
        self.drift.as_ref()
    }

    /// Attaches a drift field whose magnitude must stay below 1 at queried
    /// points (Zermelo problems).
    pub fn with_drift_bound(mut self, drift: [Expr; 2]) -> Result<Self> {
        self.drift = Some([drift[0].bind_params(&self.params)?, drift[1].bind_params(&self.params)?]);
        Ok(self)
    }

    pub fn with_domain(mut self, domain: ControlDomain) -> Self {
        self.domain = domain;
        self
    }
}

#[derive(Debug, Clone)]
pub struct ControlProblemBuilder {
    f: [Expr; 2],
    phi: Expr,
    domain: ControlDomain,
    energy: f64,
    params: BTreeMap<String, f64>,
}

impl ControlProblemBuilder {
    pub fn new(f1: Expr, f2: Expr) -> Self {
        ControlProblemBuilder {
            f: [f1, f2],
            phi: Expr::Num(1.0),
            domain: ControlDomain::Circle,
            energy: 0.0,
            params: BTreeMap::new(),
        }
    }

    pub fn phi(mut self, phi: Expr) -> Self {
        self.phi = phi;
        self
    }

    pub fn domain(mut self, domain: ControlDomain) -> Self {
        self.domain = domain;
        self
    }

    pub fn energy(mut self, e: f64) -> Self {
        self.energy = e;
        self
    }

    pub fn param(mut self, name: impl Into<String>, value: f64) -> Self {
        self.params.insert(name.into(), value);
        self
    }

    pub fn params(mut self, params: BTreeMap<String, f64>) -> Self {
        self.params.extend(params);
        self
    }

    pub fn build(self) -> Result<ControlProblem> {
        let bound = [
            self.f[0].bind_params(&self.params)?,
            self.f[1].bind_params(&self.params)?,
            self.phi.bind_params(&self.params)?,
        ];
        if let ControlDomain::Interval { lo, hi } = self.domain {
            if !(lo < hi) {
                return Err(Error::Invalid(format!("empty control interval [{lo}, {hi}]")));
            }
        }
        Ok(ControlProblem {
            f: self.f,
            phi: self.phi,
            domain: self.domain,
            energy: self.energy,
            params: self.params,
            bound,
            drift: None,
        })
    }
}

impl<T: Real> Dynamics<T> for ControlProblem {
    fn eval_jets(&self, q1: &Jet<T>, q2: &Jet<T>, u: &Jet<T>) -> Result<[Jet<T>; 3]> {
        let env = Env::state(q1.clone(), q2.clone(), u.clone());
        Ok([
            self.bound[0].eval(&env)?,
            self.bound[1].eval(&env)?,
            self.bound[2].eval(&env)?,
        ])
    }

    fn energy(&self) -> T {
        T::lit(self.energy)
    }

    fn control_domain(&self) -> ControlDomain {
        self.domain
    }

    fn admissible(&self, q: [T; 2], u: T) -> Result<()> {
        if let Some(drift) = &self.drift {
            let x1 = drift[0].eval_at(&q[0], &q[1], &u)?;
            let x2 = drift[1].eval_at(&q[0], &q[1], &u)?;
            let magnitude = x1.hypot(x2);
            if !(magnitude < T::one()) {
                return Err(Error::DriftTooStrong {
                    q1: q[0].as_f64(),
                    q2: q[1].as_f64(),
                    magnitude: magnitude.as_f64(),
                });
            }
        }
        Ok(())
    }
}

/// Relative band below which a determinant counts as zero.
pub const REGULARITY_BAND: f64 = 1e-9;

/// Outcome of the pointwise regularity test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityReport<T> {
    /// `f ∧ ∂f/∂u`
    pub det_f_fu: T,
    /// `∂f/∂u ∧ ∂²f/∂u²`
    pub det_fu_fuu: T,
    pub first_ok: bool,
    pub second_ok: bool,
}

impl<T> RegularityReport<T> {
    pub fn is_ok(&self) -> bool {
        self.first_ok && self.second_ok
    }
}

pub fn check_regularity<T: Real, P: Dynamics<T> + ?Sized>(
    p: &P,
    q: [T; 2],
    u: T,
) -> Result<RegularityReport<T>> {
    let v = Jet::variables(&[q[0], q[1], u], 2)?;
    let [f1, f2, _] = p.eval_jets(&v[0], &v[1], &v[2])?;
    let f = [f1, f2];
    let fu = [f[0].derivative(2)?, f[1].derivative(2)?];
    let fuu = [fu[0].derivative(2)?, fu[1].derivative(2)?];
    let val = |j: &[Jet<T>; 2]| [j[0].value(), j[1].value()];
    let (fv, fuv, fuuv) = (val(&f), val(&fu), val(&fuu));
    let norm = |x: [T; 2]| x[0].hypot(x[1]);
    let band = T::lit(REGULARITY_BAND);
    let det_f_fu = wedge(&f, &fu).value();
    let det_fu_fuu = wedge(&fu, &fuu).value();
    Ok(RegularityReport {
        det_f_fu,
        det_fu_fuu,
        first_ok: det_f_fu.abs() > band * (norm(fv) * norm(fuv) + T::one()),
        second_ok: det_fu_fuu > band * (norm(fuv) * norm(fuuv) + T::one()),
    })
}

/// A feedback transformation `Θ(q, u) = (φ(q), ψ(q, u))`.
///
/// `phi_inverse` maps transformed states back; `psi_inverse` gives the
/// original control as a function of the *transformed* state and control.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackTransform {
    pub phi: [Expr; 2],
    pub psi: Expr,
    pub phi_inverse: Option<[Expr; 2]>,
    pub psi_inverse: Option<Expr>,
}

impl FeedbackTransform {
    pub fn identity() -> Self {
        let q1 = Expr::Var(Var::Q1);
        let q2 = Expr::Var(Var::Q2);
        let u = Expr::Var(Var::U);
        FeedbackTransform {
            phi: [q1.clone(), q2.clone()],
            psi: u.clone(),
            phi_inverse: Some([q1, q2]),
            psi_inverse: Some(u),
        }
    }

    /// Affine state map `q ↦ M q + c` (with `det M ≠ 0`) combined with the
    /// pure feedback `ψ`; the state inverse is generated exactly.
    pub fn affine(m: [[f64; 2]; 2], c: [f64; 2], psi: Expr, psi_inverse: Option<Expr>) -> Result<Self> {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det == 0.0 {
            return Err(Error::Invalid("singular affine state map".into()));
        }
        let q = [Expr::Var(Var::Q1), Expr::Var(Var::Q2)];
        let row = |r: [f64; 2], shift: f64| {
            Expr::add(
                Expr::add(Expr::mul(Expr::Num(r[0]), q[0].clone()), Expr::mul(Expr::Num(r[1]), q[1].clone())),
                Expr::Num(shift),
            )
        };
        let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
        let inv_shift = [
            -(inv[0][0] * c[0] + inv[0][1] * c[1]),
            -(inv[1][0] * c[0] + inv[1][1] * c[1]),
        ];
        Ok(FeedbackTransform {
            phi: [row(m[0], c[0]), row(m[1], c[1])],
            psi,
            phi_inverse: Some([row(inv[0], inv_shift[0]), row(inv[1], inv_shift[1])]),
            psi_inverse,
        })
    }

    /// The inverse transformation, when both inverse maps are known.
    pub fn inverse(&self) -> Option<FeedbackTransform> {
        Some(FeedbackTransform {
            phi: self.phi_inverse.clone()?,
            psi: self.psi_inverse.clone()?,
            phi_inverse: Some(self.phi.clone()),
            psi_inverse: Some(self.psi.clone()),
        })
    }
}

/// Applies `Θ` to a point.
pub fn correspond_point<T: Real>(t: &FeedbackTransform, q: [T; 2], u: T) -> Result<([T; 2], T)> {
    let q1 = t.phi[0].eval_at(&q[0], &q[1], &u)?;
    let q2 = t.phi[1].eval_at(&q[0], &q[1], &u)?;
    let v = t.psi.eval_at(&q[0], &q[1], &u)?;
    Ok(([q1, q2], v))
}

fn jacobian_exprs(phi: &[Expr; 2]) -> [[Expr; 2]; 2] {
    [
        [phi[0].derivative(Var::Q1), phi[0].derivative(Var::Q2)],
        [phi[1].derivative(Var::Q1), phi[1].derivative(Var::Q2)],
    ]
}

/// Transformed problem by expression substitution:
/// `f̃(q̃, ũ) = Dφ(q) f(q, u)` and `φ̃(q̃, ũ) = φ(q, u)` at
/// `(q, u) = (φ⁻¹(q̃), ψ⁻¹(q̃, ũ))`.
pub fn transform_problem(p: &ControlProblem, t: &FeedbackTransform) -> Result<ControlProblem> {
    let (Some(phi_inv), Some(psi_inv)) = (&t.phi_inverse, &t.psi_inverse) else {
        return Err(Error::Invalid("feedback transform lacks inverse expressions".into()));
    };
    let [f1, f2, cost] = p.bound_exprs().clone();
    let jac = jacobian_exprs(&t.phi);
    let subs = [Some(&phi_inv[0]), Some(&phi_inv[1]), Some(psi_inv)];
    let new_f = |row: &[Expr; 2]| {
        Expr::add(Expr::mul(row[0].clone(), f1.clone()), Expr::mul(row[1].clone(), f2.clone())).substitute(&subs)
    };
    ControlProblem::builder(new_f(&jac[0]), new_f(&jac[1]))
        .phi(cost.substitute(&subs))
        .domain(p.domain())
        .energy(p.energy_level())
        .build()
}

/// Transformed problem whose control inverse is computed by Newton iteration
/// in jet arithmetic, for pure feedbacks without a closed-form inverse
/// (e.g. `ψ = u + ε sin u`). The state inverse must still be supplied.
pub fn transform_problem_implicit<'a, P: ?Sized>(p: &'a P, t: &FeedbackTransform) -> Result<TransformedProblem<'a, P>> {
    let Some(phi_inv) = &t.phi_inverse else {
        return Err(Error::Invalid("feedback transform lacks the state inverse".into()));
    };
    Ok(TransformedProblem {
        inner: p,
        phi_inverse: phi_inv.clone(),
        jacobian: jacobian_exprs(&t.phi),
        psi: t.psi.clone(),
        psi_u: t.psi.derivative(Var::U),
    })
}

#[derive(Debug, Clone)]
pub struct TransformedProblem<'a, P: ?Sized> {
    inner: &'a P,
    phi_inverse: [Expr; 2],
    jacobian: [[Expr; 2]; 2],
    psi: Expr,
    psi_u: Expr,
}

const NEWTON_MAX_ITER: usize = 60;

impl<P: ?Sized> TransformedProblem<'_, P> {
    fn invert_control<T: Real>(&self, q: &[Jet<T>; 2], target: &Jet<T>) -> Result<Jet<T>> {
        let (q1, q2) = (q[0].value(), q[1].value());
        let goal = target.value();
        let mut u = goal;
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let r = self.psi.eval_at(&q1, &q2, &u)? - goal;
            let d = self.psi_u.eval_at(&q1, &q2, &u)?;
            if d == T::zero() {
                break;
            }
            let step = r / d;
            u = u - step;
            if step.abs() <= T::epsilon() * (T::one() + u.abs()) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Invalid(format!("control inverse did not converge at ũ = {goal}")));
        }
        // Newton in jet arithmetic: each pass at least doubles the number of
        // correct Taylor orders.
        let mut uj = target.lift(u);
        let passes = usize::BITS - target.degree().leading_zeros() + 2;
        for _ in 0..passes {
            let env = Env::state(q[0].clone(), q[1].clone(), uj.clone());
            let r = self.psi.eval(&env)? - target;
            let d = self.psi_u.eval(&env)?;
            uj = &uj - &r.try_div(&d)?;
        }
        Ok(uj)
    }
}

impl<T: Real, P: Dynamics<T> + ?Sized> Dynamics<T> for TransformedProblem<'_, P> {
    fn eval_jets(&self, q1: &Jet<T>, q2: &Jet<T>, u: &Jet<T>) -> Result<[Jet<T>; 3]> {
        let env = Env::state(q1.clone(), q2.clone(), u.clone());
        let q = [self.phi_inverse[0].eval(&env)?, self.phi_inverse[1].eval(&env)?];
        let orig_u = self.invert_control(&q, u)?;
        let [f1, f2, cost] = self.inner.eval_jets(&q[0], &q[1], &orig_u)?;
        let qenv = Env::state(q[0].clone(), q[1].clone(), orig_u);
        let mut out = [f1.zero_like(), f1.zero_like(), cost];
        for (i, row) in self.jacobian.iter().enumerate() {
            out[i] = &row[0].eval(&qenv)? * &f1 + &row[1].eval(&qenv)? * &f2;
        }
        Ok(out)
    }

    fn energy(&self) -> T {
        self.inner.energy()
    }

    fn control_domain(&self) -> ControlDomain {
        self.inner.control_domain()
    }
}
