//! Fiberwise construction of the level surface `H = h⁻¹(e)`.
//!
//! Everything is computed on jets in the chart `(q1, q2, u)`: the covector
//! curve `λ(q, u)`, the coefficients of `s_uu = A s + B s_u`, the natural
//! density `θ' = √(−A)`, the invariant `b`, and the fields `h⃗ = (f, u̇)`,
//! `v = (0, 0, 1/θ')`. A jet of degree `d` for `f` yields `λ` to degree
//! `d − 1`, `A`, `B`, `θ'` and `v` to `d − 3`, `h⃗` to `d − 2` and `b` to `d − 4`.

use crate::jets::{wedge, Jet};
use crate::system::{Dynamics, REGULARITY_BAND};
use crate::{Error, Real, Result};

/// Jet degree used when the caller does not ask for one. It is the smallest
/// degree at which every invariant of the crate (down to `L_h L_h b` and
/// `c''`) still has a constant term.
pub const DEFAULT_DEGREE: usize = 6;

/// Smallest degree accepted by [`FiberJets::new`].
pub const MIN_FIBER_DEGREE: usize = 4;

fn base_point<T: Real>(q: [T; 2], u: T) -> [f64; 3] {
    [q[0].as_f64(), q[1].as_f64(), u.as_f64()]
}

fn regularity_error<T: Real>(q: [T; 2], u: T, reason: impl Into<String>) -> Error {
    let b = base_point(q, u);
    Error::regularity([b[0], b[1]], b[2], reason)
}

/// `f`, `φ` and the covector `λ` at one point, all as jets.
#[derive(Debug, Clone)]
struct CovectorStage<T: Real> {
    f: [Jet<T>; 2],
    phi: Jet<T>,
    /// degree `d − 1`
    lambda: [Jet<T>; 2],
}

fn covector_stage<T: Real, P: Dynamics<T> + ?Sized>(p: &P, q: [T; 2], u: T, degree: usize) -> Result<CovectorStage<T>> {
    if degree == 0 {
        return Err(Error::Invalid("covector jets need degree at least 1".into()));
    }
    let v = Jet::variables(&[q[0], q[1], u], degree)?;
    let [f1, f2, phi] = p.eval_jets(&v[0], &v[1], &v[2])?;
    let f = [f1, f2];
    let fu = [f[0].derivative(2)?, f[1].derivative(2)?];
    let phi_u = phi.derivative(2)?;
    let d1 = degree - 1;
    let ft = [f[0].truncate(d1), f[1].truncate(d1)];
    let det = wedge(&ft, &fu);
    let fv = [ft[0].value(), ft[1].value()];
    let fuv = [fu[0].value(), fu[1].value()];
    let scale = fv[0].hypot(fv[1]) * fuv[0].hypot(fuv[1]) + T::one();
    if !(det.value().abs() > T::lit(REGULARITY_BAND) * scale) {
        return Err(regularity_error(q, u, format!("f ∧ f_u = {} vanishes", det.value())));
    }
    let rhs = phi.truncate(d1) + p.energy();
    let lambda = [
        (&rhs * &fu[1] - &ft[1] * &phi_u).try_div(&det)?,
        (&ft[0] * &phi_u - &fu[0] * &rhs).try_div(&det)?,
    ];
    if lambda[0].value() == T::zero() && lambda[1].value() == T::zero() {
        return Err(regularity_error(q, u, "covector vanishes"));
    }
    Ok(CovectorStage { f, phi, lambda })
}

/// `u̇` from the adjoint equation `λ_q f + λ_u u̇ = −∂_q(⟨λ, f⟩ − φ)`, as a
/// jet of degree `d − 2`.
fn adjoint_control_rate<T: Real>(st: &CovectorStage<T>, q: [T; 2], u: T) -> Result<Jet<T>> {
    let lam = &st.lambda;
    let lam_u = [lam[0].derivative(2)?, lam[1].derivative(2)?];
    let mut rhs: Vec<Jet<T>> = Vec::with_capacity(2);
    for i in 0..2 {
        let h_qi = &(&lam[0] * &st.f[0].derivative(i)?) + &(&lam[1] * &st.f[1].derivative(i)?) - st.phi.derivative(i)?;
        let transport = &lam[i].derivative(0)? * &st.f[0] + &lam[i].derivative(1)? * &st.f[1];
        rhs.push(-(h_qi + transport));
    }
    let pick = if lam_u[0].value().abs() >= lam_u[1].value().abs() { 0 } else { 1 };
    let other = 1 - pick;
    let udot = rhs[pick].try_div(&lam_u[pick]).map_err(|_| regularity_error(q, u, "λ_u vanishes"))?;
    let residual = (rhs[other].value() - lam_u[other].value() * udot.value()).abs();
    let scale = T::one() + rhs[0].value().abs() + rhs[1].value().abs() + (lam_u[other].value() * udot.value()).abs();
    let tolerance = T::lit(1e-8) * scale;
    if !(residual <= tolerance) {
        return Err(Error::InconsistentAdjoint {
            residual: residual.as_f64(),
            tolerance: tolerance.as_f64(),
        });
    }
    Ok(udot)
}

/// Full fiber pipeline at one point.
#[derive(Debug, Clone)]
pub struct FiberJets<T: Real> {
    pub q: [T; 2],
    pub u: T,
    pub degree: usize,
    /// `f` and `φ`, degree `d`
    pub f: [Jet<T>; 2],
    pub phi: Jet<T>,
    /// degree `d − 1`
    pub lambda: [Jet<T>; 2],
    /// degree `d − 2`
    pub lambda_u: [Jet<T>; 2],
    /// degree `d − 3`
    pub a: Jet<T>,
    pub b_coef: Jet<T>,
    pub theta_prime: Jet<T>,
    /// degree `d − 4`
    pub b: Jet<T>,
    /// degree `d − 2`
    pub udot: Jet<T>,
}

impl<T: Real> FiberJets<T> {
    pub fn new<P: Dynamics<T> + ?Sized>(p: &P, q: [T; 2], u: T, degree: usize) -> Result<Self> {
        if degree < MIN_FIBER_DEGREE {
            return Err(Error::Invalid(format!(
                "fiber jets need degree at least {MIN_FIBER_DEGREE}, got {degree}"
            )));
        }
        let st = covector_stage(p, q, u, degree)?;
        let (a, b_coef, theta_prime, lambda_u) = vertical_stage(&st.lambda, q, u)?;
        let a_u = a.derivative(2)?;
        let b = (&b_coef - &a_u.try_div(&(&a * T::lit(2.0)))?).try_div(&theta_prime)?;
        let udot = adjoint_control_rate(&st, q, u)?;
        Ok(FiberJets {
            q,
            u,
            degree,
            f: st.f,
            phi: st.phi,
            lambda: st.lambda,
            lambda_u,
            a,
            b_coef,
            theta_prime,
            b,
            udot,
        })
    }

    /// `h⃗ = (f1, f2, u̇)`, degree `d − 2`.
    pub fn h(&self) -> [Jet<T>; 3] {
        let d = self.udot.degree();
        [self.f[0].truncate(d), self.f[1].truncate(d), self.udot.clone()]
    }

    /// `v = (0, 0, 1/θ')`, degree `d − 3`.
    pub fn v(&self) -> Result<[Jet<T>; 3]> {
        let z = self.theta_prime.zero_like();
        Ok([z.clone(), z, self.theta_prime.recip()?])
    }

    pub fn frame(&self) -> Result<FrameFields<T>> {
        Ok(FrameFields { h: self.h(), v: self.v()? })
    }

    pub fn point(&self) -> FiberPoint<T> {
        FiberPoint {
            q: self.q,
            u: self.u,
            lambda: [self.lambda[0].value(), self.lambda[1].value()],
            a: self.a.value(),
            b_coef: self.b_coef.value(),
            theta_prime: self.theta_prime.value(),
            b: self.b.value(),
        }
    }

    /// `⟨λ, f⟩ − φ − e` at the base point.
    pub fn level_residual(&self, energy: T) -> T {
        self.lambda[0].value() * self.f[0].value() + self.lambda[1].value() * self.f[1].value()
            - self.phi.value()
            - energy
    }

    /// `⟨λ, f_u⟩ − φ_u` at the base point.
    pub fn stationarity_residual(&self) -> Result<T> {
        let fu = [self.f[0].derivative(2)?, self.f[1].derivative(2)?];
        Ok(self.lambda[0].value() * fu[0].value() + self.lambda[1].value() * fu[1].value()
            - self.phi.derivative(2)?.value())
    }
}

/// `(A, B, θ', λ_u)` from the covector jet.
fn vertical_stage<T: Real>(lambda: &[Jet<T>; 2], q: [T; 2], u: T) -> Result<(Jet<T>, Jet<T>, Jet<T>, [Jet<T>; 2])> {
    let lam_u = [lambda[0].derivative(2)?, lambda[1].derivative(2)?];
    let lam_uu = [lam_u[0].derivative(2)?, lam_u[1].derivative(2)?];
    let basis = wedge(lambda, &lam_u);
    if basis.value() == T::zero() {
        return Err(regularity_error(q, u, "λ ∧ λ_u vanishes"));
    }
    let a = wedge(&lam_uu, &lam_u).try_div(&basis)?;
    let b = wedge(lambda, &lam_uu).try_div(&basis)?;
    if !(a.value() < T::zero()) {
        return Err(regularity_error(q, u, format!("fiber not strictly convex (A = {})", a.value())));
    }
    let theta_prime = (-&a).sqrt()?;
    Ok((a, b, theta_prime, lam_u))
}

/// Scalar summary of the fiber at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberPoint<T> {
    pub q: [T; 2],
    pub u: T,
    pub lambda: [T; 2],
    /// `A` in `s_uu = A s + B s_u`
    pub a: T,
    /// `B` in `s_uu = A s + B s_u`
    pub b_coef: T,
    pub theta_prime: T,
    pub b: T,
}

/// The Hamiltonian and vertical fields in the chart `(q1, q2, u)`.
#[derive(Debug, Clone)]
pub struct FrameFields<T: Real> {
    pub h: [Jet<T>; 3],
    pub v: [Jet<T>; 3],
}

impl<T: Real> FrameFields<T> {
    pub fn h_value(&self) -> [T; 3] {
        [self.h[0].value(), self.h[1].value(), self.h[2].value()]
    }

    pub fn v_value(&self) -> [T; 3] {
        [self.v[0].value(), self.v[1].value(), self.v[2].value()]
    }
}

pub fn fiber_point<T: Real, P: Dynamics<T> + ?Sized>(p: &P, q: [T; 2], u: T) -> Result<FiberPoint<T>> {
    Ok(FiberJets::new(p, q, u, MIN_FIBER_DEGREE)?.point())
}

/// `λ` solving `⟨λ, f⟩ = e + φ`, `⟨λ, f_u⟩ = φ_u`.
pub fn solve_covector<T: Real, P: Dynamics<T> + ?Sized>(p: &P, q: [T; 2], u: T) -> Result<[T; 2]> {
    let st = covector_stage(p, q, u, 1)?;
    Ok([st.lambda[0].value(), st.lambda[1].value()])
}

/// `(A, B)` with `λ_uu = A λ + B λ_u`.
pub fn vertical_coefficients<T: Real, P: Dynamics<T> + ?Sized>(p: &P, q: [T; 2], u: T) -> Result<(T, T)> {
    let st = covector_stage(p, q, u, 3)?;
    let (a, b, _, _) = vertical_stage(&st.lambda, q, u)?;
    Ok((a.value(), b.value()))
}

/// `θ' = √(−A)`.
pub fn natural_density<T: Real, P: Dynamics<T> + ?Sized>(p: &P, q: [T; 2], u: T) -> Result<T> {
    let st = covector_stage(p, q, u, 3)?;
    Ok(vertical_stage(&st.lambda, q, u)?.2.value())
}

/// The invariant `b`, with `L_v² s = −s + b L_v s`.
pub fn invariant_b<T: Real, P: Dynamics<T> + ?Sized>(p: &P, q: [T; 2], u: T) -> Result<T> {
    Ok(FiberJets::new(p, q, u, MIN_FIBER_DEGREE)?.b.value())
}

/// `u̇` along the Hamiltonian flow.
pub fn control_derivative<T: Real, P: Dynamics<T> + ?Sized>(p: &P, q: [T; 2], u: T) -> Result<T> {
    Ok(hamiltonian_field(p, q, u)?[2])
}

/// `h⃗(q, u) = (f1, f2, u̇)` from the cheapest jets that determine it.
pub fn hamiltonian_field<T: Real, P: Dynamics<T> + ?Sized>(p: &P, q: [T; 2], u: T) -> Result<[T; 3]> {
    let st = covector_stage(p, q, u, 2)?;
    let udot = adjoint_control_rate(&st, q, u)?;
    Ok([st.f[0].value(), st.f[1].value(), udot.value()])
}

/// `h⃗` and `v` as jets of at least the requested degree.
pub fn frame_fields<T: Real, P: Dynamics<T> + ?Sized>(p: &P, q: [T; 2], u: T, degree: usize) -> Result<FrameFields<T>> {
    let fj = FiberJets::new(p, q, u, (degree + 3).max(MIN_FIBER_DEGREE))?;
    let fr = fj.frame()?;
    Ok(FrameFields {
        h: fr.h.map(|j| j.truncate(degree)),
        v: fr.v.map(|j| j.truncate(degree)),
    })
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

const QUADRATURE_START: usize = 32;
const QUADRATURE_MAX: usize = 2048;
const QUADRATURE_TOL: f64 = 1e-10;

/// The natural parameter, its chart, and the function `c`, as jets in
/// `(q1, q2, u)`.
#[derive(Debug, Clone)]
pub struct CFunction<T: Real> {
    /// `θ(q, u) = ∫_{u0}^{u} θ'(q, τ) dτ`, degree `d − 3`
    pub theta: Jet<T>,
    /// degree `d − 4`
    pub c: Jet<T>,
    /// Gauss–Legendre points used on the anchor arc.
    pub nodes: usize,
}

impl<T: Real> CFunction<T> {
    /// `c' = ∂c/∂θ = (1/θ') ∂c/∂u`.
    pub fn c_prime(&self, fiber: &FiberJets<T>) -> Result<Jet<T>> {
        Ok(self.c.derivative(2)?.try_div(&fiber.theta_prime)?)
    }
}

/// Builds `θ` and `c` around the fiber point of `fiber`, anchoring `θ = 0`
/// at `u = anchor` on every fiber.
pub fn c_function<T: Real, P: Dynamics<T> + ?Sized>(p: &P, fiber: &FiberJets<T>, anchor: T) -> Result<CFunction<T>> {
    let (q, u) = (fiber.q, fiber.u);
    p.admissible(q, u)?;
    let d = fiber.degree;
    let (arc, nodes) = anchor_arc(p, q, u, anchor, d)?;
    let local = fiber.theta_prime.antiderivative(2)?.truncate(d - 3);
    let theta = &arc + &local;
    let theta_u = fiber.theta_prime.truncate(d - 4);
    let theta_q = [theta.derivative(0)?, theta.derivative(1)?];
    let lam = &fiber.lambda;
    let lam_u = &fiber.lambda_u;
    // λ̃_{i, q_j} = λ_{i, q_j} − λ_{i, u} θ_{q_j} / θ_u
    let tilde = |i: usize, j: usize| -> Result<Jet<T>> {
        Ok(&lam[i].derivative(j)? - &(&lam_u[i] * &theta_q[j]).try_div(&theta_u)?)
    };
    let curl = &tilde(1, 0)? - &tilde(0, 1)?;
    let denom = wedge(lam, lam_u).try_div(&theta_u)?;
    let c = curl.try_div(&denom)?;
    Ok(CFunction { theta, c, nodes })
}

/// `Q(δq) = ∫_{anchor}^{u} θ'(q + δq, τ) dτ` as a jet independent of `δu`.
fn anchor_arc<T: Real, P: Dynamics<T> + ?Sized>(p: &P, q: [T; 2], u: T, anchor: T, d: usize) -> Result<(Jet<T>, usize)> {
    let zero = Jet::constant(T::zero(), d - 3, 3)?;
    if u == anchor {
        return Ok((zero, 0));
    }
    let integrate = |n: usize| -> Result<Jet<T>> {
        let (x, w) = gauss_legendre(n);
        let half = (u - anchor) * T::lit(0.5);
        let mid = (u + anchor) * T::lit(0.5);
        let mut acc = zero.clone();
        for (xi, wi) in x.iter().zip(&w) {
            let tau = mid + half * T::lit(*xi);
            let st = covector_stage(p, q, tau, d)?;
            let density = vertical_stage(&st.lambda, q, tau)?.2.restrict_to_base(2);
            acc = acc + density * (half * T::lit(*wi));
        }
        Ok(acc)
    };
    let mut n = QUADRATURE_START;
    let mut prev = integrate(n)?;
    loop {
        let next = integrate(2 * n)?;
        let change = (&next - &prev).max_abs();
        if change < T::lit(QUADRATURE_TOL) * (T::one() + next.max_abs()) {
            return Ok((next, 2 * n));
        }
        if 2 * n >= QUADRATURE_MAX {
            return Err(Error::Quadrature { change: change.as_f64() });
        }
        n *= 2;
        prev = next;
    }
}

/// Value of `c` at a point.
pub fn function_c<T: Real, P: Dynamics<T> + ?Sized>(p: &P, q: [T; 2], u: T, anchor: T) -> Result<T> {
    let fiber = FiberJets::new(p, q, u, MIN_FIBER_DEGREE)?;
    Ok(c_function(p, &fiber, anchor)?.c.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::ControlProblem;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 32] {
            let (x, w) = gauss_legendre(n);
            let total: f64 = w.iter().sum();
            assert!(close(total, 2.0, 1e-13), "n={n}");
            let deg = 2 * n - 1;
            let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!(close(approx, exact, 1e-13), "n={n}: {approx} vs {exact}");
        }
    }

    #[test]
    fn euclidean_fiber() {
        let p = ControlProblem::parse("cos(u)", "sin(u)").unwrap();
        let u = 0.7f64;
        let lam = solve_covector(&p, [0.3, -1.0], u).unwrap();
        assert!(close(lam[0], u.cos(), 1e-15) && close(lam[1], u.sin(), 1e-15));
        let (a, b) = vertical_coefficients(&p, [0.3, -1.0], u).unwrap();
        assert!(close(a, -1.0, 1e-14) && close(b, 0.0, 1e-14));
        assert!(close(natural_density(&p, [0.0, 0.0], u).unwrap(), 1.0, 1e-14));
        assert!(close(invariant_b(&p, [0.0, 0.0], u).unwrap(), 0.0, 1e-14));
        assert_eq!(control_derivative(&p, [0.0, 0.0], u).unwrap(), 0.0);
        let fr = frame_fields(&p, [0.0, 0.0], u, 2).unwrap();
        let h = fr.h_value();
        assert!(close(h[0], u.cos(), 1e-15) && close(h[1], u.sin(), 1e-15) && h[2] == 0.0);
        assert_eq!(fr.v_value(), [0.0, 0.0, 1.0]);
        assert_eq!(function_c(&p, [0.2, 0.1], u, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn constant_drift_covector() {
        let p = ControlProblem::parse("0.5 + cos(u)", "sin(u)").unwrap();
        let lam = solve_covector(&p, [0.0, 0.0], 0.0f64).unwrap();
        assert!(close(lam[0], 2.0 / 3.0, 1e-15) && close(lam[1], 0.0, 1e-15));
    }

    #[test]
    fn zermelo_density_and_control_rate() {
        // X = (0.3 sin q2, 0.2 cos q1)
        let p = ControlProblem::parse("0.3*sin(q2) + cos(u)", "0.2*cos(q1) + sin(u)").unwrap();
        for &(q, u) in &[([0.4, -0.7], 0.3), ([1.3, 2.0], 2.9), ([-0.5, 0.1], 5.0)] {
            let [q1, q2]: [f64; 2] = q;
            let x = [0.3 * q2.sin(), 0.2 * q1.cos()];
            let (a, _) = vertical_coefficients(&p, q, u).unwrap();
            let s = x[0] * u.cos() + x[1] * u.sin() + 1.0;
            assert!(close(a, -1.0 / s, 1e-13));
            let fr = frame_fields(&p, q, u, 1).unwrap();
            assert!(close(fr.v_value()[2], s.sqrt(), 1e-13));
            // u̇ = −⟨D_qX (−sin u, cos u), (cos u, sin u)⟩
            let dx = [[0.0, 0.3 * q2.cos()], [-0.2 * q1.sin(), 0.0]];
            let w = [-u.sin(), u.cos()];
            let dxw = [dx[0][0] * w[0] + dx[0][1] * w[1], dx[1][0] * w[0] + dx[1][1] * w[1]];
            let expected = -(dxw[0] * u.cos() + dxw[1] * u.sin());
            assert!(close(control_derivative(&p, q, u).unwrap(), expected, 1e-12));
        }
    }

    #[test]
    fn fiber_point_invariants() {
        let p = ControlProblem::builder(
            "(1 + 0.1*q1^2) * cos(u) + 0.2".parse().unwrap(),
            "(2 + sin(q2)) * sin(u)".parse().unwrap(),
        )
        .phi("1 + 0.1*cos(u)".parse().unwrap())
        .energy(0.3)
        .build()
        .unwrap();
        let fj = FiberJets::<f64>::new(&p, [0.2, 0.4], 1.1, 6).unwrap();
        assert!(fj.level_residual(0.3).abs() < 1e-14);
        assert!(fj.stationarity_residual().unwrap().abs() < 1e-14);
        assert!(fj.point().a < 0.0);
    }

    #[test]
    fn degenerate_points_are_reported() {
        let p = ControlProblem::parse("1", "u").unwrap();
        let err = vertical_coefficients(&p, [0.0, 0.0], 0.2f64).unwrap_err();
        assert!(err.is_regularity(), "{err}");
        let low = FiberJets::new(&ControlProblem::parse("cos(u)", "sin(u)").unwrap(), [0.0, 0.0], 0.0f64, 3);
        assert!(low.is_err());
    }
}
