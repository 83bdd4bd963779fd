//! Extremals of the Hamiltonian field, the Jacobi equation along them,
//! conjugate times and Sturm comparison windows.

use rayon::prelude::*;

use crate::fiber::{hamiltonian_field, DEFAULT_DEGREE};
use crate::invariants::{InvariantJets, COLLINEARITY_LIMIT, MIN_INVARIANT_DEGREE};
use crate::ode::{dormand_prince, OdeOptions, OdeSolution};
use crate::system::{ControlDomain, Dynamics};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremalOptions<T> {
    pub rtol: T,
    pub atol: T,
    pub h_max: Option<T>,
    /// Jet degree for `κ_t` and `b_t`.
    pub degree: usize,
    /// Uniformly spaced samples; the accepted mesh is used when absent.
    pub samples: Option<usize>,
}

impl<T: Real> Default for ExtremalOptions<T> {
    fn default() -> Self {
        ExtremalOptions {
            rtol: T::lit(1e-9),
            atol: T::lit(1e-11),
            h_max: None,
            degree: DEFAULT_DEGREE,
            samples: None,
        }
    }
}

impl<T: Real> ExtremalOptions<T> {
    fn ode(&self) -> OdeOptions<T> {
        OdeOptions {
            rtol: self.rtol,
            atol: self.atol,
            h_max: self.h_max,
            ..OdeOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremalSample<T> {
    pub t: T,
    pub q: [T; 2],
    /// Wrapped into the control domain.
    pub u: T,
    pub kappa: T,
    pub b: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorStats<T> {
    pub accepted: usize,
    pub rejected: usize,
    pub rtol: T,
    pub atol: T,
}

/// Where and why an integration stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFailure<T> {
    pub t: T,
    pub error: Error,
}

#[derive(Debug, Clone)]
pub struct ExtremalPath<T> {
    pub samples: Vec<ExtremalSample<T>>,
    /// Dense solution in `(q1, q2, u)` with `u` unwrapped.
    pub solution: OdeSolution<T, [T; 3]>,
    pub horizon: T,
    pub domain: ControlDomain,
    pub stats: IntegratorStats<T>,
    pub failure: Option<PathFailure<T>>,
    /// Largest `|⟨λ, f⟩ − φ − e|` over the samples.
    pub level_drift: T,
    pub degree: usize,
}

impl<T: Real> ExtremalPath<T> {
    /// Last time with a valid state (the horizon unless the path failed).
    pub fn end_time(&self) -> T {
        match &self.failure {
            Some(f) => f.t,
            None => self.solution.t_end(),
        }
    }

    /// Interpolated `(q1, q2, u)` with `u` unwrapped.
    pub fn state_at(&self, t: T) -> [T; 3] {
        self.solution.interpolate(t).0
    }

    pub fn kappa_range(&self) -> Option<(T, T)> {
        self.samples.iter().fold(None, |acc, s| match acc {
            None => Some((s.kappa, s.kappa)),
            Some((lo, hi)) => Some((lo.min(s.kappa), hi.max(s.kappa))),
        })
    }
}

/// `κ` at a state through the bracket method, with the collinearity guard.
fn kappa_at<T: Real, P: Dynamics<T> + ?Sized>(p: &P, y: &[T; 3], degree: usize) -> Result<InvariantJets<T>> {
    let inv = InvariantJets::new(p, [y[0], y[1]], y[2], degree.max(MIN_INVARIANT_DEGREE))?;
    let res = inv.collinearity_residual();
    if !(res <= T::lit(COLLINEARITY_LIMIT)) {
        return Err(Error::Collinearity { residual: res.as_f64() });
    }
    Ok(inv)
}

/// Integrates `(q', u') = h⃗(q, u)` from `(q0, u0)` over `[0, horizon]`
/// (a negative horizon integrates backward).
///
/// Only a failure at the initial point is an error; a breakdown later on is
/// recorded in [`ExtremalPath::failure`] with the samples up to it.
pub fn integrate_extremal<T: Real, P: Dynamics<T> + ?Sized>(
    p: &P,
    q0: [T; 2],
    u0: T,
    horizon: T,
    opts: &ExtremalOptions<T>,
) -> Result<ExtremalPath<T>> {
    hamiltonian_field(p, q0, u0)?;
    let solution = dormand_prince(
        |_, y: &[T; 3]| hamiltonian_field(p, [y[0], y[1]], y[2]),
        T::zero(),
        [q0[0], q0[1], u0],
        horizon,
        &opts.ode(),
    );
    let mut failure = solution
        .failure
        .clone()
        .map(|(t, error)| PathFailure { t, error });
    let end = solution.t_end();
    let times: Vec<T> = match opts.samples {
        Some(n) if n >= 2 => (0..n)
            .map(|i| end * T::lit(i as f64) / T::lit((n - 1) as f64))
            .collect(),
        _ => solution.ts.clone(),
    };
    let domain = p.control_domain();
    let energy = p.energy();
    let evaluated: Vec<Result<(ExtremalSample<T>, T)>> = times
        .par_iter()
        .map(|&t| {
            let y = solution.interpolate(t).0;
            let inv = kappa_at(p, &y, opts.degree)?;
            Ok((
                ExtremalSample {
                    t,
                    q: [y[0], y[1]],
                    u: domain.wrap(y[2]),
                    kappa: inv.kappa.value(),
                    b: inv.fiber.b.value(),
                },
                inv.fiber.level_residual(energy).abs(),
            ))
        })
        .collect();
    let mut samples = Vec::with_capacity(evaluated.len());
    let mut level_drift = T::zero();
    for (t, r) in times.iter().zip(evaluated) {
        match r {
            Ok((s, drift)) => {
                samples.push(s);
                level_drift = level_drift.max(drift);
            }
            Err(error) => {
                if failure.as_ref().is_none_or(|f| (*t - f.t) * horizon.signum() < T::zero()) {
                    failure = Some(PathFailure { t: *t, error });
                }
                break;
            }
        }
    }
    Ok(ExtremalPath {
        samples,
        stats: IntegratorStats {
            accepted: solution.accepted,
            rejected: solution.rejected,
            rtol: opts.rtol,
            atol: opts.atol,
        },
        solution,
        horizon,
        domain,
        failure,
        level_drift,
        degree: opts.degree,
    })
}

/// Comparison windows for the first conjugate time.
#[derive(Debug, Clone, PartialEq)]
pub struct SturmBounds<T> {
    pub kappa_min: T,
    pub kappa_max: T,
    /// `κ_max ≤ 0`: no conjugate time can occur.
    pub no_conjugate_certificate: bool,
    /// `π/√κ_max` when `κ_max > 0`.
    pub lower: Option<T>,
    /// `π/√κ_min` when `κ_min > 0`.
    pub upper: Option<T>,
    pub violations: Vec<String>,
}

impl<T: Real> SturmBounds<T> {
    pub fn consistent(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Compares detected conjugate times with the windows implied by
/// `κ_min ≤ κ_t ≤ κ_max` on `[0, horizon]`.
pub fn sturm_window<T: Real>(kappa_min: T, kappa_max: T, horizon: T, conjugate: &[T]) -> SturmBounds<T> {
    let pi = T::PI();
    let slack = |t: T| T::lit(1e-6) * t.abs().max(T::one());
    let mut violations = Vec::new();
    let certificate = kappa_max <= T::zero();
    let lower = (kappa_max > T::zero()).then(|| pi / kappa_max.sqrt());
    let upper = (kappa_min > T::zero()).then(|| pi / kappa_min.sqrt());
    let first = conjugate.first().copied();
    if certificate {
        if let Some(t) = first {
            violations.push(format!("conjugate time {t} although κ_t ≤ 0 on the path"));
        }
    }
    if let (Some(lo), Some(t)) = (lower, first) {
        if t < lo - slack(lo) {
            violations.push(format!("conjugate time {t} before the lower bound π/√κ_max = {lo}"));
        }
    }
    if let Some(up) = upper {
        if horizon.abs() >= up + slack(up) {
            match first {
                Some(t) if t <= up + slack(up) => {}
                Some(t) => violations.push(format!("first conjugate time {t} after the upper bound π/√κ_min = {up}")),
                None => violations.push(format!("no conjugate time up to the upper bound π/√κ_min = {up}")),
            }
        }
    }
    SturmBounds {
        kappa_min,
        kappa_max,
        no_conjugate_certificate: certificate,
        lower,
        upper,
        violations,
    }
}

/// Sturm windows from the `κ` samples of a path.
pub fn sturm_bounds<T: Real>(path: &ExtremalPath<T>, conjugate: &[T]) -> SturmBounds<T> {
    let (lo, hi) = path.kappa_range().unwrap_or((T::zero(), T::zero()));
    sturm_window(lo, hi, path.end_time(), conjugate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateScan<T> {
    pub times: Vec<T>,
    /// Suspected tangential zeros (no sign change).
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct JacobiSolution<T> {
    /// Dense solution of `(α, β, γ, g, g')`: the Cauchy system and the
    /// scalar Jacobi equation side by side.
    pub solution: OdeSolution<T, [T; 5]>,
    pub horizon: T,
    pub conjugate_times: Vec<T>,
    pub warnings: Vec<String>,
    pub bounds: SturmBounds<T>,
    /// `max |γ − g|` over the mesh.
    pub mismatch: T,
    /// `max |α(t) − α(0)|` over the mesh.
    pub alpha_drift: T,
    /// `max |β + γ'|`, with `γ'` from the scalar equation.
    pub beta_identity: T,
    /// Set when `κ_t` could not be evaluated up to the end of the path;
    /// everything above then refers to `[0, horizon]` before it.
    pub failure: Option<PathFailure<T>>,
}

impl<T: Real> JacobiSolution<T> {
    pub fn ts(&self) -> &[T] {
        &self.solution.ts
    }

    pub fn alpha(&self) -> Vec<T> {
        self.solution.ys.iter().map(|y| y[0]).collect()
    }

    pub fn beta(&self) -> Vec<T> {
        self.solution.ys.iter().map(|y| y[1]).collect()
    }

    pub fn gamma(&self) -> Vec<T> {
        self.solution.ys.iter().map(|y| y[2]).collect()
    }

    /// `γ` of the scalar equation.
    pub fn gamma_scalar(&self) -> Vec<T> {
        self.solution.ys.iter().map(|y| y[3]).collect()
    }

    pub fn gamma_at(&self, t: T) -> T {
        self.solution.interpolate(t).0[2]
    }

    /// Statement on local optimality: either the whole horizon is covered,
    /// or optimality is lost past the first conjugate time.
    pub fn optimality_note(&self) -> String {
        match self.conjugate_times.first() {
            None => format!(
                "no conjugate time in (0, {}]: the projected extremal is strongly locally optimal on [0, {}]",
                self.horizon, self.horizon
            ),
            Some(tc) => format!("first conjugate time {tc}: the projected extremal is not locally optimal past it"),
        }
    }
}

const JACOBI_MISMATCH_LIMIT: f64 = 1e-6;
const JACOBI_MAX_STEPS: usize = 100_000;

/// Solves `γ'' + κ_t γ = 0`, `γ(0) = 0`, `γ'(0) = −1`, together with the
/// Cauchy system `α' = 0`, `β' = κ_t γ`, `γ' = −β` from `(α, β, γ)(0) = (0, 1, 0)`,
/// along a path, with `κ_t` evaluated at interpolated states.
pub fn jacobi_solve<T: Real, P: Dynamics<T> + ?Sized>(p: &P, path: &ExtremalPath<T>) -> Result<JacobiSolution<T>> {
    // Stop at the last sample that passed when the path broke down.
    let horizon = match (&path.failure, path.samples.last()) {
        (Some(_), Some(s)) => s.t,
        _ => path.end_time(),
    };
    let degree = path.degree;
    let range = std::sync::Mutex::new(path.kappa_range());
    let rhs = |t: T, y: &[T; 5]| -> Result<[T; 5]> {
        let s = path.state_at(t);
        let k = kappa_at(p, &s, degree)?.kappa.value();
        let mut r = range.lock().expect("κ range lock");
        *r = Some(match *r {
            None => (k, k),
            Some((lo, hi)) => (lo.min(k), hi.max(k)),
        });
        Ok([T::zero(), k * y[2], -y[1], y[4], -k * y[3]])
    };
    let opts = OdeOptions {
        rtol: path.stats.rtol,
        atol: path.stats.atol,
        max_steps: JACOBI_MAX_STEPS,
        ..OdeOptions::default()
    };
    let y0 = [T::zero(), T::one(), T::zero(), T::zero(), -T::one()];
    let solution = dormand_prince(rhs, T::zero(), y0, horizon, &opts);
    let failure = match &solution.failure {
        Some((t, e)) if solution.ts.len() < 2 || *t == T::zero() => return Err(e.clone()),
        Some((t, e)) => Some(PathFailure { t: *t, error: e.clone() }),
        None => None,
    };
    let horizon = solution.t_end();
    let mut mismatch = T::zero();
    let mut alpha_drift = T::zero();
    let mut beta_identity = T::zero();
    for y in &solution.ys {
        mismatch = mismatch.max((y[2] - y[3]).abs());
        alpha_drift = alpha_drift.max(y[0].abs());
        beta_identity = beta_identity.max((y[1] + y[4]).abs());
    }
    if !(mismatch <= T::lit(JACOBI_MISMATCH_LIMIT)) {
        return Err(Error::JacobiMismatch {
            mismatch: mismatch.as_f64(),
        });
    }
    let scan = conjugate_times(&solution, horizon);
    let (lo, hi) = range.into_inner().expect("κ range lock").unwrap_or((T::zero(), T::zero()));
    let bounds = sturm_window(lo, hi, horizon, &scan.times);
    Ok(JacobiSolution {
        solution,
        horizon,
        conjugate_times: scan.times,
        warnings: scan.warnings,
        bounds,
        mismatch,
        alpha_drift,
        beta_identity,
        failure,
    })
}

/// Zeros of `γ` in `(0, horizon]`: sign changes on the mesh refined by
/// bisection of the Hermite interpolant.
pub fn conjugate_times<T: Real>(sol: &OdeSolution<T, [T; 5]>, horizon: T) -> ConjugateScan<T> {
    let gamma = |t: T| sol.interpolate(t).0[2];
    let ts = &sol.ts;
    let gs: Vec<T> = sol.ys.iter().map(|y| y[2]).collect();
    let sup = gs.iter().fold(T::zero(), |m, g| m.max(g.abs()));
    let mut times = Vec::new();
    let mut warnings = Vec::new();
    let limit = horizon.abs();
    for i in 1..ts.len() {
        if ts[i].abs() > limit {
            break;
        }
        let (a, b) = (gs[i - 1], gs[i]);
        if b == T::zero() {
            times.push(ts[i]);
            continue;
        }
        if a == T::zero() || (a < T::zero()) == (b < T::zero()) {
            continue;
        }
        let (mut lo, mut hi) = (ts[i - 1], ts[i]);
        let mut glo = a;
        for _ in 0..200 {
            let mid = (lo + hi) * T::lit(0.5);
            if (hi - lo).abs() <= T::lit(1e-10) * mid.abs().max(T::one()) {
                break;
            }
            let gm = gamma(mid);
            if gm == T::zero() {
                lo = mid;
                hi = mid;
                break;
            }
            if (gm < T::zero()) == (glo < T::zero()) {
                lo = mid;
                glo = gm;
            } else {
                hi = mid;
            }
        }
        times.push((lo + hi) * T::lit(0.5));
    }
    let threshold = T::lit(1e-7) * (T::one() + sup);
    for i in 1..gs.len().saturating_sub(1) {
        let g = gs[i].abs();
        let same_sign = (gs[i - 1] < T::zero()) == (gs[i] < T::zero()) && (gs[i] < T::zero()) == (gs[i + 1] < T::zero());
        if g < threshold && g <= gs[i - 1].abs() && g <= gs[i + 1].abs() && same_sign && gs[i] != T::zero() {
            warnings.push(format!("possible tangential zero of γ near t = {}", ts[i]));
        }
    }
    ConjugateScan { times, warnings }
}
