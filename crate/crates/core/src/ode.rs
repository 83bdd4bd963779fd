//! Dormand–Prince 5(4) with step-size control and cubic Hermite dense output.

use crate::jets::Jet;
use crate::{Error, Real, Result};

/// Vector-space operations the integrator needs from a state.
pub trait OdeState<T: Real>: Clone {
    /// `self += a · x`
    fn axpy(&mut self, a: T, x: &Self);

    /// `max_i |err_i| / (atol + rtol · max(|y_i|, |y_new_i|))`
    fn error_norm(err: &Self, y: &Self, y_new: &Self, rtol: T, atol: T) -> T;

    /// Largest component magnitude.
    fn max_abs(&self) -> T;

    fn scaled(&self, a: T) -> Self {
        let mut out = self.clone();
        out.axpy(a - T::one(), self);
        out
    }
}

impl<T: Real, const N: usize> OdeState<T> for [T; N] {
    fn axpy(&mut self, a: T, x: &Self) {
        for (s, &v) in self.iter_mut().zip(x) {
            *s = *s + a * v;
        }
    }

    fn error_norm(err: &Self, y: &Self, y_new: &Self, rtol: T, atol: T) -> T {
        let mut m = T::zero();
        for i in 0..N {
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            m = m.max((err[i] / sc).abs());
        }
        m
    }

    fn max_abs(&self) -> T {
        self.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    fn scaled(&self, a: T) -> Self {
        self.map(|v| v * a)
    }
}

impl<T: Real, const N: usize> OdeState<T> for [Jet<T>; N] {
    fn axpy(&mut self, a: T, x: &Self) {
        for (s, v) in self.iter_mut().zip(x) {
            *s = &*s + &(v * a);
        }
    }

    fn error_norm(err: &Self, y: &Self, y_new: &Self, rtol: T, atol: T) -> T {
        let mut m = T::zero();
        for i in 0..N {
            let sc = atol + rtol * y[i].max_abs().max(y_new[i].max_abs());
            m = m.max(err[i].max_abs() / sc);
        }
        m
    }

    fn max_abs(&self) -> T {
        self.iter().fold(T::zero(), |m, v| m.max(v.max_abs()))
    }

    fn scaled(&self, a: T) -> Self {
        self.clone().map(|v| v * a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions<T> {
    pub rtol: T,
    pub atol: T,
    /// Initial step magnitude; estimated when absent.
    pub h_init: Option<T>,
    pub h_max: Option<T>,
    pub max_steps: usize,
}

impl<T: Real> Default for OdeOptions<T> {
    fn default() -> Self {
        OdeOptions {
            rtol: T::lit(1e-9),
            atol: T::lit(1e-11),
            h_init: None,
            h_max: None,
            max_steps: 1_000_000,
        }
    }
}

/// Accepted mesh with derivatives for Hermite interpolation.
#[derive(Debug, Clone)]
pub struct OdeSolution<T, S> {
    pub ts: Vec<T>,
    pub ys: Vec<S>,
    pub dys: Vec<S>,
    pub accepted: usize,
    pub rejected: usize,
    /// Time and cause when integration stopped before the target.
    pub failure: Option<(T, Error)>,
}

impl<T: Real, S: OdeState<T>> OdeSolution<T, S> {
    pub fn t_end(&self) -> T {
        *self.ts.last().expect("solution holds the initial point")
    }

    pub fn y_end(&self) -> &S {
        self.ys.last().expect("solution holds the initial point")
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    /// Index `i` with `t` between `ts[i]` and `ts[i + 1]`.
    fn segment(&self, t: T) -> usize {
        let n = self.ts.len();
        if n < 2 {
            return 0;
        }
        let forward = self.ts[n - 1] >= self.ts[0];
        let pos = if forward {
            self.ts.partition_point(|&s| s <= t)
        } else {
            self.ts.partition_point(|&s| s >= t)
        };
        pos.clamp(1, n - 1) - 1
    }

    /// Cubic Hermite interpolant of the state and its derivative.
    pub fn interpolate(&self, t: T) -> (S, S) {
        let i = self.segment(t);
        if self.ts.len() < 2 {
            return (self.ys[0].clone(), self.dys[0].clone());
        }
        let (t0, t1) = (self.ts[i], self.ts[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (y0, y1, d0, d1) = (&self.ys[i], &self.ys[i + 1], &self.dys[i], &self.dys[i + 1]);
        let one = T::one();
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let six = T::lit(6.0);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = two * s3 - three * s2 + one;
        let h10 = s3 - two * s2 + s;
        let h01 = -two * s3 + three * s2;
        let h11 = s3 - s2;
        let mut y = y0.scaled(h00);
        y.axpy(h * h10, d0);
        y.axpy(h01, y1);
        y.axpy(h * h11, d1);
        // derivative of the interpolant
        let g00 = (six * s2 - six * s) / h;
        let g10 = three * s2 - T::lit(4.0) * s + one;
        let g01 = -g00;
        let g11 = three * s2 - two * s;
        let mut dy = y0.scaled(g00);
        dy.axpy(g10, d0);
        dy.axpy(g01, y1);
        dy.axpy(g11, d1);
        (y, dy)
    }
}

// Dormand–Prince tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [&[f64]; 7] = [
    &[],
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// 5th-order weights (equal to the last row of `A`).
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
/// Difference between the 5th- and 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

/// One step; returns the new state, its derivative (FSAL) and the error
/// estimate.
fn dp_step<T, S, F>(rhs: &mut F, t: T, y: &S, k1: &S, h: T) -> Result<(S, S, S)>
where
    T: Real,
    S: OdeState<T>,
    F: FnMut(T, &S) -> Result<S>,
{
    let mut k: Vec<S> = Vec::with_capacity(7);
    k.push(k1.clone());
    for stage in 1..7 {
        let mut ys = y.clone();
        for (j, &a) in A[stage].iter().enumerate() {
            if a != 0.0 {
                ys.axpy(h * T::lit(a), &k[j]);
            }
        }
        k.push(rhs(t + h * T::lit(C[stage]), &ys)?);
    }
    let mut y_new = y.clone();
    for (j, &b) in B5.iter().enumerate() {
        if b != 0.0 {
            y_new.axpy(h * T::lit(b), &k[j]);
        }
    }
    let mut err = k[0].scaled(h * T::lit(E[0]));
    for (j, &e) in E.iter().enumerate().skip(1) {
        if e != 0.0 {
            err.axpy(h * T::lit(e), &k[j]);
        }
    }
    let k7 = k.pop().expect("seven stages");
    Ok((y_new, k7, err))
}

/// Adaptive integration from `t0` to `t1` (either direction).
///
/// A failing right-hand side ends the integration; the partial solution is
/// returned with the failure recorded.
pub fn dormand_prince<T, S, F>(mut rhs: F, t0: T, y0: S, t1: T, opts: &OdeOptions<T>) -> OdeSolution<T, S>
where
    T: Real,
    S: OdeState<T>,
    F: FnMut(T, &S) -> Result<S>,
{
    let mut sol = OdeSolution {
        ts: vec![t0],
        ys: vec![y0.clone()],
        dys: Vec::new(),
        accepted: 0,
        rejected: 0,
        failure: None,
    };
    let k1 = match rhs(t0, &y0) {
        Ok(k) => k,
        Err(e) => {
            sol.dys.push(y0.scaled(T::zero()));
            sol.failure = Some((t0, e));
            return sol;
        }
    };
    sol.dys.push(k1.clone());
    let span = t1 - t0;
    if span == T::zero() {
        return sol;
    }
    let dir = span.signum();
    let h_max = opts.h_max.unwrap_or(span.abs()).min(span.abs());
    let mut h = match opts.h_init {
        Some(h) => h.abs(),
        None => {
            let d1 = k1.max_abs();
            let d0 = y0.max_abs().max(T::one());
            if d1 > T::zero() {
                T::lit(0.01) * d0 / d1
            } else {
                T::lit(0.01) * span.abs()
            }
        }
    }
    .min(h_max);
    let (mut t, mut y, mut k1) = (t0, y0, k1);
    let mut last_rejected = false;
    let (rtol, atol) = (opts.rtol, opts.atol);
    while (t1 - t) * dir > T::zero() {
        if sol.accepted + sol.rejected >= opts.max_steps {
            sol.failure = Some((
                t,
                Error::TooManySteps {
                    steps: opts.max_steps,
                    target: t1.as_f64(),
                },
            ));
            return sol;
        }
        let remaining = (t1 - t).abs();
        let last = h >= remaining;
        let step = if last { remaining } else { h };
        if step <= T::epsilon() * T::lit(16.0) * t.abs().max(T::one()) {
            sol.failure = Some((t, Error::StepUnderflow { t: t.as_f64() }));
            return sol;
        }
        let (y_new, k_new, err) = match dp_step(&mut rhs, t, &y, &k1, step * dir) {
            Ok(v) => v,
            Err(e) => {
                // a stage left the domain; retry shorter unless already tiny
                if step > T::lit(1e-9) * span.abs() {
                    h = step * T::lit(0.25);
                    sol.rejected += 1;
                    last_rejected = true;
                    continue;
                }
                sol.failure = Some((t, e));
                return sol;
            }
        };
        let en = S::error_norm(&err, &y, &y_new, rtol, atol);
        if en <= T::one() {
            t = if last { t1 } else { t + step * dir };
            y = y_new;
            k1 = k_new;
            sol.ts.push(t);
            sol.ys.push(y.clone());
            sol.dys.push(k1.clone());
            sol.accepted += 1;
            let mut fac = if en == T::zero() {
                T::lit(FAC_MAX)
            } else {
                (T::lit(SAFETY) * en.powf(T::lit(-0.2))).max(T::lit(FAC_MIN)).min(T::lit(FAC_MAX))
            };
            if last_rejected {
                fac = fac.min(T::one());
            }
            h = (step * fac).min(h_max);
            last_rejected = false;
        } else {
            sol.rejected += 1;
            let fac = (T::lit(SAFETY) * en.powf(T::lit(-0.2))).max(T::lit(FAC_MIN));
            h = step * fac;
            last_rejected = true;
        }
    }
    sol
}

/// Fixed-step integration with the fifth-order solution; used for order
/// checks.
pub fn dormand_prince_fixed<T, S, F>(mut rhs: F, t0: T, y0: S, t1: T, steps: usize) -> Result<S>
where
    T: Real,
    S: OdeState<T>,
    F: FnMut(T, &S) -> Result<S>,
{
    if steps == 0 {
        return Err(Error::Invalid("fixed-step integration needs at least one step".into()));
    }
    let h = (t1 - t0) / T::lit(steps as f64);
    let mut y = y0;
    let mut t = t0;
    let mut k1 = rhs(t, &y)?;
    for i in 0..steps {
        let (y_new, k_new, _) = dp_step(&mut rhs, t, &y, &k1, h)?;
        y = y_new;
        k1 = k_new;
        t = t0 + h * T::lit((i + 1) as f64);
    }
    Ok(y)
}
