//! The control curvature `κ`, Lie-derivative invariants, differential
//! relations between them and flatness reports.

use rayon::prelude::*;

use crate::families::RiemannianFrame;
use crate::fiber::{c_function, CFunction, FiberJets, DEFAULT_DEGREE};
use crate::jets::Jet;
use crate::system::Dynamics;
use crate::{Error, Real, Result};

/// Hard limit on the collinearity residual of `[h⃗, [v, h⃗]]` against `v`.
pub const COLLINEARITY_LIMIT: f64 = 1e-3;

/// Default threshold for flatness verdicts.
pub const FLATNESS_TOLERANCE: f64 = 1e-5;

/// Lowest jet degree that determines `κ` and the first-order invariants.
pub const MIN_INVARIANT_DEGREE: usize = 5;

/// `[X, Y]^i = X^j ∂_j Y^i − Y^j ∂_j X^i`, one degree below the lower input.
pub fn lie_bracket<T: Real>(x: &[Jet<T>; 3], y: &[Jet<T>; 3]) -> Result<[Jet<T>; 3]> {
    let mut out: Vec<Jet<T>> = Vec::with_capacity(3);
    for i in 0..3 {
        let mut acc = lie_derivative(x, &y[i])?;
        acc = acc - lie_derivative(y, &x[i])?;
        out.push(acc);
    }
    Ok(out.try_into().expect("three components"))
}

/// `L_X g = X^j ∂_j g`, one degree below `g`.
pub fn lie_derivative<T: Real>(field: &[Jet<T>; 3], scalar: &Jet<T>) -> Result<Jet<T>> {
    let mut acc = &field[0] * &scalar.derivative(0)?;
    for j in 1..scalar.nvars().min(3) {
        acc = acc + &field[j] * &scalar.derivative(j)?;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurvatureMethod {
    Bracket,
    CoordinateC,
    Riemannian,
}

impl CurvatureMethod {
    pub fn name(self) -> &'static str {
        match self {
            CurvatureMethod::Bracket => "bracket",
            CurvatureMethod::CoordinateC => "coordinate_c",
            CurvatureMethod::Riemannian => "riemannian",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureResult<T> {
    pub kappa: T,
    /// `‖W_q‖ / (‖W‖ + ‖V‖)` for `W = [h⃗, [v, h⃗]]`; zero for methods that
    /// do not form the double bracket.
    pub collinearity_residual: T,
    pub method: CurvatureMethod,
}

/// Jets of the fields, their brackets and `κ` at one point.
#[derive(Debug, Clone)]
pub struct InvariantJets<T: Real> {
    pub fiber: FiberJets<T>,
    pub h: [Jet<T>; 3],
    pub v: [Jet<T>; 3],
    /// `[v, h⃗]`, degree `d − 4`
    pub vh: [Jet<T>; 3],
    /// `[h⃗, [v, h⃗]]`, degree `d − 5`
    pub w: [Jet<T>; 3],
    /// `κ = W_u / v_u`, degree `d − 5`
    pub kappa: Jet<T>,
}

impl<T: Real> InvariantJets<T> {
    pub fn new<P: Dynamics<T> + ?Sized>(p: &P, q: [T; 2], u: T, degree: usize) -> Result<Self> {
        if degree < MIN_INVARIANT_DEGREE {
            return Err(Error::Invalid(format!(
                "invariants need jet degree at least {MIN_INVARIANT_DEGREE}, got {degree}"
            )));
        }
        let fiber = FiberJets::new(p, q, u, degree)?;
        let h = fiber.h();
        let v = fiber.v()?;
        let vh = lie_bracket(&v, &h)?;
        let w = lie_bracket(&h, &vh)?;
        let kappa = w[2].try_div(&v[2])?;
        Ok(InvariantJets { fiber, h, v, vh, w, kappa })
    }

    pub fn collinearity_residual(&self) -> T {
        let w: Vec<T> = self.w.iter().map(Jet::value).collect();
        let v = self.v[2].value();
        let norm_w = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        w[0].hypot(w[1]) / (norm_w + v.abs())
    }

    pub fn curvature(&self) -> CurvatureResult<T> {
        CurvatureResult {
            kappa: self.kappa.value(),
            collinearity_residual: self.collinearity_residual(),
            method: CurvatureMethod::Bracket,
        }
    }

    /// `L_h⃗ b`, degree `d − 5`.
    pub fn lh_b(&self) -> Result<Jet<T>> {
        lie_derivative(&self.h, &self.fiber.b)
    }

    /// `L_{[v, h⃗]} b`, degree `d − 5`.
    pub fn lvh_b(&self) -> Result<Jet<T>> {
        lie_derivative(&self.vh, &self.fiber.b)
    }

    /// `L_v κ`, degree `d − 6`.
    pub fn lv_kappa(&self) -> Result<Jet<T>> {
        lie_derivative(&self.v, &self.kappa)
    }

    /// `L_v κ + b κ + L_h⃗² b` at the base point (signed).
    pub fn bnk(&self) -> Result<T> {
        let lhlh_b = lie_derivative(&self.h, &self.lh_b()?)?;
        Ok(self.lv_kappa()?.value() + self.fiber.b.value() * self.kappa.value() + lhlh_b.value())
    }

    pub fn c_function<P: Dynamics<T> + ?Sized>(&self, p: &P, anchor: T) -> Result<CFunction<T>> {
        c_function(p, &self.fiber, anchor)
    }

    /// `κ = L_{h⃗'} c − L_h⃗ c'`, using `h⃗' = [v, h⃗]`.
    pub fn kappa_via_c(&self, cf: &CFunction<T>) -> Result<T> {
        let c_prime = cf.c_prime(&self.fiber)?;
        Ok(lie_derivative(&self.vh, &cf.c)?.value() - lie_derivative(&self.h, &c_prime)?.value())
    }

    /// `c'' + b c' + c − L_h⃗ b` at the base point (signed).
    pub fn pde_for_c(&self, cf: &CFunction<T>) -> Result<T> {
        let c_prime = cf.c_prime(&self.fiber)?;
        let c_second = c_prime.derivative(2)?.try_div(&self.fiber.theta_prime)?;
        Ok(c_second.value() + self.fiber.b.value() * c_prime.value() + cf.c.value() - self.lh_b()?.value())
    }
}

/// `κ` by the double bracket `[h⃗, [v, h⃗]] = κ v` at the default degree.
pub fn curvature<T: Real, P: Dynamics<T> + ?Sized>(p: &P, q: [T; 2], u: T) -> Result<CurvatureResult<T>> {
    curvature_with_degree(p, q, u, DEFAULT_DEGREE)
}

pub fn curvature_with_degree<T: Real, P: Dynamics<T> + ?Sized>(
    p: &P,
    q: [T; 2],
    u: T,
    degree: usize,
) -> Result<CurvatureResult<T>> {
    let inv = InvariantJets::new(p, q, u, degree.max(MIN_INVARIANT_DEGREE))?;
    let result = inv.curvature();
    if !(result.collinearity_residual <= T::lit(COLLINEARITY_LIMIT)) {
        return Err(Error::Collinearity {
            residual: result.collinearity_residual.as_f64(),
        });
    }
    Ok(result)
}

/// `κ` through the function `c` with `θ` anchored at `u = anchor`.
pub fn curvature_via_c<T: Real, P: Dynamics<T> + ?Sized>(p: &P, q: [T; 2], u: T, anchor: T) -> Result<CurvatureResult<T>> {
    let inv = InvariantJets::new(p, q, u, DEFAULT_DEGREE)?;
    let cf = inv.c_function(p, anchor)?;
    Ok(CurvatureResult {
        kappa: inv.kappa_via_c(&cf)?,
        collinearity_residual: T::zero(),
        method: CurvatureMethod::CoordinateC,
    })
}

/// Gaussian curvature `−c1² − c2² + L_{e1} c2 − L_{e2} c1` of an orthonormal frame.
pub fn riemannian_curvature<T: Real>(frame: &RiemannianFrame, q: [T; 2]) -> Result<CurvatureResult<T>> {
    let [c1, c2] = frame.structural_constant_jets(q, 1)?;
    let [e1, e2] = frame.field_values(q)?;
    let along = |e: [T; 2], c: &Jet<T>| -> Result<T> {
        Ok(e[0] * c.derivative(0)?.value() + e[1] * c.derivative(1)?.value())
    };
    let (c1v, c2v) = (c1.value(), c2.value());
    Ok(CurvatureResult {
        kappa: -c1v * c1v - c2v * c2v + along(e1, &c2)? - along(e2, &c1)?,
        collinearity_residual: T::zero(),
        method: CurvatureMethod::Riemannian,
    })
}

/// `|L_v κ + b κ + L_h⃗² b|`.
pub fn bnk_residual<T: Real, P: Dynamics<T> + ?Sized>(p: &P, q: [T; 2], u: T) -> Result<T> {
    Ok(InvariantJets::new(p, q, u, DEFAULT_DEGREE)?.bnk()?.abs())
}

/// `|c'' + b c' + c − L_h⃗ b|` with `θ` anchored at `u = anchor`.
pub fn pde_for_c_residual<T: Real, P: Dynamics<T> + ?Sized>(p: &P, q: [T; 2], u: T, anchor: T) -> Result<T> {
    let inv = InvariantJets::new(p, q, u, DEFAULT_DEGREE)?;
    let cf = inv.c_function(p, anchor)?;
    Ok(inv.pde_for_c(&cf)?.abs())
}

/// One axis of a sample grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Axis { min, max, count }
    }

    /// Both endpoints included.
    pub fn closed_values(&self) -> Vec<f64> {
        match self.count {
            0 => vec![],
            1 => vec![self.min],
            n => (0..n)
                .map(|i| self.min + (self.max - self.min) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }

    /// Upper endpoint excluded, as suits a periodic coordinate.
    pub fn half_open_values(&self) -> Vec<f64> {
        (0..self.count)
            .map(|i| self.min + (self.max - self.min) * i as f64 / self.count as f64)
            .collect()
    }
}

/// Product grid over `(q1, q2, u)`. The state axes include both endpoints;
/// the control axis excludes its upper endpoint so that `[0, 2π)` samples a
/// circle without repetition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleGrid {
    pub q1: Axis,
    pub q2: Axis,
    pub u: Axis,
}

impl SampleGrid {
    pub fn new(q1: Axis, q2: Axis, u: Axis) -> Self {
        SampleGrid { q1, q2, u }
    }

    pub fn len(&self) -> usize {
        self.q1.count * self.q2.count * self.u.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points in row-major order `(q1, q2, u)`, `u` fastest.
    pub fn points(&self) -> Vec<([f64; 2], f64)> {
        let us = self.u.half_open_values();
        let mut out = Vec::with_capacity(self.len());
        for &a in &self.q1.closed_values() {
            for &b in &self.q2.closed_values() {
                for &u in &us {
                    out.push(([a, b], u));
                }
            }
        }
        out
    }
}

/// Per-point output of a curvature sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSample<T> {
    pub q: [T; 2],
    pub u: T,
    pub kappa: T,
    pub b: T,
    pub collinearity_residual: T,
}

/// `κ`, `b` and the collinearity residual at every grid point, in grid
/// order. Points are evaluated in parallel; each carries its own outcome.
pub fn curvature_sweep<T: Real, P: Dynamics<T> + ?Sized>(
    p: &P,
    grid: &SampleGrid,
    degree: usize,
) -> Vec<Result<GridSample<T>>> {
    grid.points()
        .into_par_iter()
        .map(|(q, u)| {
            let (q, u) = ([T::lit(q[0]), T::lit(q[1])], T::lit(u));
            p.admissible(q, u)?;
            let inv = InvariantJets::new(p, q, u, degree.max(MIN_INVARIANT_DEGREE))?;
            let res = inv.curvature();
            if !(res.collinearity_residual <= T::lit(COLLINEARITY_LIMIT)) {
                return Err(Error::Collinearity {
                    residual: res.collinearity_residual.as_f64(),
                });
            }
            Ok(GridSample {
                q,
                u,
                kappa: res.kappa,
                b: inv.fiber.b.value(),
                collinearity_residual: res.collinearity_residual,
            })
        })
        .collect()
}

/// Supremum of an invariant over the grid and where it is attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSup<T> {
    pub value: T,
    pub q: [T; 2],
    pub u: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatnessReport<T> {
    pub sup_kappa: GridSup<T>,
    pub sup_lhb: GridSup<T>,
    pub sup_lvh_b: GridSup<T>,
    /// `κ ≡ 0` and `L_h⃗ b ≡ 0` on the grid.
    pub verdict_commuting_frame: bool,
    /// additionally `L_{[v, h⃗]} b ≡ 0`.
    pub verdict_flat: bool,
    pub tolerance: T,
    pub grid: SampleGrid,
    pub degree: usize,
}

/// Sups of `|κ|`, `|L_h⃗ b|`, `|L_{[v, h⃗]} b|` over the grid with threshold
/// verdicts. The first failing point, in grid order, aborts the report.
pub fn flatness_report<T: Real, P: Dynamics<T> + ?Sized>(
    p: &P,
    grid: &SampleGrid,
    tolerance: T,
    degree: usize,
) -> Result<FlatnessReport<T>> {
    if grid.is_empty() {
        return Err(Error::Invalid("empty sample grid".into()));
    }
    let values: Vec<Result<([T; 2], T, [T; 3])>> = grid
        .points()
        .into_par_iter()
        .map(|(q, u)| {
            let (q, u) = ([T::lit(q[0]), T::lit(q[1])], T::lit(u));
            p.admissible(q, u)?;
            let inv = InvariantJets::new(p, q, u, degree.max(MIN_INVARIANT_DEGREE))?;
            Ok((q, u, [inv.kappa.value().abs(), inv.lh_b()?.value().abs(), inv.lvh_b()?.value().abs()]))
        })
        .collect();
    let mut sups: Option<[GridSup<T>; 3]> = None;
    for v in values {
        let (q, u, vals) = v?;
        let s = sups.get_or_insert([GridSup { value: -T::one(), q, u }; 3]);
        for k in 0..3 {
            if vals[k] > s[k].value || vals[k].is_nan() {
                s[k] = GridSup { value: vals[k], q, u };
            }
        }
    }
    let [sk, sl, sv] = sups.expect("nonempty grid");
    let commuting = sk.value < tolerance && sl.value < tolerance;
    Ok(FlatnessReport {
        sup_kappa: sk,
        sup_lhb: sl,
        sup_lvh_b: sv,
        verdict_commuting_frame: commuting,
        verdict_flat: commuting && sv.value < tolerance,
        tolerance,
        grid: *grid,
        degree: degree.max(MIN_INVARIANT_DEGREE),
    })
}
