//! Built-in problem families.

use std::collections::BTreeMap;

use crate::exprs::{parse, Env, Expr, Func, Var};
use crate::jets::{wedge, Jet};
use crate::ode::{dormand_prince, OdeOptions};
use crate::system::{check_regularity, ControlDomain, ControlProblem, Dynamics};
use crate::{Error, Real, Result};

/// An orthonormal frame `(e1, e2)` given by expressions in `(q1, q2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiemannianFrame {
    pub e1: [Expr; 2],
    pub e2: [Expr; 2],
}

fn p(src: &str) -> Expr {
    parse(src).expect("built-in expression parses")
}

impl RiemannianFrame {
    pub fn new(e1: [Expr; 2], e2: [Expr; 2]) -> Result<Self> {
        for e in e1.iter().chain(&e2) {
            if e.depends_on(Var::U) {
                return Err(Error::Invalid(format!("frame component `{e}` depends on u")));
            }
        }
        Ok(RiemannianFrame { e1, e2 })
    }

    /// `∂1, ∂2`
    pub fn euclidean() -> Self {
        RiemannianFrame {
            e1: [Expr::Num(1.0), Expr::Num(0.0)],
            e2: [Expr::Num(0.0), Expr::Num(1.0)],
        }
    }

    /// `q2 ∂1, q2 ∂2` on `q2 > 0`; curvature −1.
    pub fn half_plane() -> Self {
        RiemannianFrame {
            e1: [p("q2"), Expr::Num(0.0)],
            e2: [Expr::Num(0.0), p("q2")],
        }
    }

    /// `∂_{q1}, (1/sin q1) ∂_{q2}` in colatitude/longitude; curvature 1.
    pub fn sphere() -> Self {
        RiemannianFrame {
            e1: [Expr::Num(1.0), Expr::Num(0.0)],
            e2: [Expr::Num(0.0), p("1/sin(q1)")],
        }
    }

    /// Conformal frame `s ∂1, s ∂2` for a positive scale `s(q)`.
    pub fn conformal(scale: Expr) -> Result<Self> {
        Self::new([scale.clone(), Expr::Num(0.0)], [Expr::Num(0.0), scale])
    }

    /// Stereographic unit sphere with a quartic perturbation of the
    /// conformal factor: `s = 1 + r²/4 + ε r⁴`.
    pub fn perturbed_sphere(epsilon: f64) -> Self {
        let s = p(&format!("1 + (q1^2 + q2^2)/4 + {epsilon:?}*(q1^2 + q2^2)^2"));
        Self::conformal(s).expect("scale is independent of u")
    }

    fn eval<S: crate::exprs::Scalar>(&self, q1: &S, q2: &S) -> Result<[[S; 2]; 2]> {
        let u = q1.constant_like(0.0);
        let env = Env::state(q1.clone(), q2.clone(), u);
        Ok([
            [self.e1[0].eval(&env)?, self.e1[1].eval(&env)?],
            [self.e2[0].eval(&env)?, self.e2[1].eval(&env)?],
        ])
    }

    pub fn field_values<T: Real>(&self, q: [T; 2]) -> Result<[[T; 2]; 2]> {
        self.eval(&q[0], &q[1])
    }

    /// `c1, c2` with `[e1, e2] = c1 e1 + c2 e2`, as jets in `(q1, q2)`.
    pub fn structural_constant_jets<T: Real>(&self, q: [T; 2], degree: usize) -> Result<[Jet<T>; 2]> {
        let v = Jet::variables(&q, degree + 1)?;
        let [e1, e2] = self.eval(&v[0], &v[1])?;
        let det = wedge(&e1, &e2);
        let scale = T::one() + e1[0].value().abs() + e1[1].value().abs() + e2[0].value().abs() + e2[1].value().abs();
        if !(det.value().abs() > T::lit(1e-12) * scale * scale) {
            return Err(Error::DegenerateFrame {
                q1: q[0].as_f64(),
                q2: q[1].as_f64(),
            });
        }
        // [X, Y]^i = X^j ∂_j Y^i − Y^j ∂_j X^i
        let along = |x: &[Jet<T>; 2], g: &Jet<T>| -> Result<Jet<T>> {
            Ok(&x[0] * &g.derivative(0)? + &x[1] * &g.derivative(1)?)
        };
        let br = [
            along(&e1, &e2[0])? - along(&e2, &e1[0])?,
            along(&e1, &e2[1])? - along(&e2, &e1[1])?,
        ];
        let e1t = [e1[0].truncate(degree), e1[1].truncate(degree)];
        let e2t = [e2[0].truncate(degree), e2[1].truncate(degree)];
        let det = det.truncate(degree);
        Ok([wedge(&br, &e2t).try_div(&det)?, wedge(&e1t, &br).try_div(&det)?])
    }

    pub fn structural_constants<T: Real>(&self, q: [T; 2]) -> Result<(T, T)> {
        let [c1, c2] = self.structural_constant_jets(q, 0)?;
        Ok((c1.value(), c2.value()))
    }
}

/// `q' = cos u e1(q) + sin u e2(q)`, time-optimal, `u` on the circle.
pub fn riemannian_problem(frame: &RiemannianFrame) -> Result<ControlProblem> {
    let cos = Expr::call(Func::Cos, Expr::Var(Var::U));
    let sin = Expr::call(Func::Sin, Expr::Var(Var::U));
    let comp = |i: usize| {
        Expr::add(
            Expr::mul(cos.clone(), frame.e1[i].clone()),
            Expr::mul(sin.clone(), frame.e2[i].clone()),
        )
    };
    ControlProblem::new(comp(0), comp(1))
}

/// Drift of a Zermelo navigation problem on the Euclidean plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ZermeloSpec {
    pub x: [Expr; 2],
    /// `(a, b)` when `X(q) = ((a, b), (−b, a)) q`.
    pub linear: Option<[f64; 2]>,
    pub params: BTreeMap<String, f64>,
}

impl ZermeloSpec {
    pub fn new(x1: Expr, x2: Expr) -> Self {
        ZermeloSpec {
            x: [x1, x2],
            linear: None,
            params: BTreeMap::new(),
        }
    }

    pub fn with_params(mut self, params: BTreeMap<String, f64>) -> Self {
        self.params = params;
        self
    }

    /// `X(q) = ((a, b), (−b, a)) q`.
    pub fn linear(a: f64, b: f64) -> Self {
        let x1 = p(&format!("{a:?}*q1 + {b:?}*q2"));
        let x2 = p(&format!("{:?}*q1 + {a:?}*q2", -b));
        ZermeloSpec {
            x: [x1, x2],
            linear: Some([a, b]),
            params: BTreeMap::new(),
        }
    }

    pub fn constant(x1: f64, x2: f64) -> Self {
        Self::new(Expr::Num(x1), Expr::Num(x2))
    }

    /// Declares the linear form of already given drift expressions after
    /// checking that the two agree.
    pub fn with_linear(mut self, a: f64, b: f64) -> Result<Self> {
        let x = [self.x[0].bind_params(&self.params)?, self.x[1].bind_params(&self.params)?];
        for &q in &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.7, -1.3]] {
            let expected = [a * q[0] + b * q[1], -b * q[0] + a * q[1]];
            for i in 0..2 {
                let got: f64 = x[i].eval_at(&q[0], &q[1], &0.0)?;
                if (got - expected[i]).abs() > 1e-12 * (1.0 + expected[i].abs()) {
                    return Err(Error::Invalid(format!(
                        "drift expressions disagree with the linear form (a, b) = ({a}, {b})"
                    )));
                }
            }
        }
        self.linear = Some([a, b]);
        Ok(self)
    }
}

/// `q' = X(q) + (cos u, sin u)`, time-optimal. Points where `|X| ≥ 1` are
/// rejected by grid sweeps through [`Dynamics::admissible`].
pub fn zermelo_problem(spec: &ZermeloSpec) -> Result<ControlProblem> {
    let f1 = Expr::add(spec.x[0].clone(), Expr::call(Func::Cos, Expr::Var(Var::U)));
    let f2 = Expr::add(spec.x[1].clone(), Expr::call(Func::Sin, Expr::Var(Var::U)));
    ControlProblem::builder(f1, f2)
        .params(spec.params.clone())
        .build()?
        .with_drift_bound(spec.x.clone())
}

/// `q' = f(u)`: the flat reference systems.
pub fn translation_invariant_problem(f1: Expr, f2: Expr) -> Result<ControlProblem> {
    for e in [&f1, &f2] {
        if e.depends_on(Var::Q1) || e.depends_on(Var::Q2) {
            return Err(Error::Invalid(format!("`{e}` depends on the state")));
        }
    }
    let problem = ControlProblem::new(f1, f2)?;
    for k in 0..32 {
        let u = std::f64::consts::TAU * k as f64 / 32.0;
        let r = check_regularity::<f64, _>(&problem, [0.0, 0.0], u)?;
        if !r.is_ok() {
            return Err(Error::regularity(
                [0.0, 0.0],
                u,
                format!(
                    "translation-invariant system not regular (f ∧ f_u = {}, f_u ∧ f_uu = {})",
                    r.det_f_fu, r.det_fu_fuu
                ),
            ));
        }
    }
    Ok(problem)
}

/// Generator of systems with `κ ≡ 0` and `L_h⃗ b ≡ 0`: `P_u` is the flow
/// from `u0` of `X_u = (a1(u) + q2) ∂1 + (a2(u, q2) − q1) ∂2` and
/// `f(q, u) = (DP_u(q))⁻¹ (1, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatNormalForm {
    pub a1: Expr,
    pub a2: Expr,
    pub u0: f64,
    /// Controls range over `[u0 − half_width, u0 + half_width]`.
    pub half_width: f64,
}

impl FlatNormalForm {
    pub fn new(a1: Expr, a2: Expr, u0: f64, params: &BTreeMap<String, f64>) -> Result<Self> {
        let a1 = a1.bind_params(params)?;
        let a2 = a2.bind_params(params)?;
        if a1.depends_on(Var::Q1) || a1.depends_on(Var::Q2) {
            return Err(Error::Invalid(format!("a1 = `{a1}` may depend on u only")));
        }
        if a2.depends_on(Var::Q1) {
            return Err(Error::Invalid(format!("a2 = `{a2}` may depend on u and q2 only")));
        }
        Ok(FlatNormalForm {
            a1,
            a2,
            u0,
            half_width: std::f64::consts::PI,
        })
    }

    /// `a1 = a2 = 0`: the rotation generator, equivalent to the Euclidean
    /// problem.
    pub fn rotation() -> Self {
        FlatNormalForm {
            a1: Expr::Num(0.0),
            a2: Expr::Num(0.0),
            u0: 0.0,
            half_width: std::f64::consts::PI,
        }
    }

    fn field<T: Real>(&self, p: &[Jet<T>; 2], u: &Jet<T>) -> Result<[Jet<T>; 2]> {
        let env = Env::state(p[0].clone(), p[1].clone(), u.clone());
        Ok([self.a1.eval(&env)? + &p[1], self.a2.eval(&env)? - &p[0]])
    }

    /// Jet of `P_u(q)` in `(δq1, δq2, δu)` at the given degree.
    pub fn flow_jet<T: Real>(&self, q: [T; 2], u: T, degree: usize) -> Result<[Jet<T>; 2]> {
        let p0 = [Jet::variable(0, q[0], degree, 3)?, Jet::variable(1, q[1], degree, 3)?];
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(1e3));
        let opts = OdeOptions {
            rtol: tol,
            atol: tol * T::lit(1e-2),
            ..OdeOptions::default()
        };
        let u0 = T::lit(self.u0);
        let sol = dormand_prince(
            |s: T, y: &[Jet<T>; 2]| self.field(y, &y[0].lift(s)),
            u0,
            p0,
            u,
            &opts,
        );
        if let Some((t, e)) = sol.failure {
            return Err(Error::Invalid(format!("normal-form flow failed at u = {t}: {e}")));
        }
        let end = sol.y_end().clone();
        if !(end[0].is_finite() && end[1].is_finite()) {
            return Err(Error::Invalid("normal-form flow escaped".into()));
        }
        // extend in δu by Picard iteration; each pass fixes one more order
        let uj = Jet::variable(2, u, degree, 3)?;
        let mut pj = end.clone();
        for _ in 0..=degree {
            let x = self.field(&pj, &uj)?;
            pj = [
                &end[0] + &x[0].antiderivative(2)?.truncate(degree),
                &end[1] + &x[1].antiderivative(2)?.truncate(degree),
            ];
        }
        Ok(pj)
    }
}

/// Evaluator for a [`FlatNormalForm`].
#[derive(Debug, Clone, PartialEq)]
pub struct FlatNormalFormProblem {
    pub form: FlatNormalForm,
}

pub fn flat_normal_form_problem(form: &FlatNormalForm) -> FlatNormalFormProblem {
    FlatNormalFormProblem { form: form.clone() }
}

impl FlatNormalFormProblem {
    /// `(DP_u)⁻¹` columns `(f, f_u)` at a point, for checks of the second
    /// column against the derivative of the first.
    pub fn inverse_jacobian<T: Real>(&self, q: [T; 2], u: T) -> Result<[[T; 2]; 2]> {
        let pj = self.form.flow_jet(q, u, 1)?;
        let d = [
            [pj[0].derivative(0)?.value(), pj[0].derivative(1)?.value()],
            [pj[1].derivative(0)?.value(), pj[1].derivative(1)?.value()],
        ];
        let det = d[0][0] * d[1][1] - d[0][1] * d[1][0];
        Ok([[d[1][1] / det, -d[1][0] / det], [-d[0][1] / det, d[0][0] / det]])
    }
}

fn is_coordinate<T: Real>(j: &Jet<T>, index: usize) -> bool {
    match Jet::variable(index, j.value(), j.degree(), 3) {
        Ok(v) => v == *j,
        Err(_) => false,
    }
}

impl<T: Real> Dynamics<T> for FlatNormalFormProblem {
    fn eval_jets(&self, q1: &Jet<T>, q2: &Jet<T>, u: &Jet<T>) -> Result<[Jet<T>; 3]> {
        let d = q1.degree();
        let (q, ub) = ([q1.value(), q2.value()], u.value());
        let pj = self.form.flow_jet(q, ub, d + 1)?;
        let dp = [
            [pj[0].derivative(0)?, pj[0].derivative(1)?],
            [pj[1].derivative(0)?, pj[1].derivative(1)?],
        ];
        let det = &dp[0][0] * &dp[1][1] - &dp[0][1] * &dp[1][0];
        if det.value().abs() < T::lit(1e-12) {
            return Err(Error::regularity([q[0].as_f64(), q[1].as_f64()], ub.as_f64(), "DP_u is singular"));
        }
        let f = [dp[1][1].try_div(&det)?, (-&dp[1][0]).try_div(&det)?];
        let f = if q1.nvars() == 3 && is_coordinate(q1, 0) && is_coordinate(q2, 1) && is_coordinate(u, 2) {
            f
        } else {
            let args = [q1.clone(), q2.clone(), u.clone()];
            [f[0].substitute(&args)?, f[1].substitute(&args)?]
        };
        let one = f[0].lift(T::one());
        Ok([f[0].clone(), f[1].clone(), one])
    }

    fn energy(&self) -> T {
        T::zero()
    }

    fn control_domain(&self) -> ControlDomain {
        ControlDomain::Interval {
            lo: self.form.u0 - self.form.half_width,
            hi: self.form.u0 + self.form.half_width,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structural_constants_of_builtin_frames() {
        let (c1, c2) = RiemannianFrame::euclidean().structural_constants([0.3, 0.4f64]).unwrap();
        assert_eq!((c1, c2), (0.0, 0.0));
        let (c1, c2) = RiemannianFrame::half_plane().structural_constants([0.3, 0.4f64]).unwrap();
        assert!((c1 + 1.0).abs() < 1e-15 && c2.abs() < 1e-15);
        let (c1, c2) = RiemannianFrame::sphere().structural_constants([std::f64::consts::FRAC_PI_2, 0.3]).unwrap();
        assert!(c1.abs() < 1e-15 && c2.abs() < 1e-15);
        let q1 = 0.7f64;
        let (_, c2) = RiemannianFrame::sphere().structural_constants([q1, 0.0]).unwrap();
        assert!((c2 + 1.0 / q1.tan()).abs() < 1e-14);
    }

    #[test]
    fn degenerate_frame_is_rejected() {
        let f = RiemannianFrame::new([p("1"), p("0")], [p("2"), p("0")]).unwrap();
        assert!(matches!(f.structural_constants([0.0, 0.0f64]), Err(Error::DegenerateFrame { .. })));
    }

    #[test]
    fn euclidean_riemannian_problem() {
        let pr = riemannian_problem(&RiemannianFrame::euclidean()).unwrap();
        assert_eq!(pr.f()[0].to_string(), "cos(u)");
        assert_eq!(pr.f()[1].to_string(), "sin(u)");
    }

    #[test]
    fn zermelo_linear_form() {
        let z = ZermeloSpec::linear(0.8, 0.5);
        let v: f64 = z.x[1].eval_at(&1.0, &2.0, &0.0).unwrap();
        assert!((v - (-0.5 + 1.6)).abs() < 1e-15);
        let again = ZermeloSpec::new(z.x[0].clone(), z.x[1].clone()).with_linear(0.8, 0.5);
        assert!(again.is_ok());
        assert!(ZermeloSpec::new(z.x[0].clone(), z.x[1].clone()).with_linear(0.8, 0.4).is_err());
        let pr = zermelo_problem(&z).unwrap();
        assert!(Dynamics::<f64>::admissible(&pr, [0.1, 0.1], 0.0).is_ok());
        assert!(matches!(
            Dynamics::<f64>::admissible(&pr, [2.0, 0.0], 0.0),
            Err(Error::DriftTooStrong { .. })
        ));
    }

    #[test]
    fn translation_invariant_checks() {
        assert!(translation_invariant_problem(p("cos(u) + 0.5"), p("sin(u)")).is_ok());
        assert!(translation_invariant_problem(p("cos(u) + q1"), p("sin(u)")).is_err());
        assert!(translation_invariant_problem(p("1"), p("u")).is_err());
    }

    #[test]
    fn rotation_generator_is_euclidean() {
        let pr = flat_normal_form_problem(&FlatNormalForm::rotation());
        for &(q, u) in &[([0.3, -0.2], 0.4), ([1.0, 2.0], -1.2)] {
            let f = Dynamics::<f64>::eval_point(&pr, q, u).unwrap();
            assert!((f[0] - u.cos()).abs() < 1e-10 && (f[1] - u.sin()).abs() < 1e-10, "{f:?}");
        }
    }

    #[test]
    fn generated_second_column() {
        let form = FlatNormalForm::new(p("0.3*sin(u)"), p("0.2*q2^2 + 0.1*u"), 0.0, &BTreeMap::new()).unwrap();
        let pr = flat_normal_form_problem(&form);
        let (q, u): ([f64; 2], f64) = ([0.2, -0.1], 0.7);
        let v = Jet::variables(&[q[0], q[1], u], 1).unwrap();
        let f = pr.eval_jets(&v[0], &v[1], &v[2]).unwrap();
        let inv = pr.inverse_jacobian(q, u).unwrap();
        for i in 0..2 {
            assert!((f[i].value() - inv[0][i]).abs() < 1e-12);
            assert!((f[i].extract_partial(&[0, 0, 1]).unwrap() - inv[1][i]).abs() < 1e-6);
        }
    }

    #[test]
    fn generated_problem_composes_with_general_jets() {
        let form = FlatNormalForm::new(p("1"), p("0"), 0.0, &BTreeMap::new()).unwrap();
        let pr = flat_normal_form_problem(&form);
        let v = Jet::variables(&[0.1, 0.2, 0.3f64], 3).unwrap();
        // q1 ↦ q1 + 0.1 q2² as input jet
        let q1 = &v[0] + &(v[1].square() * 0.1) - 0.004;
        let composed = pr.eval_jets(&q1, &v[1], &v[2]).unwrap();
        let w = Jet::variables(&[q1.value(), 0.2, 0.3f64], 3).unwrap();
        let direct = pr.eval_jets(&w[0], &w[1], &w[2]).unwrap();
        let manual = direct[0].substitute(&[q1.clone(), v[1].clone(), v[2].clone()]).unwrap();
        assert!((&composed[0] - &manual).max_abs() < 1e-12);
    }
}
