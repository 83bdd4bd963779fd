//! Truncated multivariate Taylor jets in up to three variables.
//!
//! A [`Jet`] of degree `d` in `n` variables stores the Taylor coefficients
//! (partial derivative divided by the multi-index factorial) of a smooth
//! function at a base point, for every multi-index of total order `≤ d`.
//! Coefficients are dense and ordered graded-lexicographically, so the
//! coefficients of a lower-degree truncation are always a prefix.
//!
//! Binary operations between jets of different degrees truncate to the
//! smaller degree: the product of two degree-`d` expansions is only known up
//! to degree `d`, and a derivative consumes one degree. This lets the fiber
//! pipeline mix raw evaluations with differentiated quantities freely.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use crate::Real;

pub const MAX_VARS: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JetError {
    #[error("jets have 1 to {MAX_VARS} variables, got {0}")]
    Arity(usize),
    #[error("variable index {index} out of range for {nvars} variable(s)")]
    VariableIndex { index: usize, nvars: usize },
    #[error("division by a jet with zero constant term")]
    DivisionByZero,
    #[error("{func} is not smooth at {value}")]
    Domain { func: &'static str, value: f64 },
    #[error("derivative order {order} exceeds jet degree {degree}")]
    Order { order: usize, degree: usize },
    #[error("jet shapes disagree: {0}")]
    Mismatch(String),
}

/// Univariate analytic functions that can be composed with a jet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementary {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Atan,
    Recip,
    Pow(f64),
}

impl Elementary {
    pub fn name(self) -> &'static str {
        match self {
            Elementary::Sin => "sin",
            Elementary::Cos => "cos",
            Elementary::Exp => "exp",
            Elementary::Log => "log",
            Elementary::Sqrt => "sqrt",
            Elementary::Atan => "atan",
            Elementary::Recip => "recip",
            Elementary::Pow(_) => "pow",
        }
    }
}

/// Multi-index bookkeeping shared by every jet of a given shape.
#[derive(Debug)]
pub struct Layout {
    nvars: usize,
    degree: usize,
    indices: Vec<[u8; MAX_VARS]>,
    positions: Vec<u32>,
    // (i, j, k) with index_i + index_j = index_k, grouped by k
    products: Vec<(u32, u32, u32)>,
    product_starts: Vec<usize>,
}

const ABSENT: u32 = u32::MAX;

impl Layout {
    fn build(nvars: usize, degree: usize) -> Layout {
        let mut indices = Vec::new();
        for total in 0..=degree {
            match nvars {
                1 => indices.push([total as u8, 0, 0]),
                2 => {
                    for a0 in (0..=total).rev() {
                        indices.push([a0 as u8, (total - a0) as u8, 0]);
                    }
                }
                _ => {
                    for a0 in (0..=total).rev() {
                        for a1 in (0..=total - a0).rev() {
                            indices.push([a0 as u8, a1 as u8, (total - a0 - a1) as u8]);
                        }
                    }
                }
            }
        }
        let side = degree + 1;
        let mut positions = vec![ABSENT; side * side * side];
        for (pos, idx) in indices.iter().enumerate() {
            positions[Self::slot(side, idx)] = pos as u32;
        }
        let mut products = Vec::new();
        let mut product_starts = Vec::with_capacity(indices.len() + 1);
        for (k, ik) in indices.iter().enumerate() {
            product_starts.push(products.len());
            for (i, ii) in indices.iter().enumerate().take(k + 1) {
                if (0..MAX_VARS).all(|v| ii[v] <= ik[v]) {
                    let rest = [ik[0] - ii[0], ik[1] - ii[1], ik[2] - ii[2]];
                    let j = positions[Self::slot(side, &rest)];
                    products.push((i as u32, j, k as u32));
                }
            }
        }
        product_starts.push(products.len());
        Layout {
            nvars,
            degree,
            indices,
            positions,
            products,
            product_starts,
        }
    }

    #[inline]
    fn slot(side: usize, idx: &[u8; MAX_VARS]) -> usize {
        (idx[0] as usize * side + idx[1] as usize) * side + idx[2] as usize
    }

    fn get(nvars: usize, degree: usize) -> Arc<Layout> {
        thread_local! {
            static CACHE: RefCell<HashMap<(usize, usize), Arc<Layout>>> = RefCell::new(HashMap::new());
        }
        CACHE.with(|cache| {
            cache
                .borrow_mut()
                .entry((nvars, degree))
                .or_insert_with(|| Arc::new(Layout::build(nvars, degree)))
                .clone()
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn position(&self, idx: &[u8; MAX_VARS]) -> Option<usize> {
        if idx.iter().any(|&a| a as usize > self.degree) {
            return None;
        }
        match self.positions[Self::slot(self.degree + 1, idx)] {
            ABSENT => None,
            p => Some(p as usize),
        }
    }
}

/// Number of coefficients of a jet: `binomial(nvars + degree, degree)`.
pub fn coefficient_count(nvars: usize, degree: usize) -> usize {
    let mut num = 1usize;
    let mut den = 1usize;
    for k in 1..=nvars {
        num *= degree + k;
        den *= k;
    }
    num / den
}

/// Truncated Taylor expansion of a smooth function of `nvars` variables.
#[derive(Clone)]
pub struct Jet<T> {
    layout: Arc<Layout>,
    coeffs: Vec<T>,
}

impl<T: Real> Jet<T> {
    fn check_arity(nvars: usize) -> Result<(), JetError> {
        if (1..=MAX_VARS).contains(&nvars) {
            Ok(())
        } else {
            Err(JetError::Arity(nvars))
        }
    }

    pub fn constant(value: T, degree: usize, nvars: usize) -> Result<Self, JetError> {
        Self::check_arity(nvars)?;
        let layout = Layout::get(nvars, degree);
        let mut coeffs = vec![T::zero(); layout.len()];
        coeffs[0] = value;
        Ok(Jet { layout, coeffs })
    }

    /// The coordinate function `x_index` expanded at `base_value`.
    pub fn variable(index: usize, base_value: T, degree: usize, nvars: usize) -> Result<Self, JetError> {
        Self::check_arity(nvars)?;
        if index >= nvars {
            return Err(JetError::VariableIndex { index, nvars });
        }
        let mut jet = Self::constant(base_value, degree, nvars)?;
        if degree >= 1 {
            let mut idx = [0u8; MAX_VARS];
            idx[index] = 1;
            let pos = jet.layout.position(&idx).expect("first-order index");
            jet.coeffs[pos] = T::one();
        }
        Ok(jet)
    }

    /// Jets of all coordinate functions at `base`, i.e. the identity map.
    pub fn variables(base: &[T], degree: usize) -> Result<Vec<Self>, JetError> {
        base.iter()
            .enumerate()
            .map(|(i, &b)| Self::variable(i, b, degree, base.len()))
            .collect()
    }

    pub fn from_coeffs(nvars: usize, degree: usize, coeffs: Vec<T>) -> Result<Self, JetError> {
        Self::check_arity(nvars)?;
        let layout = Layout::get(nvars, degree);
        if coeffs.len() != layout.len() {
            return Err(JetError::Mismatch(format!(
                "{} coefficients supplied, {} expected",
                coeffs.len(),
                layout.len()
            )));
        }
        Ok(Jet { layout, coeffs })
    }

    /// A constant with the same shape as `self`.
    pub fn lift(&self, value: T) -> Self {
        let mut coeffs = vec![T::zero(); self.coeffs.len()];
        coeffs[0] = value;
        Jet {
            layout: self.layout.clone(),
            coeffs,
        }
    }

    pub fn zero_like(&self) -> Self {
        self.lift(T::zero())
    }

    pub fn degree(&self) -> usize {
        self.layout.degree
    }

    pub fn nvars(&self) -> usize {
        self.layout.nvars
    }

    pub fn value(&self) -> T {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Multi-indices in storage order.
    pub fn multi_indices(&self) -> impl Iterator<Item = &[u8]> + '_ {
        let n = self.layout.nvars;
        self.layout.indices.iter().map(move |idx| &idx[..n])
    }

    fn pad(&self, multi: &[usize]) -> Result<[u8; MAX_VARS], JetError> {
        if multi.len() != self.nvars() {
            return Err(JetError::Mismatch(format!(
                "multi-index of length {} for a jet in {} variable(s)",
                multi.len(),
                self.nvars()
            )));
        }
        let order: usize = multi.iter().sum();
        if order > self.degree() {
            return Err(JetError::Order {
                order,
                degree: self.degree(),
            });
        }
        let mut idx = [0u8; MAX_VARS];
        for (slot, &m) in idx.iter_mut().zip(multi) {
            *slot = m as u8;
        }
        Ok(idx)
    }

    /// Taylor coefficient of the given multi-index.
    pub fn coeff(&self, multi: &[usize]) -> Result<T, JetError> {
        let idx = self.pad(multi)?;
        Ok(self.coeffs[self.layout.position(&idx).expect("index within degree")])
    }

    /// The partial derivative `∂^|α| / ∂x^α` at the base point.
    pub fn extract_partial(&self, multi: &[usize]) -> Result<T, JetError> {
        let c = self.coeff(multi)?;
        let factorial: f64 = multi
            .iter()
            .map(|&m| (1..=m).map(|k| k as f64).product::<f64>())
            .product();
        Ok(c * T::lit(factorial))
    }

    /// First partial derivative with respect to `var`, as a jet one degree lower.
    pub fn derivative(&self, var: usize) -> Result<Self, JetError> {
        if var >= self.nvars() {
            return Err(JetError::VariableIndex {
                index: var,
                nvars: self.nvars(),
            });
        }
        if self.degree() == 0 {
            return Err(JetError::Order { order: 1, degree: 0 });
        }
        let layout = Layout::get(self.nvars(), self.degree() - 1);
        let coeffs = layout
            .indices
            .iter()
            .map(|idx| {
                let mut up = *idx;
                up[var] += 1;
                let pos = self.layout.position(&up).expect("raised index within degree");
                self.coeffs[pos] * T::lit(up[var] as f64)
            })
            .collect();
        Ok(Jet { layout, coeffs })
    }

    /// Antiderivative in `var` vanishing on `x_var = base`, one degree higher.
    pub fn antiderivative(&self, var: usize) -> Result<Self, JetError> {
        if var >= self.nvars() {
            return Err(JetError::VariableIndex {
                index: var,
                nvars: self.nvars(),
            });
        }
        let layout = Layout::get(self.nvars(), self.degree() + 1);
        let mut coeffs = vec![T::zero(); layout.len()];
        for (idx, &c) in self.layout.indices.iter().zip(&self.coeffs) {
            let mut up = *idx;
            up[var] += 1;
            let pos = layout.position(&up).expect("raised index within degree");
            coeffs[pos] = c / T::lit(up[var] as f64);
        }
        Ok(Jet { layout, coeffs })
    }

    /// Drops every term that depends on `var`, i.e. restricts to `x_var = base`.
    pub fn restrict_to_base(&self, var: usize) -> Self {
        let mut out = self.clone();
        for (idx, c) in self.layout.indices.iter().zip(out.coeffs.iter_mut()) {
            if idx[var] > 0 {
                *c = T::zero();
            }
        }
        out
    }

    pub fn truncate(&self, degree: usize) -> Self {
        if degree >= self.degree() {
            return self.clone();
        }
        let layout = Layout::get(self.nvars(), degree);
        let coeffs = self.coeffs[..layout.len()].to_vec();
        Jet { layout, coeffs }
    }

    fn common<'a>(&'a self, other: &'a Self) -> (Arc<Layout>, &'a [T], &'a [T]) {
        assert_eq!(
            self.nvars(),
            other.nvars(),
            "jets in different numbers of variables"
        );
        let layout = if self.degree() <= other.degree() {
            self.layout.clone()
        } else {
            other.layout.clone()
        };
        let n = layout.len();
        (layout, &self.coeffs[..n], &other.coeffs[..n])
    }

    fn check_shape(&self, other: &Self) -> Result<(), JetError> {
        if self.nvars() != other.nvars() || self.degree() != other.degree() {
            return Err(JetError::Mismatch(format!(
                "({} vars, degree {}) vs ({} vars, degree {})",
                self.nvars(),
                self.degree(),
                other.nvars(),
                other.degree()
            )));
        }
        Ok(())
    }

    fn mul_ref(&self, other: &Self) -> Self {
        let (layout, a, b) = self.common(other);
        let mut coeffs = vec![T::zero(); layout.len()];
        for &(i, j, k) in &layout.products {
            coeffs[k as usize] = coeffs[k as usize] + a[i as usize] * b[j as usize];
        }
        Jet { layout, coeffs }
    }

    /// Solves `other · c = self` degree by degree.
    pub fn try_div(&self, other: &Self) -> Result<Self, JetError> {
        let (layout, a, b) = self.common(other);
        let b0 = b[0];
        if b0 == T::zero() {
            return Err(JetError::DivisionByZero);
        }
        let mut coeffs = vec![T::zero(); layout.len()];
        for k in 0..layout.len() {
            let mut acc = a[k];
            for &(i, j, _) in &layout.products[layout.product_starts[k]..layout.product_starts[k + 1]] {
                if i != 0 {
                    acc = acc - b[i as usize] * coeffs[j as usize];
                }
            }
            coeffs[k] = acc / b0;
        }
        Ok(Jet { layout, coeffs })
    }

    /// Arithmetic with the shape check of the public contract: both operands
    /// must share degree and number of variables.
    pub fn arith(&self, other: &Self, op: ArithOp) -> Result<Self, JetError> {
        self.check_shape(other)?;
        Ok(match op {
            ArithOp::Add => self + other,
            ArithOp::Sub => self - other,
            ArithOp::Mul => self * other,
            ArithOp::Div => self.try_div(other)?,
        })
    }

    pub fn recip(&self) -> Result<Self, JetError> {
        self.lift(T::one()).try_div(self)
    }

    pub fn square(&self) -> Self {
        self * self
    }

    /// Integer power by repeated squaring; negative powers go through `recip`.
    pub fn powi(&self, n: i32) -> Result<Self, JetError> {
        let base = if n < 0 { self.recip()? } else { self.clone() };
        let mut e = n.unsigned_abs();
        let mut acc = self.lift(T::one());
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &sq;
            }
            e >>= 1;
            if e > 0 {
                sq = sq.square();
            }
        }
        Ok(acc)
    }

    pub fn compose(&self, func: Elementary) -> Result<Self, JetError> {
        let series = univariate_series(func, self.value(), self.degree())?;
        Ok(self.apply_series(&series))
    }

    /// `Σ series[n] (self - value)^n` by Horner's rule.
    pub fn apply_series(&self, series: &[T]) -> Self {
        let mut shift = self.clone();
        shift.coeffs[0] = T::zero();
        let mut acc = self.lift(*series.last().expect("non-empty series"));
        for &c in series.iter().rev().skip(1) {
            acc = &acc * &shift;
            acc.coeffs[0] = acc.coeffs[0] + c;
        }
        acc
    }

    pub fn sin(&self) -> Self {
        self.compose(Elementary::Sin).expect("sin is entire")
    }

    pub fn cos(&self) -> Self {
        self.compose(Elementary::Cos).expect("cos is entire")
    }

    pub fn exp(&self) -> Self {
        self.compose(Elementary::Exp).expect("exp is entire")
    }

    pub fn ln(&self) -> Result<Self, JetError> {
        self.compose(Elementary::Log)
    }

    pub fn sqrt(&self) -> Result<Self, JetError> {
        self.compose(Elementary::Sqrt)
    }

    pub fn atan(&self) -> Self {
        self.compose(Elementary::Atan).expect("atan is entire")
    }

    pub fn tan(&self) -> Result<Self, JetError> {
        let c = self.cos();
        if c.value() == T::zero() {
            return Err(JetError::Domain {
                func: "tan",
                value: self.value().as_f64(),
            });
        }
        self.sin().try_div(&c)
    }

    /// Real power; integral exponents go through [`Jet::powi`] and have no
    /// sign restriction on the base.
    pub fn powf(&self, r: f64) -> Result<Self, JetError> {
        if r.fract() == 0.0 && r.abs() <= i32::MAX as f64 {
            return self.powi(r as i32);
        }
        self.compose(Elementary::Pow(r))
    }

    /// Four-quadrant arctangent of `self / x`, smooth away from the origin.
    pub fn atan2(&self, x: &Self) -> Result<Self, JetError> {
        let (y0, x0) = (self.value(), x.value());
        if y0 == T::zero() && x0 == T::zero() {
            return Err(JetError::Domain {
                func: "atan2",
                value: 0.0,
            });
        }
        // the nilpotent part of atan2 agrees with that of either ratio form
        let mut out = if x0.abs() >= y0.abs() {
            self.try_div(x)?.atan()
        } else {
            -x.try_div(self)?.atan()
        };
        out.coeffs[0] = y0.atan2(x0);
        Ok(out)
    }

    /// Substitutes jets for the variables: `self(args - base)`.
    ///
    /// `args` must have one jet per variable of `self`, all sharing a shape;
    /// their constant terms are taken to be the expansion point of `self`.
    pub fn substitute(&self, args: &[Jet<T>]) -> Result<Self, JetError> {
        if args.len() != self.nvars() {
            return Err(JetError::Mismatch(format!(
                "{} arguments for a jet in {} variable(s)",
                args.len(),
                self.nvars()
            )));
        }
        let template = &args[0];
        let degree = template.degree().min(self.degree());
        let shifts: Vec<Jet<T>> = args
            .iter()
            .map(|a| {
                let mut s = a.truncate(degree);
                s.coeffs[0] = T::zero();
                s
            })
            .collect();
        // powers[v][p] = shift_v^p
        let powers: Vec<Vec<Jet<T>>> = shifts
            .iter()
            .map(|s| {
                let mut pw = vec![s.lift(T::one())];
                for p in 1..=degree {
                    let next = &pw[p - 1] * s;
                    pw.push(next);
                }
                pw
            })
            .collect();
        let mut out = shifts[0].zero_like();
        for (idx, &c) in self.layout.indices.iter().zip(&self.coeffs) {
            let total: usize = idx.iter().map(|&a| a as usize).sum();
            if total > degree || c == T::zero() {
                continue;
            }
            let mut term = powers[0][idx[0] as usize].clone();
            for v in 1..self.nvars() {
                if idx[v] > 0 {
                    term = &term * &powers[v][idx[v] as usize];
                }
            }
            out = out + term * c;
        }
        Ok(out)
    }

    /// Evaluates the Taylor polynomial at the offset `h` from the base point.
    pub fn eval_polynomial(&self, h: &[T]) -> T {
        self.layout
            .indices
            .iter()
            .zip(&self.coeffs)
            .map(|(idx, &c)| {
                let mut term = c;
                for (v, &hv) in h.iter().enumerate().take(self.nvars()) {
                    term = term * hv.powi(idx[v] as i32);
                }
                term
            })
            .sum()
    }

    /// Largest coefficient magnitude.
    pub fn max_abs(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |m, c| m.max(c.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Taylor coefficients `f^(n)(x0) / n!` for `n = 0..=degree`.
pub fn univariate_series<T: Real>(func: Elementary, x0: T, degree: usize) -> Result<Vec<T>, JetError> {
    let domain = |func: &'static str| JetError::Domain {
        func,
        value: x0.as_f64(),
    };
    let mut out = Vec::with_capacity(degree + 1);
    let mut fact = T::one();
    match func {
        Elementary::Sin | Elementary::Cos => {
            let (s, c) = x0.sin_cos();
            // derivatives of sin cycle through sin, cos, -sin, -cos
            let cycle = [s, c, -s, -c];
            let offset = if func == Elementary::Sin { 0 } else { 1 };
            for n in 0..=degree {
                if n > 0 {
                    fact = fact * T::lit(n as f64);
                }
                out.push(cycle[(n + offset) % 4] / fact);
            }
        }
        Elementary::Exp => {
            let e = x0.exp();
            for n in 0..=degree {
                if n > 0 {
                    fact = fact * T::lit(n as f64);
                }
                out.push(e / fact);
            }
        }
        Elementary::Log => {
            if !(x0 > T::zero()) {
                return Err(domain("log"));
            }
            out.push(x0.ln());
            let mut p = T::one();
            for n in 1..=degree {
                p = p * x0;
                let sign = if n % 2 == 1 { T::one() } else { -T::one() };
                out.push(sign / (T::lit(n as f64) * p));
            }
        }
        Elementary::Recip => {
            if x0 == T::zero() {
                return Err(JetError::DivisionByZero);
            }
            let inv = x0.recip();
            let mut p = inv;
            for _ in 0..=degree {
                out.push(p);
                p = -p * inv;
            }
        }
        Elementary::Sqrt | Elementary::Pow(_) => {
            let (r, name) = match func {
                Elementary::Pow(r) => (r, "pow"),
                _ => (0.5, "sqrt"),
            };
            let integral = r.fract() == 0.0 && r >= 0.0;
            if degree == 0 && !integral {
                if x0 < T::zero() || (x0 == T::zero() && r < 0.0) {
                    return Err(domain(name));
                }
                out.push(x0.powf(T::lit(r)));
                return Ok(out);
            }
            if integral {
                // polynomial: binomial expansion terminates, no domain issue
                let mut binom = T::one();
                for n in 0..=degree {
                    if n > 0 {
                        binom = binom * T::lit(r - (n - 1) as f64) / T::lit(n as f64);
                    }
                    let c = if (n as f64) <= r {
                        binom * x0.powi((r as i32) - n as i32)
                    } else {
                        T::zero()
                    };
                    out.push(c);
                }
                return Ok(out);
            }
            if !(x0 > T::zero()) {
                return Err(domain(name));
            }
            let mut binom = T::one();
            for n in 0..=degree {
                if n > 0 {
                    binom = binom * T::lit(r - (n - 1) as f64) / T::lit(n as f64);
                }
                out.push(binom * x0.powf(T::lit(r - n as f64)));
            }
        }
        Elementary::Atan => {
            out.push(x0.atan());
            if degree >= 1 {
                // atan' = 1 / (1 + x^2); expand the quadratic (1 + x0^2) + 2 x0 t + t^2
                let den = [T::one() + x0 * x0, T::lit(2.0) * x0, T::one()];
                let mut g: Vec<T> = Vec::with_capacity(degree);
                for n in 0..degree {
                    let mut acc = if n == 0 { T::one() } else { T::zero() };
                    for k in 1..=2.min(n) {
                        acc = acc - den[k] * g[n - k];
                    }
                    g.push(acc / den[0]);
                }
                for (n, gn) in g.iter().enumerate() {
                    out.push(*gn / T::lit((n + 1) as f64));
                }
            }
        }
    }
    Ok(out)
}

impl<T: Real> fmt::Debug for Jet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet(n={}, d={}) {{", self.nvars(), self.degree())?;
        for (i, (idx, c)) in self.multi_indices().zip(&self.coeffs).enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, " {idx:?}: {c:?}")?;
        }
        write!(f, " }}")
    }
}

impl<T: Real> PartialEq for Jet<T> {
    fn eq(&self, other: &Self) -> bool {
        self.nvars() == other.nvars() && self.degree() == other.degree() && self.coeffs == other.coeffs
    }
}

macro_rules! additive_op {
    ($trait:ident, $method:ident, $op:tt) => {
        impl<'a, T: Real> $trait<&'a Jet<T>> for &'a Jet<T> {
            type Output = Jet<T>;
            fn $method(self, rhs: &'a Jet<T>) -> Jet<T> {
                let (layout, a, b) = self.common(rhs);
                let coeffs = a.iter().zip(b).map(|(&x, &y)| x $op y).collect();
                Jet { layout, coeffs }
            }
        }
        impl<T: Real> $trait<Jet<T>> for Jet<T> {
            type Output = Jet<T>;
            fn $method(self, rhs: Jet<T>) -> Jet<T> {
                (&self).$method(&rhs)
            }
        }
        impl<'a, T: Real> $trait<&'a Jet<T>> for Jet<T> {
            type Output = Jet<T>;
            fn $method(self, rhs: &'a Jet<T>) -> Jet<T> {
                (&self).$method(rhs)
            }
        }
        impl<'a, T: Real> $trait<Jet<T>> for &'a Jet<T> {
            type Output = Jet<T>;
            fn $method(self, rhs: Jet<T>) -> Jet<T> {
                self.$method(&rhs)
            }
        }
    };
}

additive_op!(Add, add, +);
additive_op!(Sub, sub, -);

impl<'a, T: Real> Mul<&'a Jet<T>> for &'a Jet<T> {
    type Output = Jet<T>;
    fn mul(self, rhs: &'a Jet<T>) -> Jet<T> {
        self.mul_ref(rhs)
    }
}

impl<T: Real> Mul<Jet<T>> for Jet<T> {
    type Output = Jet<T>;
    fn mul(self, rhs: Jet<T>) -> Jet<T> {
        self.mul_ref(&rhs)
    }
}

impl<'a, T: Real> Mul<&'a Jet<T>> for Jet<T> {
    type Output = Jet<T>;
    fn mul(self, rhs: &'a Jet<T>) -> Jet<T> {
        self.mul_ref(rhs)
    }
}

impl<'a, T: Real> Mul<Jet<T>> for &'a Jet<T> {
    type Output = Jet<T>;
    fn mul(self, rhs: Jet<T>) -> Jet<T> {
        self.mul_ref(&rhs)
    }
}

impl<T: Real> Mul<T> for Jet<T> {
    type Output = Jet<T>;
    fn mul(mut self, rhs: T) -> Jet<T> {
        for c in &mut self.coeffs {
            *c = *c * rhs;
        }
        self
    }
}

impl<'a, T: Real> Mul<T> for &'a Jet<T> {
    type Output = Jet<T>;
    fn mul(self, rhs: T) -> Jet<T> {
        self.clone() * rhs
    }
}

impl<T: Real> Add<T> for Jet<T> {
    type Output = Jet<T>;
    fn add(mut self, rhs: T) -> Jet<T> {
        self.coeffs[0] = self.coeffs[0] + rhs;
        self
    }
}

impl<'a, T: Real> Add<T> for &'a Jet<T> {
    type Output = Jet<T>;
    fn add(self, rhs: T) -> Jet<T> {
        self.clone() + rhs
    }
}

impl<T: Real> Sub<T> for Jet<T> {
    type Output = Jet<T>;
    fn sub(mut self, rhs: T) -> Jet<T> {
        self.coeffs[0] = self.coeffs[0] - rhs;
        self
    }
}

impl<'a, T: Real> Sub<T> for &'a Jet<T> {
    type Output = Jet<T>;
    fn sub(self, rhs: T) -> Jet<T> {
        self.clone() - rhs
    }
}

impl<T: Real> Neg for Jet<T> {
    type Output = Jet<T>;
    fn neg(mut self) -> Jet<T> {
        for c in &mut self.coeffs {
            *c = -*c;
        }
        self
    }
}

impl<'a, T: Real> Neg for &'a Jet<T> {
    type Output = Jet<T>;
    fn neg(self) -> Jet<T> {
        -self.clone()
    }
}

/// 2×2 determinant `a ∧ b` of plane vectors given as jets.
pub fn wedge<T: Real>(a: &[Jet<T>; 2], b: &[Jet<T>; 2]) -> Jet<T> {
    &a[0] * &b[1] - &a[1] * &b[0]
}
