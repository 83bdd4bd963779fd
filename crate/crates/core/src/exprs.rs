//! A small smooth expression language over `q1`, `q2`, `u` and named
//! parameters.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | identifier | function '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! so `^` binds tighter than unary minus, which binds tighter than `*` and
//! `/`; `^` is right-associative. Functions: `sin cos tan exp log sqrt atan
//! atan2`. Non-smooth primitives (`abs`, `min`, `max`, ...) are rejected.
//! Identifiers other than `q1`, `q2`, `u` and function names are parameters.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::jets::{Elementary, Jet, JetError};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    Q1,
    Q2,
    U,
}

impl Var {
    pub const ALL: [Var; 3] = [Var::Q1, Var::Q2, Var::U];

    pub fn index(self) -> usize {
        match self {
            Var::Q1 => 0,
            Var::Q2 => 1,
            Var::U => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::Q1 => "q1",
            Var::Q2 => "q2",
            Var::U => "u",
        }
    }

    fn from_name(name: &str) -> Option<Var> {
        match name {
            "q1" => Some(Var::Q1),
            "q2" => Some(Var::Q2),
            "u" => Some(Var::U),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Atan,
    Atan2,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Atan => "atan",
            Func::Atan2 => "atan2",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Atan2 => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "atan" => Func::Atan,
            "atan2" => Func::Atan2,
            _ => return None,
        })
    }
}

const NON_SMOOTH: &[&str] = &[
    "abs", "min", "max", "sign", "sgn", "floor", "ceil", "round", "trunc", "fract", "mod", "step",
    "heaviside",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

const PREC_UNARY: u8 = 3;
const PREC_ATOM: u8 = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Param(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("{name} takes {expected} argument(s), got {found} (offset {offset})")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
        offset: usize,
    },
    #[error("non-smooth primitive `{name}` at offset {offset} is not allowed")]
    NonSmooth { name: String, offset: usize },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::Arity { offset, .. }
            | ParseError::NonSmooth { offset, .. }
            | ParseError::UnknownFunction { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound identifier `{0}`")]
    Unbound(String),
    #[error(transparent)]
    Jet(#[from] JetError),
}

// ---------------------------------------------------------------------------
// lexing and parsing

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn lex(src: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit())) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value = text.parse::<f64>().map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })?;
            out.push((Token::Num(value), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Token::Ident(src[start..i].to_string()), start));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Token::Op(c),
                '(' => Token::LParen,
                ')' => Token::RParen,
                ',' => Token::Comma,
                _ => {
                    return Err(ParseError::Syntax {
                        offset: start,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            };
            i += c.len_utf8();
            out.push((tok, start));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(_, o)| *o)
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            offset: self.offset(),
            message: message.into(),
        }
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token::Op(c)) if ops.contains(c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.eat_op(&['+', '-']) {
            let rhs = self.term()?;
            let op = if op == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            let op = if op == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_op(&['-']).is_some() {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat_op(&['^']).is_some() {
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        let Some(tok) = self.tokens.get(self.pos).map(|(t, _)| t.clone()) else {
            return Err(self.error("unexpected end of input"));
        };
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::LParen => {
                let inner = self.expr()?;
                match self.peek() {
                    Some(Token::RParen) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(self.error("expected `)`")),
                }
            }
            Token::Ident(name) => {
                let is_call = matches!(self.peek(), Some(Token::LParen));
                if NON_SMOOTH.contains(&name.as_str()) {
                    return Err(ParseError::NonSmooth { name, offset });
                }
                if let Some(func) = Func::from_name(&name) {
                    if !is_call {
                        return Err(self.error(format!("expected `(` after `{name}`")));
                    }
                    self.pos += 1;
                    let args = self.arguments()?;
                    if args.len() != func.arity() {
                        return Err(ParseError::Arity {
                            name,
                            expected: func.arity(),
                            found: args.len(),
                            offset,
                        });
                    }
                    return Ok(Expr::Call(func, args));
                }
                if is_call {
                    return Err(ParseError::UnknownFunction { name, offset });
                }
                Ok(match Var::from_name(&name) {
                    Some(v) => Expr::Var(v),
                    None => Expr::Param(name),
                })
            }
            _ => {
                self.pos -= 1;
                Err(self.error("expected a number, identifier or `(`"))
            }
        }
    }

    fn arguments(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut args = Vec::new();
        if matches!(self.peek(), Some(Token::RParen)) {
            self.pos += 1;
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            match self.peek() {
                Some(Token::Comma) => self.pos += 1,
                Some(Token::RParen) => {
                    self.pos += 1;
                    return Ok(args);
                }
                _ => return Err(self.error("expected `,` or `)`")),
            }
        }
    }
}

pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let tokens = lex(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: source.len(),
    };
    let expr = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(expr)
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

// ---------------------------------------------------------------------------
// printing

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Param(_) | Expr::Call(..) => PREC_ATOM,
            Expr::Neg(_) => PREC_UNARY,
            Expr::Binary(op, ..) => op.precedence(),
        }
    }
}

struct Wrapped<'a>(&'a Expr, bool);

impl fmt::Display for Wrapped<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.1 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 {
                    write!(f, "({v:?})")
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Param(p) => f.write_str(p),
            Expr::Neg(a) => write!(f, "-{}", Wrapped(a, a.precedence() < PREC_UNARY)),
            Expr::Binary(BinOp::Pow, a, b) => write!(
                f,
                "{}^{}",
                Wrapped(a, a.precedence() <= BinOp::Pow.precedence()),
                Wrapped(b, b.precedence() < PREC_UNARY)
            ),
            Expr::Binary(op, a, b) => write!(
                f,
                "{} {} {}",
                Wrapped(a, a.precedence() < op.precedence()),
                op.symbol(),
                Wrapped(b, b.precedence() <= op.precedence())
            ),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// evaluation

/// Values an expression can be evaluated over: plain reals or jets.
pub trait Scalar: Clone {
    fn constant_like(&self, value: f64) -> Self;
    fn plus(&self, rhs: &Self) -> Self;
    fn minus(&self, rhs: &Self) -> Self;
    fn times(&self, rhs: &Self) -> Self;
    fn negate(&self) -> Self;
    fn divide(&self, rhs: &Self) -> Result<Self, JetError>;
    fn int_power(&self, n: i32) -> Result<Self, JetError>;
    fn real_power(&self, r: f64) -> Result<Self, JetError>;
    fn apply(&self, func: Func) -> Result<Self, JetError>;
    fn arctan2(&self, x: &Self) -> Result<Self, JetError>;
    /// Value at the base point.
    fn base(&self) -> f64;
}

fn real_domain<T: Real>(func: &'static str, x: T) -> JetError {
    JetError::Domain {
        func,
        value: x.as_f64(),
    }
}

impl<T: Real> Scalar for T {
    fn constant_like(&self, value: f64) -> Self {
        T::lit(value)
    }
    fn plus(&self, rhs: &Self) -> Self {
        *self + *rhs
    }
    fn minus(&self, rhs: &Self) -> Self {
        *self - *rhs
    }
    fn times(&self, rhs: &Self) -> Self {
        *self * *rhs
    }
    fn negate(&self) -> Self {
        -*self
    }
    fn divide(&self, rhs: &Self) -> Result<Self, JetError> {
        if *rhs == T::zero() {
            return Err(JetError::DivisionByZero);
        }
        Ok(*self / *rhs)
    }
    fn int_power(&self, n: i32) -> Result<Self, JetError> {
        // same squaring sequence as the jet version so degree-0 jets agree bitwise
        let base = if n < 0 { T::one().divide(self)? } else { *self };
        let mut e = n.unsigned_abs();
        let mut acc = T::one();
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * sq;
            }
            e >>= 1;
            if e > 0 {
                sq = sq * sq;
            }
        }
        Ok(acc)
    }
    fn real_power(&self, r: f64) -> Result<Self, JetError> {
        if r.fract() == 0.0 && r.abs() <= i32::MAX as f64 {
            return self.int_power(r as i32);
        }
        if *self < T::zero() || (*self == T::zero() && r < 0.0) {
            return Err(real_domain("pow", *self));
        }
        Ok(self.powf(T::lit(r)))
    }
    fn apply(&self, func: Func) -> Result<Self, JetError> {
        let x = *self;
        Ok(match func {
            Func::Sin => x.sin_cos().0,
            Func::Cos => x.sin_cos().1,
            Func::Tan => {
                let (s, c) = x.sin_cos();
                if c == T::zero() {
                    return Err(real_domain("tan", x));
                }
                s / c
            }
            Func::Exp => x.exp(),
            Func::Log => {
                if !(x > T::zero()) {
                    return Err(real_domain("log", x));
                }
                x.ln()
            }
            Func::Sqrt => {
                if x < T::zero() {
                    return Err(real_domain("sqrt", x));
                }
                x.sqrt()
            }
            Func::Atan => x.atan(),
            Func::Atan2 => unreachable!("binary function"),
        })
    }
    fn arctan2(&self, x: &Self) -> Result<Self, JetError> {
        if *self == T::zero() && *x == T::zero() {
            return Err(real_domain("atan2", T::zero()));
        }
        Ok(self.atan2(*x))
    }
    fn base(&self) -> f64 {
        self.as_f64()
    }
}

impl<T: Real> Scalar for Jet<T> {
    fn constant_like(&self, value: f64) -> Self {
        self.lift(T::lit(value))
    }
    fn plus(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn minus(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn times(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn negate(&self) -> Self {
        -self
    }
    fn divide(&self, rhs: &Self) -> Result<Self, JetError> {
        self.try_div(rhs)
    }
    fn int_power(&self, n: i32) -> Result<Self, JetError> {
        self.powi(n)
    }
    fn real_power(&self, r: f64) -> Result<Self, JetError> {
        self.powf(r)
    }
    fn apply(&self, func: Func) -> Result<Self, JetError> {
        match func {
            Func::Sin => self.compose(Elementary::Sin),
            Func::Cos => self.compose(Elementary::Cos),
            Func::Tan => self.tan(),
            Func::Exp => self.compose(Elementary::Exp),
            Func::Log => self.compose(Elementary::Log),
            Func::Sqrt => self.compose(Elementary::Sqrt),
            Func::Atan => self.compose(Elementary::Atan),
            Func::Atan2 => unreachable!("binary function"),
        }
    }
    fn arctan2(&self, x: &Self) -> Result<Self, JetError> {
        self.atan2(x)
    }
    fn base(&self) -> f64 {
        self.value().as_f64()
    }
}

/// Bindings of variables and parameters for [`Expr::eval`].
#[derive(Debug, Clone)]
pub struct Env<S> {
    template: S,
    vars: [Option<S>; 3],
    params: HashMap<String, S>,
}

impl<S: Scalar> Env<S> {
    /// `template` fixes the shape of literals (any value of the right ring).
    pub fn new(template: S) -> Self {
        Env {
            template,
            vars: [None, None, None],
            params: HashMap::new(),
        }
    }

    /// All three state/control variables bound; the template is `q1`.
    pub fn state(q1: S, q2: S, u: S) -> Self {
        Env {
            template: q1.clone(),
            vars: [Some(q1), Some(q2), Some(u)],
            params: HashMap::new(),
        }
    }

    pub fn with_var(mut self, var: Var, value: S) -> Self {
        self.vars[var.index()] = Some(value);
        self
    }

    pub fn with_param(mut self, name: impl Into<String>, value: S) -> Self {
        self.params.insert(name.into(), value);
        self
    }
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn call(func: Func, arg: Expr) -> Expr {
        Expr::Call(func, vec![arg])
    }

    fn is_num(&self, v: f64) -> bool {
        matches!(self, Expr::Num(x) if *x == v)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        if a.is_num(0.0) {
            return b;
        }
        if b.is_num(0.0) {
            return a;
        }
        Expr::Binary(BinOp::Add, Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        if b.is_num(0.0) {
            return a;
        }
        if a.is_num(0.0) {
            return Expr::neg(b);
        }
        Expr::Binary(BinOp::Sub, Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        if a.is_num(0.0) || b.is_num(0.0) {
            return Expr::Num(0.0);
        }
        if a.is_num(1.0) {
            return b;
        }
        if b.is_num(1.0) {
            return a;
        }
        Expr::Binary(BinOp::Mul, Box::new(a), Box::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        if a.is_num(0.0) {
            return Expr::Num(0.0);
        }
        if b.is_num(1.0) {
            return a;
        }
        Expr::Binary(BinOp::Div, Box::new(a), Box::new(b))
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        if b.is_num(1.0) {
            return a;
        }
        Expr::Binary(BinOp::Pow, Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Num(v) if v == 0.0 => Expr::Num(0.0),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    /// Value of a parameter-free, variable-free subexpression.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            Expr::Neg(a) => a.constant_value().map(|v| -v),
            Expr::Binary(op, a, b) => {
                let (x, y) = (a.constant_value()?, b.constant_value()?);
                Some(match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                    BinOp::Pow => x.powf(y),
                })
            }
            _ => None,
        }
    }

    pub fn eval<S: Scalar>(&self, env: &Env<S>) -> Result<S, EvalError> {
        Ok(match self {
            Expr::Num(v) => env.template.constant_like(*v),
            Expr::Var(v) => env.vars[v.index()]
                .clone()
                .ok_or_else(|| EvalError::Unbound(v.name().to_string()))?,
            Expr::Param(p) => env
                .params
                .get(p)
                .cloned()
                .ok_or_else(|| EvalError::Unbound(p.clone()))?,
            Expr::Neg(a) => a.eval(env)?.negate(),
            Expr::Binary(op, a, b) => {
                if *op == BinOp::Pow {
                    let base = a.eval(env)?;
                    if let Some(r) = b.constant_value() {
                        return Ok(base.real_power(r)?);
                    }
                    // general power b·log(a) requires a > 0
                    let exponent = b.eval(env)?;
                    let log = base.apply(Func::Log)?;
                    return Ok(exponent.times(&log).apply(Func::Exp)?);
                }
                let (x, y) = (a.eval(env)?, b.eval(env)?);
                match op {
                    BinOp::Add => x.plus(&y),
                    BinOp::Sub => x.minus(&y),
                    BinOp::Mul => x.times(&y),
                    BinOp::Div => x.divide(&y)?,
                    BinOp::Pow => unreachable!(),
                }
            }
            Expr::Call(Func::Atan2, args) => {
                let (y, x) = (args[0].eval(env)?, args[1].eval(env)?);
                y.arctan2(&x)?
            }
            Expr::Call(func, args) => args[0].eval(env)?.apply(*func)?,
        })
    }

    /// Evaluates a parameter-free expression at `(q1, q2, u)`.
    pub fn eval_at<S: Scalar>(&self, q1: &S, q2: &S, u: &S) -> Result<S, EvalError> {
        self.eval(&Env::state(q1.clone(), q2.clone(), u.clone()))
    }

    /// Replaces every parameter by its value.
    pub fn bind_params(&self, params: &BTreeMap<String, f64>) -> Result<Expr, EvalError> {
        Ok(match self {
            Expr::Param(p) => Expr::Num(*params.get(p).ok_or_else(|| EvalError::Unbound(p.clone()))?),
            Expr::Num(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(a) => Expr::Neg(Box::new(a.bind_params(params)?)),
            Expr::Binary(op, a, b) => {
                Expr::Binary(*op, Box::new(a.bind_params(params)?), Box::new(b.bind_params(params)?))
            }
            Expr::Call(f, args) => Expr::Call(
                *f,
                args.iter().map(|a| a.bind_params(params)).collect::<Result<_, _>>()?,
            ),
        })
    }

    /// Simultaneous substitution of the variables.
    pub fn substitute(&self, replacements: &[Option<&Expr>; 3]) -> Expr {
        match self {
            Expr::Var(v) => replacements[v.index()].cloned().unwrap_or_else(|| self.clone()),
            Expr::Num(_) | Expr::Param(_) => self.clone(),
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute(replacements))),
            Expr::Binary(op, a, b) => Expr::Binary(
                *op,
                Box::new(a.substitute(replacements)),
                Box::new(b.substitute(replacements)),
            ),
            Expr::Call(f, args) => Expr::Call(*f, args.iter().map(|a| a.substitute(replacements)).collect()),
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Var(v) => *v == var,
            Expr::Num(_) | Expr::Param(_) => false,
            Expr::Neg(a) => a.depends_on(var),
            Expr::Binary(_, a, b) => a.depends_on(var) || b.depends_on(var),
            Expr::Call(_, args) => args.iter().any(|a| a.depends_on(var)),
        }
    }

    pub fn params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_params(&mut out);
        out
    }

    fn collect_params(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Param(p) => {
                out.insert(p.clone());
            }
            Expr::Num(_) | Expr::Var(_) => {}
            Expr::Neg(a) => a.collect_params(out),
            Expr::Binary(_, a, b) => {
                a.collect_params(out);
                b.collect_params(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_params(out)),
        }
    }

    /// Symbolic partial derivative; parameters are constants.
    pub fn derivative(&self, var: Var) -> Expr {
        use Expr as E;
        match self {
            E::Num(_) | E::Param(_) => E::Num(0.0),
            E::Var(v) => E::Num(if *v == var { 1.0 } else { 0.0 }),
            E::Neg(a) => E::neg(a.derivative(var)),
            E::Binary(op, a, b) => {
                let (da, db) = (a.derivative(var), b.derivative(var));
                let (a, b) = (a.as_ref().clone(), b.as_ref().clone());
                match op {
                    BinOp::Add => E::add(da, db),
                    BinOp::Sub => E::sub(da, db),
                    BinOp::Mul => E::add(E::mul(da, b.clone()), E::mul(a, db)),
                    BinOp::Div => E::div(
                        E::sub(E::mul(da, b.clone()), E::mul(a, db)),
                        E::pow(b, E::Num(2.0)),
                    ),
                    BinOp::Pow => match b.constant_value() {
                        Some(c) => E::mul(E::mul(E::Num(c), E::pow(a, E::Num(c - 1.0))), da),
                        None => E::mul(
                            E::pow(a.clone(), b.clone()),
                            E::add(
                                E::mul(db, E::call(Func::Log, a.clone())),
                                E::div(E::mul(b, da), a),
                            ),
                        ),
                    },
                }
            }
            E::Call(Func::Atan2, args) => {
                let (y, x) = (args[0].clone(), args[1].clone());
                let (dy, dx) = (y.derivative(var), x.derivative(var));
                E::div(
                    E::sub(E::mul(x.clone(), dy), E::mul(y.clone(), dx)),
                    E::add(E::pow(x, E::Num(2.0)), E::pow(y, E::Num(2.0))),
                )
            }
            E::Call(func, args) => {
                let a = args[0].clone();
                let da = a.derivative(var);
                let outer = match func {
                    Func::Sin => E::call(Func::Cos, a),
                    Func::Cos => E::neg(E::call(Func::Sin, a)),
                    Func::Tan => E::div(E::Num(1.0), E::pow(E::call(Func::Cos, a), E::Num(2.0))),
                    Func::Exp => E::call(Func::Exp, a),
                    Func::Log => E::div(E::Num(1.0), a),
                    Func::Sqrt => E::div(E::Num(0.5), E::call(Func::Sqrt, a)),
                    Func::Atan => E::div(E::Num(1.0), E::add(E::Num(1.0), E::pow(a, E::Num(2.0)))),
                    Func::Atan2 => unreachable!(),
                };
                E::mul(outer, da)
            }
        }
    }
}
