//! Scalar expressions in chart coordinates: parsing, evaluation, exact
//! symbolic differentiation, and central-difference oracles.
//!
//! The grammar is deliberately small (coordinates `x0..xk`, arithmetic,
//! integer powers, `sin`/`cos`/`exp`/`log`/`sqrt`) so that exact derivatives
//! stay closed-form. Every evaluation either returns a finite value or a
//! domain error; NaN/inf never propagate silently.

use std::fmt;
use std::sync::{Arc, OnceLock};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        match s {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }
}

/// Expression tree. Binary nodes are produced through the folding
/// constructors below, which collapse constant subtrees and neutral
/// elements but perform no other rewriting.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Coord(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Base raised to a constant integer exponent.
    Pow(Box<Expr>, i32),
    Func(Func, Box<Expr>),
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("coordinate x{index} out of range for chart dimension {dim}")]
    CoordRange { index: usize, dim: usize },
    #[error("domain error: {0}")]
    Domain(String),
}

impl Expr {
    fn is_num(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn coord(i: usize) -> Expr {
        Expr::Coord(i)
    }

    pub fn neg(e: Expr) -> Expr {
        match e.is_num() {
            Some(v) => Expr::Num(-v),
            None => Expr::Neg(Box::new(e)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.is_num(), b.is_num()) {
            (Some(x), Some(y)) if (x + y).is_finite() => Expr::Num(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.is_num(), b.is_num()) {
            (Some(x), Some(y)) if (x - y).is_finite() => Expr::Num(x - y),
            (_, Some(y)) if y == 0.0 => a,
            (Some(x), _) if x == 0.0 => Expr::neg(b),
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.is_num(), b.is_num()) {
            (Some(x), Some(y)) if (x * y).is_finite() => Expr::Num(x * y),
            (Some(x), _) if x == 0.0 => Expr::Num(0.0),
            (_, Some(y)) if y == 0.0 => Expr::Num(0.0),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.is_num(), b.is_num()) {
            (Some(x), Some(y)) if y != 0.0 && (x / y).is_finite() => Expr::Num(x / y),
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(base: Expr, k: i32) -> Expr {
        if k == 1 {
            return base;
        }
        match base.is_num() {
            Some(v) => {
                let r = v.powi(k);
                if r.is_finite() {
                    Expr::Num(r)
                } else {
                    Expr::Pow(Box::new(base), k)
                }
            }
            None => Expr::Pow(Box::new(base), k),
        }
    }

    pub fn func(f: Func, arg: Expr) -> Expr {
        if let Some(v) = arg.is_num() {
            let r = match f {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Exp => v.exp(),
                Func::Log => v.ln(),
                Func::Sqrt => v.sqrt(),
            };
            if r.is_finite() {
                return Expr::Num(r);
            }
        }
        Expr::Func(f, Box::new(arg))
    }

    pub fn eval(&self, p: &[f64]) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Coord(i) => p[*i],
            Expr::Neg(e) => -e.eval(p)?,
            Expr::Add(a, b) => a.eval(p)? + b.eval(p)?,
            Expr::Sub(a, b) => a.eval(p)? - b.eval(p)?,
            Expr::Mul(a, b) => a.eval(p)? * b.eval(p)?,
            Expr::Div(a, b) => {
                let d = b.eval(p)?;
                if d == 0.0 {
                    return Err(ExprError::Domain("division by zero".into()));
                }
                a.eval(p)? / d
            }
            Expr::Pow(b, k) => {
                let base = b.eval(p)?;
                if base == 0.0 && *k < 0 {
                    return Err(ExprError::Domain("zero base with negative exponent".into()));
                }
                base.powi(*k)
            }
            Expr::Func(f, e) => {
                let a = e.eval(p)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(ExprError::Domain(format!("log of non-positive {a}")));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(ExprError::Domain(format!("sqrt of negative {a}")));
                        }
                        a.sqrt()
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::Domain("non-finite result".into()))
        }
    }

    /// Exact partial derivative with respect to coordinate `i`.
    pub fn derivative(&self, i: usize) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Coord(j) => Expr::Num(if *j == i { 1.0 } else { 0.0 }),
            Expr::Neg(e) => Expr::neg(e.derivative(i)),
            Expr::Add(a, b) => Expr::add(a.derivative(i), b.derivative(i)),
            Expr::Sub(a, b) => Expr::sub(a.derivative(i), b.derivative(i)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.derivative(i), (**b).clone()),
                Expr::mul((**a).clone(), b.derivative(i)),
            ),
            Expr::Div(a, b) => Expr::div(
                Expr::sub(
                    Expr::mul(a.derivative(i), (**b).clone()),
                    Expr::mul((**a).clone(), b.derivative(i)),
                ),
                Expr::pow((**b).clone(), 2),
            ),
            Expr::Pow(b, k) => Expr::mul(
                Expr::mul(Expr::Num(f64::from(*k)), Expr::pow((**b).clone(), *k - 1)),
                b.derivative(i),
            ),
            Expr::Func(f, e) => {
                let de = e.derivative(i);
                let inner = (**e).clone();
                match f {
                    Func::Sin => Expr::mul(Expr::func(Func::Cos, inner), de),
                    Func::Cos => Expr::neg(Expr::mul(Expr::func(Func::Sin, inner), de)),
                    Func::Exp => Expr::mul(Expr::func(Func::Exp, inner), de),
                    Func::Log => Expr::div(de, inner),
                    Func::Sqrt => Expr::div(
                        de,
                        Expr::mul(Expr::Num(2.0), Expr::func(Func::Sqrt, inner)),
                    ),
                }
            }
        }
    }

    /// Substitutes `subst[j]` for every `Coord(j)`, refolding along the way.
    pub fn substitute(&self, subst: &[Expr]) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Coord(j) => subst[*j].clone(),
            Expr::Neg(e) => Expr::neg(e.substitute(subst)),
            Expr::Add(a, b) => Expr::add(a.substitute(subst), b.substitute(subst)),
            Expr::Sub(a, b) => Expr::sub(a.substitute(subst), b.substitute(subst)),
            Expr::Mul(a, b) => Expr::mul(a.substitute(subst), b.substitute(subst)),
            Expr::Div(a, b) => Expr::div(a.substitute(subst), b.substitute(subst)),
            Expr::Pow(b, k) => Expr::pow(b.substitute(subst), *k),
            Expr::Func(f, e) => Expr::func(*f, e.substitute(subst)),
        }
    }

    fn max_coord(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Coord(i) => Some(*i),
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Func(_, e) => e.max_coord(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                match (a.max_coord(), b.max_coord()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, None) => x,
                    (None, y) => y,
                }
            }
        }
    }

    // Printing precedence: +/- are 1, */÷ are 2, unary minus 3, ^ 4, atoms 5.
    // Negative literals print with a leading minus, so they rank like Neg.
    fn prec(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Num(v) if *v < 0.0 => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let p = self.prec();
        if p < min {
            write!(f, "(")?;
            self.fmt_prec(f, 0)?;
            return write!(f, ")");
        }
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Coord(i) => write!(f, "x{i}"),
            Expr::Neg(e) => {
                // A nested negation needs parentheses: the grammar allows a
                // single leading minus per factor.
                write!(f, "-")?;
                e.fmt_prec(f, 4)
            }
            Expr::Add(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " + ")?;
                b.fmt_prec(f, 2)
            }
            Expr::Sub(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " - ")?;
                b.fmt_prec(f, 2)
            }
            Expr::Mul(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, " * ")?;
                b.fmt_prec(f, 3)
            }
            Expr::Div(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, " / ")?;
                b.fmt_prec(f, 3)
            }
            Expr::Pow(b, k) => {
                b.fmt_prec(f, 5)?;
                write!(f, "^{k}")
            }
            Expr::Func(func, e) => {
                write!(f, "{}(", func.name())?;
                e.fmt_prec(f, 0)?;
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Parse {
            offset: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && (self.src[self.pos] as char).is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = Expr::add(acc, self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = Expr::sub(acc, self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc = Expr::mul(acc, self.factor()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    acc = Expr::div(acc, self.factor()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let negate = if self.peek() == Some(b'-') {
            self.pos += 1;
            true
        } else {
            false
        };
        let mut atom = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let k = self.integer()?;
            atom = Expr::pow(atom, k);
        }
        Ok(if negate { Expr::neg(atom) } else { atom })
    }

    fn integer(&mut self) -> Result<i32, ExprError> {
        self.skip_ws();
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        let digits_start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == digits_start {
            return self.err("expected integer exponent");
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse::<i32>()
            .map_err(|e| ExprError::Parse {
                offset: start,
                msg: format!("bad exponent: {e}"),
            })
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => self.err(format!("unexpected character '{}'", c as char)),
            None => self.err("unexpected end of input"),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        // Optional exponent part, e.g. 1e-5.
        if self.pos < self.src.len() && (self.src[self.pos] | 0x20) == b'e' {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-')
            {
                self.pos += 1;
            }
            if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Expr::Num(v)),
            _ => Err(ExprError::Parse {
                offset: start,
                msg: format!("bad numeric literal '{text}'"),
            }),
        }
    }

    fn ident(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        if name == "x" {
            let dstart = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == dstart {
                return Err(ExprError::Parse {
                    offset: dstart,
                    msg: "expected coordinate index after 'x'".into(),
                });
            }
            let idx: usize = std::str::from_utf8(&self.src[dstart..self.pos])
                .unwrap()
                .parse()
                .map_err(|e| ExprError::Parse {
                    offset: dstart,
                    msg: format!("bad coordinate index: {e}"),
                })?;
            if idx >= self.dim {
                return Err(ExprError::CoordRange {
                    index: idx,
                    dim: self.dim,
                });
            }
            return Ok(Expr::Coord(idx));
        }
        if let Some(f) = Func::from_name(name) {
            if self.peek() != Some(b'(') {
                return self.err(format!("expected '(' after '{name}'"));
            }
            self.pos += 1;
            let arg = self.expr()?;
            if self.peek() != Some(b')') {
                return self.err("expected ')'");
            }
            self.pos += 1;
            return Ok(Expr::func(f, arg));
        }
        Err(ExprError::Parse {
            offset: start,
            msg: format!("unknown identifier '{name}'"),
        })
    }
}

// ---------------------------------------------------------------------------
// ScalarField
// ---------------------------------------------------------------------------

struct FieldInner {
    ast: Expr,
    dim: usize,
    partials: OnceLock<Vec<ScalarField>>,
}

/// An immutable scalar function of `dim` chart coordinates, with memoized
/// exact partials. Cloning is cheap; evaluation is pure and thread-safe.
#[derive(Clone)]
pub struct ScalarField {
    inner: Arc<FieldInner>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField[{}]({})", self.dim(), self.inner.ast)
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.inner.ast.fmt(f)
    }
}

impl ScalarField {
    pub fn parse(text: &str, dim: usize) -> Result<ScalarField, ExprError> {
        let mut p = Parser {
            src: text.as_bytes(),
            pos: 0,
            dim,
        };
        let ast = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(ExprError::Parse {
                offset: p.pos,
                msg: "trailing input".into(),
            });
        }
        Ok(ScalarField::from_ast(ast, dim))
    }

    pub fn from_ast(ast: Expr, dim: usize) -> ScalarField {
        ScalarField {
            inner: Arc::new(FieldInner {
                ast,
                dim,
                partials: OnceLock::new(),
            }),
        }
    }

    pub fn constant(v: f64, dim: usize) -> ScalarField {
        ScalarField::from_ast(Expr::Num(v), dim)
    }

    pub fn zero(dim: usize) -> ScalarField {
        ScalarField::constant(0.0, dim)
    }

    pub fn ast(&self) -> &Expr {
        &self.inner.ast
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn is_zero_ast(&self) -> bool {
        matches!(self.inner.ast, Expr::Num(v) if v == 0.0)
    }

    pub fn eval(&self, p: &[f64]) -> Result<f64, ExprError> {
        debug_assert_eq!(p.len(), self.inner.dim);
        self.inner.ast.eval(p)
    }

    /// Exact symbolic partial; the full gradient is memoized on first use.
    pub fn exact_partial(&self, i: usize) -> ScalarField {
        assert!(i < self.inner.dim, "partial index out of range");
        self.partials()[i].clone()
    }

    pub fn partials(&self) -> &[ScalarField] {
        self.inner.partials.get_or_init(|| {
            (0..self.inner.dim)
                .map(|i| ScalarField::from_ast(self.inner.ast.derivative(i), self.inner.dim))
                .collect()
        })
    }

    /// Value together with all first partials at `p`.
    pub fn jet(&self, p: &[f64]) -> Result<(f64, Vec<f64>), ExprError> {
        let v = self.eval(p)?;
        let d = self
            .partials()
            .iter()
            .map(|g| g.eval(p))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((v, d))
    }

    /// Composition: substitutes `subst[j]` (fields over a new chart) for
    /// coordinate `j`. All `subst` entries must share one dimension.
    pub fn compose(&self, subst: &[ScalarField]) -> ScalarField {
        assert_eq!(subst.len(), self.inner.dim);
        let new_dim = subst[0].dim();
        let asts: Vec<Expr> = subst.iter().map(|s| s.inner.ast.clone()).collect();
        ScalarField::from_ast(self.inner.ast.substitute(&asts), new_dim)
    }

    /// Restricts coordinate `k` to the constant `value`, dropping it from the
    /// chart: the result is a field of `dim - 1` variables.
    pub fn restrict_coord(&self, k: usize, value: f64) -> ScalarField {
        let dim = self.inner.dim;
        let mut subst = Vec::with_capacity(dim);
        for j in 0..dim {
            if j == k {
                subst.push(Expr::Num(value));
            } else {
                let new_index = if j < k { j } else { j - 1 };
                subst.push(Expr::Coord(new_index));
            }
        }
        ScalarField::from_ast(self.inner.ast.substitute(&subst), dim - 1)
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        assert_eq!(self.dim(), other.dim());
        ScalarField::from_ast(
            Expr::add(self.inner.ast.clone(), other.inner.ast.clone()),
            self.dim(),
        )
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        assert_eq!(self.dim(), other.dim());
        ScalarField::from_ast(
            Expr::sub(self.inner.ast.clone(), other.inner.ast.clone()),
            self.dim(),
        )
    }

    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        assert_eq!(self.dim(), other.dim());
        ScalarField::from_ast(
            Expr::mul(self.inner.ast.clone(), other.inner.ast.clone()),
            self.dim(),
        )
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        ScalarField::from_ast(Expr::mul(Expr::Num(c), self.inner.ast.clone()), self.dim())
    }
}

/// Checks that the expression references no coordinate beyond `dim`; used
/// when re-interpreting a field over a wider chart.
pub fn max_coord_index(ast: &Expr) -> Option<usize> {
    ast.max_coord()
}

// ---------------------------------------------------------------------------
// Finite-difference oracles
// ---------------------------------------------------------------------------

/// Default step for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Central difference (f(p+h·eᵢ) − f(p−h·eᵢ))/(2h).
pub fn fd_partial(f: &ScalarField, i: usize, p: &[f64], h: f64) -> Result<f64, ExprError> {
    let mut hi = p.to_vec();
    let mut lo = p.to_vec();
    hi[i] += h;
    lo[i] -= h;
    Ok((f.eval(&hi)? - f.eval(&lo)?) / (2.0 * h))
}

/// Second central difference in (i, j) with one Richardson extrapolation
/// step, which recovers the digits plain h²-differences lose on
/// curvature-level quantities.
pub fn fd_second_partial(
    f: &ScalarField,
    i: usize,
    j: usize,
    p: &[f64],
    h: f64,
) -> Result<f64, ExprError> {
    let d = |h: f64| -> Result<f64, ExprError> {
        if i == j {
            let mut hi = p.to_vec();
            let mut lo = p.to_vec();
            hi[i] += h;
            lo[i] -= h;
            Ok((f.eval(&hi)? - 2.0 * f.eval(p)? + f.eval(&lo)?) / (h * h))
        } else {
            let mut pp = p.to_vec();
            let mut pm = p.to_vec();
            let mut mp = p.to_vec();
            let mut mm = p.to_vec();
            pp[i] += h;
            pp[j] += h;
            pm[i] += h;
            pm[j] -= h;
            mp[i] -= h;
            mp[j] += h;
            mm[i] -= h;
            mm[j] -= h;
            Ok((f.eval(&pp)? - f.eval(&pm)? - f.eval(&mp)? + f.eval(&mm)?) / (4.0 * h * h))
        }
    };
    let coarse = d(h)?;
    let fine = d(h / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Richardson-extrapolated central difference of an arbitrary vector-valued
/// map along coordinate `i`; the workhorse behind the commutator-style
/// curvature oracle.
pub fn fd_vector_partial<F>(
    eval: F,
    i: usize,
    p: &[f64],
    h: f64,
) -> Result<Vec<f64>, ExprError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, ExprError>,
{
    let d = |h: f64| -> Result<Vec<f64>, ExprError> {
        let mut hi = p.to_vec();
        let mut lo = p.to_vec();
        hi[i] += h;
        lo[i] -= h;
        let a = eval(&hi)?;
        let b = eval(&lo)?;
        Ok(a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y) / (2.0 * h))
            .collect())
    };
    let coarse = d(h)?;
    let fine = d(h / 2.0)?;
    Ok(fine
        .iter()
        .zip(coarse.iter())
        .map(|(f4, f2)| (4.0 * f4 - f2) / 3.0)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str, dim: usize) -> ScalarField {
        ScalarField::parse(text, dim).unwrap()
    }

    #[test]
    fn parses_difference_of_squares() {
        let f = p("x0^2 - x1^2", 2);
        match f.ast() {
            Expr::Sub(a, b) => {
                assert!(matches!(**a, Expr::Pow(_, 2)));
                assert!(matches!(**b, Expr::Pow(_, 2)));
            }
            other => panic!("expected subtraction of squares, got {other:?}"),
        }
        assert_eq!(f.eval(&[3.0, 2.0]).unwrap(), 5.0);
    }

    #[test]
    fn rejects_out_of_range_coordinate() {
        let err = ScalarField::parse("sin(x9)", 2).unwrap_err();
        assert_eq!(err, ExprError::CoordRange { index: 9, dim: 2 });
    }

    #[test]
    fn exp_of_zero_is_one() {
        let f = p("exp(-2*x1)", 3);
        assert_eq!(f.eval(&[0.0, 0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn syntax_error_reports_offset() {
        match ScalarField::parse("x0 + * 3", 1) {
            Err(ExprError::Parse { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn polynomial_partial() {
        let f = p("x0^2", 2);
        let d = f.exact_partial(0);
        assert_eq!(d.eval(&[3.0, 0.0]).unwrap(), 6.0);
        let d1 = f.exact_partial(1);
        assert!(d1.is_zero_ast());
    }

    #[test]
    fn exact_matches_central_difference() {
        let f = p("exp(-2*x0)", 1);
        let d = f.exact_partial(0).eval(&[0.5]).unwrap();
        let fd = fd_partial(&f, 0, &[0.5], FD_STEP).unwrap();
        assert!(
            (d - fd).abs() <= 1e-8 * d.abs(),
            "exact {d} vs central difference {fd}"
        );
    }

    #[test]
    fn fd_linear_and_bilinear() {
        let f = p("x0", 2);
        let v = fd_partial(&f, 0, &[0.3, 0.7], FD_STEP).unwrap();
        assert!((v - 1.0).abs() <= 1e-10);
        let g = p("x0*x1", 2);
        let v = fd_partial(&g, 1, &[2.0, 3.0], FD_STEP).unwrap();
        assert!((v - 2.0).abs() <= 1e-9);
    }

    #[test]
    fn fd_log_matches_exact() {
        let f = p("log(x0)", 2);
        let fd = fd_partial(&f, 0, &[1.0, 0.0], FD_STEP).unwrap();
        assert!((fd - 1.0).abs() <= 1e-8);
        let exact = f.exact_partial(0).eval(&[1.0, 0.0]).unwrap();
        assert!((fd - exact).abs() <= 1e-8);
    }

    #[test]
    fn domain_errors_not_nan() {
        let f = p("log(x0)", 1);
        assert!(matches!(f.eval(&[-1.0]), Err(ExprError::Domain(_))));
        let g = p("sqrt(x0)", 1);
        assert!(matches!(g.eval(&[-1.0]), Err(ExprError::Domain(_))));
        let h = p("1/x0", 1);
        assert!(matches!(h.eval(&[0.0]), Err(ExprError::Domain(_))));
    }

    #[test]
    fn display_round_trips_structurally() {
        let cases = [
            "x0^2 - x1^2",
            "-x0^2",
            "(-2)^3",
            "x0 - (x1 - 3)",
            "x0 / (x1 * 2)",
            "sin(x0) * cos(x1) + exp(-2*x0)",
            "sqrt(x0^2 + 1)",
            "(x0 + x1)^-2",
            "1e-3 * x0",
        ];
        for c in cases {
            let f = p(c, 2);
            let printed = f.to_string();
            let re = p(&printed, 2);
            assert_eq!(f.ast(), re.ast(), "case '{c}' printed as '{printed}'");
        }
    }

    #[test]
    fn compose_substitutes_fields() {
        // f(y0, y1) = y0 * y1 with y0 = x0 + x1, y1 = x0 - x1.
        let f = p("x0 * x1", 2);
        let g = f.compose(&[p("x0 + x1", 2), p("x0 - x1", 2)]);
        assert_eq!(g.eval(&[3.0, 1.0]).unwrap(), 8.0);
    }

    #[test]
    fn restrict_coord_drops_variable() {
        let f = p("x0 + 10*x1 + 100*x2", 3);
        let g = f.restrict_coord(1, 2.0);
        assert_eq!(g.dim(), 2);
        assert_eq!(g.eval(&[1.0, 3.0]).unwrap(), 1.0 + 20.0 + 300.0);
    }

    #[test]
    fn richardson_second_difference() {
        let f = p("exp(x0) * sin(x1)", 2);
        let at = [0.3, 0.8];
        let exact = f
            .exact_partial(0)
            .exact_partial(1)
            .eval(&at)
            .unwrap();
        let fd = fd_second_partial(&f, 0, 1, &at, FD_STEP * 10.0).unwrap();
        assert!((exact - fd).abs() <= 1e-8 * (1.0 + exact.abs()));
    }
}
