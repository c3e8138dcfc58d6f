//! Exact symbolic bound expressions.
//!
//! A [`BoundExpr`] is a small expression tree over named parameters with
//! exact rational constants. Evaluation never touches floating point. Trees
//! built only from sums, products, quotients and integer powers convert to a
//! [`RationalFunction`], which is what equality checks go through.

mod parse;
pub mod poly;

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::ParseError;
pub use poly::{frac, rat, Monomial, Poly, Rational};

/// Assignment of integer values to parameter symbols.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Binding(BTreeMap<String, i64>);

impl Binding {
    pub fn new() -> Self {
        Binding(BTreeMap::new())
    }

    pub fn from_pairs(pairs: &[(&str, i64)]) -> Self {
        Binding(pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }

    pub fn get(&self, name: &str) -> Option<i64> {
        self.0.get(name).copied()
    }

    pub fn set(&mut self, name: &str, value: i64) {
        self.0.insert(name.to_string(), value);
    }

    pub fn with(&self, name: &str, value: i64) -> Binding {
        let mut b = self.clone();
        b.set(name, value);
        b
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &i64)> {
        self.0.iter()
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{}", parts.join(","))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound symbol `{0}`")]
    Unbound(String),
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("negative base in fractional power `{0}`")]
    NegativeRoot(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum BoundExpr {
    Const(Rational),
    Param(String),
    Sum(Vec<BoundExpr>),
    Product(Vec<BoundExpr>),
    Quotient(Box<BoundExpr>, Box<BoundExpr>),
    /// Power with a rational exponent. Fractional powers evaluate to an
    /// upward-rounded rational (see [`BoundExpr::evaluate`]).
    Pow(Box<BoundExpr>, Rational),
    Floor(Box<BoundExpr>),
    Min(Vec<BoundExpr>),
    Max(Vec<BoundExpr>),
}

/// Bits of fractional precision used when rounding irrational roots upward.
const ROOT_PRECISION_BITS: u32 = 48;

impl BoundExpr {
    pub fn int(v: i64) -> Self {
        BoundExpr::Const(rat(v))
    }

    pub fn constant(v: Rational) -> Self {
        BoundExpr::Const(v)
    }

    pub fn param(name: &str) -> Self {
        BoundExpr::Param(name.to_string())
    }

    pub fn parse(src: &str) -> Result<Self, ParseError> {
        parse::parse(src)
    }

    pub fn add(self, other: BoundExpr) -> Self {
        BoundExpr::Sum(vec![self, other])
    }

    pub fn sub(self, other: BoundExpr) -> Self {
        BoundExpr::Sum(vec![self, other.neg()])
    }

    pub fn mul(self, other: BoundExpr) -> Self {
        BoundExpr::Product(vec![self, other])
    }

    pub fn div(self, other: BoundExpr) -> Self {
        BoundExpr::Quotient(Box::new(self), Box::new(other))
    }

    pub fn neg(self) -> Self {
        BoundExpr::Product(vec![BoundExpr::int(-1), self])
    }

    pub fn pow(self, e: Rational) -> Self {
        BoundExpr::Pow(Box::new(self), e)
    }

    pub fn from_poly(p: &Poly) -> Self {
        if p.is_zero() {
            return BoundExpr::int(0);
        }
        let mut terms = Vec::new();
        for (m, c) in p.sorted_terms() {
            let mut factors = vec![BoundExpr::Const(c.clone())];
            for (v, e) in m.vars() {
                let base = BoundExpr::param(v);
                factors.push(if *e == 1 {
                    base
                } else {
                    base.pow(rat(*e as i64))
                });
            }
            terms.push(BoundExpr::Product(factors));
        }
        BoundExpr::Sum(terms).simplify()
    }

    pub fn is_zero_const(&self) -> bool {
        matches!(self, BoundExpr::Const(c) if c.is_zero())
    }

    pub fn as_const(&self) -> Option<&Rational> {
        match self {
            BoundExpr::Const(c) => Some(c),
            _ => None,
        }
    }

    /// Symbols referenced anywhere in the tree.
    pub fn symbols(&self) -> Vec<String> {
        fn walk(e: &BoundExpr, out: &mut Vec<String>) {
            match e {
                BoundExpr::Const(_) => {}
                BoundExpr::Param(p) => out.push(p.clone()),
                BoundExpr::Sum(xs)
                | BoundExpr::Product(xs)
                | BoundExpr::Min(xs)
                | BoundExpr::Max(xs) => xs.iter().for_each(|x| walk(x, out)),
                BoundExpr::Quotient(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                BoundExpr::Pow(a, _) | BoundExpr::Floor(a) => walk(a, out),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort();
        out.dedup();
        out
    }

    pub fn substitute(&self, name: &str, value: &BoundExpr) -> BoundExpr {
        let rec = |e: &BoundExpr| e.substitute(name, value);
        match self {
            BoundExpr::Const(_) => self.clone(),
            BoundExpr::Param(p) if p == name => value.clone(),
            BoundExpr::Param(_) => self.clone(),
            BoundExpr::Sum(xs) => BoundExpr::Sum(xs.iter().map(rec).collect()),
            BoundExpr::Product(xs) => BoundExpr::Product(xs.iter().map(rec).collect()),
            BoundExpr::Min(xs) => BoundExpr::Min(xs.iter().map(rec).collect()),
            BoundExpr::Max(xs) => BoundExpr::Max(xs.iter().map(rec).collect()),
            BoundExpr::Quotient(a, b) => BoundExpr::Quotient(Box::new(rec(a)), Box::new(rec(b))),
            BoundExpr::Pow(a, e) => BoundExpr::Pow(Box::new(rec(a)), e.clone()),
            BoundExpr::Floor(a) => BoundExpr::Floor(Box::new(rec(a))),
        }
    }

    /// Flattens nested sums/products, folds constants and sorts operands.
    pub fn simplify(&self) -> BoundExpr {
        match self {
            BoundExpr::Const(_) | BoundExpr::Param(_) => self.clone(),
            BoundExpr::Sum(xs) => {
                let mut konst = Rational::zero();
                let mut rest = Vec::new();
                for x in xs.iter().map(|x| x.simplify()) {
                    match x {
                        BoundExpr::Const(c) => konst += c,
                        BoundExpr::Sum(inner) => {
                            for y in inner {
                                match y {
                                    BoundExpr::Const(c) => konst += c,
                                    other => rest.push(other),
                                }
                            }
                        }
                        other => rest.push(other),
                    }
                }
                rest.sort_by_key(|e| e.to_string());
                if !konst.is_zero() {
                    rest.push(BoundExpr::Const(konst));
                }
                match rest.len() {
                    0 => BoundExpr::int(0),
                    1 => rest.pop().unwrap(),
                    _ => BoundExpr::Sum(rest),
                }
            }
            BoundExpr::Product(xs) => {
                let mut konst = Rational::one();
                let mut rest = Vec::new();
                for x in xs.iter().map(|x| x.simplify()) {
                    match x {
                        BoundExpr::Const(c) => konst *= c,
                        BoundExpr::Product(inner) => {
                            for y in inner {
                                match y {
                                    BoundExpr::Const(c) => konst *= c,
                                    other => rest.push(other),
                                }
                            }
                        }
                        other => rest.push(other),
                    }
                }
                if konst.is_zero() {
                    return BoundExpr::int(0);
                }
                rest.sort_by_key(|e| e.to_string());
                if !konst.is_one() || rest.is_empty() {
                    rest.insert(0, BoundExpr::Const(konst));
                }
                match rest.len() {
                    1 => rest.pop().unwrap(),
                    _ => BoundExpr::Product(rest),
                }
            }
            BoundExpr::Quotient(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (&a, &b) {
                    (_, BoundExpr::Const(c)) if c.is_one() => a,
                    (BoundExpr::Const(x), BoundExpr::Const(y)) if !y.is_zero() => {
                        BoundExpr::Const(x / y)
                    }
                    (BoundExpr::Const(x), _) if x.is_zero() => BoundExpr::int(0),
                    _ => BoundExpr::Quotient(Box::new(a), Box::new(b)),
                }
            }
            BoundExpr::Pow(a, e) => {
                let a = a.simplify();
                if e.is_zero() {
                    return BoundExpr::int(1);
                }
                if e.is_one() {
                    return a;
                }
                if let (BoundExpr::Const(c), true) = (&a, e.is_integer()) {
                    if let Some(k) = e.to_integer().to_i32() {
                        if !(c.is_zero() && k < 0) {
                            return BoundExpr::Const(c.pow(k));
                        }
                    }
                }
                BoundExpr::Pow(Box::new(a), e.clone())
            }
            BoundExpr::Floor(a) => match a.simplify() {
                BoundExpr::Const(c) => BoundExpr::Const(c.floor()),
                other => BoundExpr::Floor(Box::new(other)),
            },
            BoundExpr::Min(xs) => {
                let mut v: Vec<_> = xs.iter().map(|x| x.simplify()).collect();
                v.sort_by_key(|e| e.to_string());
                v.dedup();
                if v.len() == 1 {
                    v.pop().unwrap()
                } else {
                    BoundExpr::Min(v)
                }
            }
            BoundExpr::Max(xs) => {
                let mut v: Vec<_> = xs.iter().map(|x| x.simplify()).collect();
                v.sort_by_key(|e| e.to_string());
                v.dedup();
                if v.len() == 1 {
                    v.pop().unwrap()
                } else {
                    BoundExpr::Max(v)
                }
            }
        }
    }

    /// Exact evaluation.
    ///
    /// Fractional powers are irrational in general; they evaluate to the
    /// smallest multiple of 2^-48 that is not below the true value. Bound
    /// expressions only place such powers in denominators of lower bounds,
    /// so the rounding weakens a bound and never strengthens it.
    pub fn evaluate(&self, binding: &Binding) -> Result<Rational, EvalError> {
        match self {
            BoundExpr::Const(c) => Ok(c.clone()),
            BoundExpr::Param(p) => binding
                .get(p)
                .map(rat)
                .ok_or_else(|| EvalError::Unbound(p.clone())),
            BoundExpr::Sum(xs) => xs
                .iter()
                .try_fold(Rational::zero(), |acc, x| Ok(acc + x.evaluate(binding)?)),
            BoundExpr::Product(xs) => xs
                .iter()
                .try_fold(Rational::one(), |acc, x| Ok(acc * x.evaluate(binding)?)),
            BoundExpr::Quotient(a, b) => {
                let d = b.evaluate(binding)?;
                if d.is_zero() {
                    return Err(EvalError::DivisionByZero(b.to_string()));
                }
                Ok(a.evaluate(binding)? / d)
            }
            BoundExpr::Pow(a, e) => {
                let base = a.evaluate(binding)?;
                pow_round_up(&base, e).ok_or_else(|| {
                    if base.is_zero() {
                        EvalError::DivisionByZero(self.to_string())
                    } else {
                        EvalError::NegativeRoot(self.to_string())
                    }
                })
            }
            BoundExpr::Floor(a) => Ok(a.evaluate(binding)?.floor()),
            BoundExpr::Min(xs) => {
                let vals: Result<Vec<_>, _> = xs.iter().map(|x| x.evaluate(binding)).collect();
                Ok(vals?.into_iter().min().unwrap_or_else(Rational::zero))
            }
            BoundExpr::Max(xs) => {
                let vals: Result<Vec<_>, _> = xs.iter().map(|x| x.evaluate(binding)).collect();
                Ok(vals?.into_iter().max().unwrap_or_else(Rational::zero))
            }
        }
    }

    pub fn evaluate_f64(&self, binding: &Binding) -> Result<f64, EvalError> {
        Ok(to_f64(&self.evaluate(binding)?))
    }

    /// Converts to a quotient of polynomials, when the tree has no
    /// fractional powers, floors, minima or maxima.
    pub fn to_rational_function(&self) -> Option<RationalFunction> {
        match self {
            BoundExpr::Const(c) => Some(RationalFunction::poly(Poly::constant(c.clone()))),
            BoundExpr::Param(p) => Some(RationalFunction::poly(Poly::var(p))),
            BoundExpr::Sum(xs) => xs.iter().try_fold(RationalFunction::zero(), |acc, x| {
                Some(acc.add(&x.to_rational_function()?))
            }),
            BoundExpr::Product(xs) => xs.iter().try_fold(RationalFunction::one(), |acc, x| {
                Some(acc.mul(&x.to_rational_function()?))
            }),
            BoundExpr::Quotient(a, b) => {
                let b = b.to_rational_function()?;
                if b.num.is_zero() {
                    return None;
                }
                Some(a.to_rational_function()?.mul(&b.recip()))
            }
            BoundExpr::Pow(a, e) => {
                if !e.is_integer() {
                    return None;
                }
                let k = e.to_integer().to_i32()?;
                let base = a.to_rational_function()?;
                let p = RationalFunction {
                    num: base.num.pow(k.unsigned_abs()),
                    den: base.den.pow(k.unsigned_abs()),
                };
                if k < 0 {
                    if p.num.is_zero() {
                        return None;
                    }
                    Some(p.recip())
                } else {
                    Some(p)
                }
            }
            BoundExpr::Floor(_) | BoundExpr::Min(_) | BoundExpr::Max(_) => None,
        }
    }

    /// Equality as rational functions. `false` when either side has no
    /// rational-function form.
    pub fn equivalent(&self, other: &BoundExpr) -> bool {
        match (self.to_rational_function(), other.to_rational_function()) {
            (Some(a), Some(b)) => a.equivalent(&b),
            _ => false,
        }
    }

    /// Normalized display string: the rational-function normal form when
    /// one exists, otherwise the simplified tree.
    pub fn normalized_string(&self) -> String {
        match self.to_rational_function() {
            Some(rf) => rf.normalize().to_string(),
            None => self.simplify().to_string(),
        }
    }
}

fn pow_round_up(base: &Rational, e: &Rational) -> Option<Rational> {
    let p = e.numer().to_i32()?;
    let q = e.denom().to_u32()?;
    if base.is_zero() {
        return if p > 0 { Some(Rational::zero()) } else { None };
    }
    if q == 1 {
        return Some(base.pow(p));
    }
    if base.is_negative() {
        return None;
    }
    let positive = base.pow(p.abs());
    let root = if p > 0 {
        nth_root_up(&positive, q)
    } else {
        // 1 / x^(|p|/q): round the denominator down to round the result up
        Rational::one() / nth_root_down(&positive, q)
    };
    Some(root)
}

fn nth_root_bounds(x: &Rational, q: u32) -> (BigInt, BigInt, bool) {
    // root(n/d) = root(n * d^(q-1) * 2^(q*P)) / (d * 2^P)
    let scale = BigInt::one() << (ROOT_PRECISION_BITS * q);
    let radicand = x.numer() * x.denom().pow(q - 1) * scale;
    let r = radicand.nth_root(q);
    let exact = r.pow(q) == radicand;
    let den = x.denom() * (BigInt::one() << ROOT_PRECISION_BITS);
    (r, den, exact)
}

fn nth_root_up(x: &Rational, q: u32) -> Rational {
    let (r, den, exact) = nth_root_bounds(x, q);
    if exact {
        Rational::new(r, den)
    } else {
        Rational::new(r + 1, den)
    }
}

fn nth_root_down(x: &Rational, q: u32) -> Rational {
    let (r, den, _) = nth_root_bounds(x, q);
    Rational::new(r, den)
}

pub fn to_f64(r: &Rational) -> f64 {
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

fn precedence(e: &BoundExpr) -> u8 {
    match e {
        BoundExpr::Sum(_) => 1,
        BoundExpr::Const(c) if c.is_negative() || !c.is_integer() => 2,
        BoundExpr::Product(_) | BoundExpr::Quotient(..) => 2,
        BoundExpr::Pow(..) => 3,
        _ => 4,
    }
}

fn fmt_child(f: &mut fmt::Formatter<'_>, e: &BoundExpr, min_prec: u8) -> fmt::Result {
    if precedence(e) < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

// `x` with a leading negative coefficient flipped, for "a - b" display.
fn negated(x: &BoundExpr) -> Option<BoundExpr> {
    match x {
        BoundExpr::Const(c) if c.is_negative() => Some(BoundExpr::Const(-c)),
        BoundExpr::Product(fs) => match fs.first() {
            Some(BoundExpr::Const(c)) if c.is_negative() => {
                let mut rest: Vec<BoundExpr> = fs[1..].to_vec();
                if !(-c).is_one() {
                    rest.insert(0, BoundExpr::Const(-c));
                }
                Some(match rest.len() {
                    0 => BoundExpr::int(1),
                    1 => rest.pop().unwrap(),
                    _ => BoundExpr::Product(rest),
                })
            }
            _ => None,
        },
        _ => None,
    }
}

impl fmt::Display for BoundExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundExpr::Const(c) => write!(f, "{}", poly::fmt_rational(c)),
            BoundExpr::Param(p) => write!(f, "{p}"),
            BoundExpr::Sum(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    if i == 0 {
                        fmt_child(f, x, 2)?;
                    } else if let Some(pos) = negated(x) {
                        write!(f, " - ")?;
                        fmt_child(f, &pos, 3)?;
                    } else {
                        write!(f, " + ")?;
                        fmt_child(f, x, 2)?;
                    }
                }
                Ok(())
            }
            BoundExpr::Product(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, "*")?;
                    }
                    fmt_child(f, x, 3)?;
                }
                Ok(())
            }
            BoundExpr::Quotient(a, b) => {
                fmt_child(f, a, 3)?;
                write!(f, "/")?;
                fmt_child(f, b, 4)
            }
            BoundExpr::Pow(a, e) => {
                fmt_child(f, a, 4)?;
                if e.is_integer() && !e.is_negative() {
                    write!(f, "^{}", e.numer())
                } else {
                    write!(f, "^({})", poly::fmt_rational(e))
                }
            }
            BoundExpr::Floor(a) => write!(f, "floor({a})"),
            BoundExpr::Min(xs) | BoundExpr::Max(xs) => {
                let name = if matches!(self, BoundExpr::Min(_)) { "min" } else { "max" };
                let parts: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
                write!(f, "{name}({})", parts.join(", "))
            }
        }
    }
}

impl Serialize for BoundExpr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.normalized_string())
    }
}

/// Quotient of two polynomials.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalFunction {
    pub num: Poly,
    pub den: Poly,
}

impl RationalFunction {
    pub fn poly(p: Poly) -> Self {
        RationalFunction { num: p, den: Poly::int(1) }
    }

    pub fn zero() -> Self {
        RationalFunction::poly(Poly::zero())
    }

    pub fn one() -> Self {
        RationalFunction::poly(Poly::int(1))
    }

    pub fn add(&self, o: &RationalFunction) -> Self {
        if self.den == o.den {
            return RationalFunction { num: &self.num + &o.num, den: self.den.clone() };
        }
        RationalFunction {
            num: &(&self.num * &o.den) + &(&o.num * &self.den),
            den: &self.den * &o.den,
        }
    }

    pub fn mul(&self, o: &RationalFunction) -> Self {
        RationalFunction { num: &self.num * &o.num, den: &self.den * &o.den }
    }

    pub fn recip(&self) -> Self {
        RationalFunction { num: self.den.clone(), den: self.num.clone() }
    }

    pub fn equivalent(&self, o: &RationalFunction) -> bool {
        &self.num * &o.den == &o.num * &self.den
    }

    /// Cancels the common monomial factor, clears fractional coefficients
    /// and fixes the sign so that the leading denominator coefficient is
    /// positive.
    pub fn normalize(&self) -> RationalFunction {
        if self.num.is_zero() {
            return RationalFunction::zero();
        }
        let g = self.num.monomial_content().gcd(&self.den.monomial_content());
        let num = self.num.divide_monomial(&g);
        let den = self.den.divide_monomial(&g);
        let mut s = den.primitive_scale();
        if let Some((_, lc)) = den.leading() {
            if (lc * &s).is_negative() {
                s = -s;
            }
        }
        let num = num.scale(&s);
        let den = den.scale(&s);
        RationalFunction { num, den }
    }

    pub fn to_expr(&self) -> BoundExpr {
        let n = BoundExpr::from_poly(&self.num);
        match self.den.as_constant() {
            Some(c) if c.is_one() => n,
            _ => n.div(BoundExpr::from_poly(&self.den)),
        }
    }
}

impl fmt::Display for RationalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.den.as_constant() {
            Some(c) if c.is_one() => write!(f, "{}", self.num),
            _ => write!(f, "({})/({})", self.num, self.den),
        }
    }
}
