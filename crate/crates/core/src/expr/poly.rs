//! Multivariate polynomials with exact rational coefficients.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::Binding;

pub type Rational = BigRational;

pub fn rat(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn frac(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// A monomial: variable name to exponent, zero exponents never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(BTreeMap<String, u32>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(BTreeMap::new())
    }

    pub fn var(name: &str) -> Self {
        let mut m = BTreeMap::new();
        m.insert(name.to_string(), 1);
        Monomial(m)
    }

    pub fn degree(&self) -> u32 {
        self.0.values().sum()
    }

    pub fn exponent(&self, var: &str) -> u32 {
        self.0.get(var).copied().unwrap_or(0)
    }

    pub fn vars(&self) -> impl Iterator<Item = (&String, &u32)> {
        self.0.iter()
    }

    pub(crate) fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = self.0.clone();
        for (v, e) in &other.0 {
            *out.entry(v.clone()).or_insert(0) += e;
        }
        Monomial(out)
    }

    fn without(&self, var: &str) -> Monomial {
        let mut out = self.0.clone();
        out.remove(var);
        Monomial(out)
    }

    pub(crate) fn gcd(&self, other: &Monomial) -> Monomial {
        let mut out = BTreeMap::new();
        for (v, e) in &self.0 {
            let f = other.exponent(v);
            let m = (*e).min(f);
            if m > 0 {
                out.insert(v.clone(), m);
            }
        }
        Monomial(out)
    }

    fn div(&self, other: &Monomial) -> Monomial {
        let mut out = self.0.clone();
        for (v, e) in &other.0 {
            let cur = out.get_mut(v).expect("monomial division by non-factor");
            *cur -= e;
            if *cur == 0 {
                out.remove(v);
            }
        }
        Monomial(out)
    }

    // Graded ordering key: higher total degree first, then lexicographic.
    fn graded_key(&self) -> (std::cmp::Reverse<u32>, Vec<(String, std::cmp::Reverse<u32>)>) {
        (
            std::cmp::Reverse(self.degree()),
            self.0
                .iter()
                .map(|(v, e)| (v.clone(), std::cmp::Reverse(*e)))
                .collect(),
        )
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, e) in &self.0 {
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if *e == 1 {
                write!(f, "{v}")?;
            } else {
                write!(f, "{v}^{e}")?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Poly {
    terms: BTreeMap<Monomial, Rational>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: Rational) -> Self {
        let mut p = Poly::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn int(c: i64) -> Self {
        Poly::constant(rat(c))
    }

    pub fn var(name: &str) -> Self {
        let mut p = Poly::zero();
        p.add_term(Monomial::var(name), Rational::one());
        p
    }

    fn add_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(m.clone()).or_insert_with(Rational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    /// Returns the constant value if the polynomial has no variables.
    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => self.terms.get(&Monomial::one()).cloned(),
            _ => None,
        }
    }

    pub fn variables(&self) -> Vec<String> {
        let mut vs: Vec<String> = self
            .terms
            .keys()
            .flat_map(|m| m.0.keys().cloned())
            .collect();
        vs.sort();
        vs.dedup();
        vs
    }

    pub fn scale(&self, c: &Rational) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(m, v)| (m.clone(), v * c))
                .collect(),
        }
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut out = Poly::int(1);
        for _ in 0..e {
            out = &out * self;
        }
        out
    }

    pub fn degree_in(&self, var: &str) -> u32 {
        self.terms.keys().map(|m| m.exponent(var)).max().unwrap_or(0)
    }

    /// Views the polynomial as univariate in `var`: entry `d` is the
    /// coefficient of `var^d`.
    pub fn coefficients_in(&self, var: &str) -> Vec<Poly> {
        let deg = self.degree_in(var) as usize;
        let mut out = vec![Poly::zero(); deg + 1];
        for (m, c) in &self.terms {
            out[m.exponent(var) as usize].add_term(m.without(var), c.clone());
        }
        out
    }

    pub fn substitute(&self, var: &str, value: &Poly) -> Poly {
        let coeffs = self.coefficients_in(var);
        // Horner
        let mut acc = Poly::zero();
        for c in coeffs.iter().rev() {
            acc = &(&acc * value) + c;
        }
        acc
    }

    pub fn eval(&self, binding: &Binding) -> Result<Rational, String> {
        let mut total = Rational::zero();
        for (m, c) in &self.terms {
            let mut term = c.clone();
            for (v, e) in &m.0 {
                let x = binding
                    .get(v)
                    .ok_or_else(|| format!("unbound symbol `{v}`"))?;
                term *= rat(x).pow(*e as i32);
            }
            total += term;
        }
        Ok(total)
    }

    /// Common monomial factor of all terms.
    pub fn monomial_content(&self) -> Monomial {
        let mut it = self.terms.keys();
        let Some(first) = it.next() else {
            return Monomial::one();
        };
        it.fold(first.clone(), |acc, m| acc.gcd(m))
    }

    pub fn divide_monomial(&self, m: &Monomial) -> Poly {
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(k, v)| (k.div(m), v.clone()))
                .collect(),
        }
    }

    /// Rescales to integer coefficients with gcd 1.
    pub fn primitive_scale(&self) -> Rational {
        if self.is_zero() {
            return Rational::one();
        }
        let mut lcm_den = BigInt::one();
        for c in self.terms.values() {
            lcm_den = lcm_den.lcm(c.denom());
        }
        let mut g = BigInt::zero();
        for c in self.terms.values() {
            let n = c.numer() * (&lcm_den / c.denom());
            g = g.gcd(&n);
        }
        Rational::new(lcm_den, g)
    }

    /// Leading term under a graded ordering (highest degree first).
    pub fn leading(&self) -> Option<(&Monomial, &Rational)> {
        self.terms.iter().min_by_key(|(m, _)| m.graded_key())
    }

    pub fn sorted_terms(&self) -> Vec<(&Monomial, &Rational)> {
        let mut ts: Vec<_> = self.terms.iter().collect();
        ts.sort_by_key(|(m, _)| m.graded_key());
        ts
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &rhs.terms {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(&rat(-1))
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(self, rhs: Poly) -> Poly {
        &self + &rhs
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, rhs: Poly) -> Poly {
        &self - &rhs
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, rhs: Poly) -> Poly {
        &self * &rhs
    }
}

pub(crate) fn fmt_rational(c: &Rational) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (idx, (m, c)) in self.sorted_terms().into_iter().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            if idx == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            if m.0.is_empty() {
                write!(f, "{}", fmt_rational(&abs))?;
            } else if abs.is_one() {
                write!(f, "{m}")?;
            } else {
                write!(f, "{}*{m}", fmt_rational(&abs))?;
            }
        }
        Ok(())
    }
}

/// Bernoulli numbers B_0..=B_n with B_1 = -1/2.
fn bernoulli(n: usize) -> Vec<Rational> {
    let mut b = vec![Rational::zero(); n + 1];
    b[0] = Rational::one();
    for m in 1..=n {
        let mut acc = Rational::zero();
        for (k, bk) in b.iter().enumerate().take(m) {
            acc += Rational::from_integer(binomial(m + 1, k)) * bk;
        }
        b[m] = -acc / rat(m as i64 + 1);
    }
    b
}

fn binomial(n: usize, k: usize) -> BigInt {
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    r
}

/// Faulhaber: the polynomial F_d(n) = sum_{x=0}^{n-1} x^d, in the variable `n`.
pub fn power_sum(d: u32, n: &Poly) -> Poly {
    let d = d as usize;
    let b = bernoulli(d);
    let mut out = Poly::zero();
    for (j, bj) in b.iter().enumerate() {
        let coeff = Rational::from_integer(binomial(d + 1, j)) * bj / rat(d as i64 + 1);
        out = &out + &n.pow((d + 1 - j) as u32).scale(&coeff);
    }
    out
}

/// sum_{var = lower}^{upper - 1} p, as a polynomial in the remaining
/// variables. Exact whenever `upper >= lower` at the evaluation point.
pub fn sum_over(p: &Poly, var: &str, lower: &Poly, upper: &Poly) -> Poly {
    let mut out = Poly::zero();
    for (d, c) in p.coefficients_in(var).iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let s = &power_sum(d as u32, upper) - &power_sum(d as u32, lower);
        out = &out + &(c * &s);
    }
    out
}
