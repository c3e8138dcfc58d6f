//! Brascamp-Lieb exponents for coordinate projections.
//!
//! For projections φ_j keeping index subsets D_j of the statement indices,
//! exponents s_j certify |E| ≤ Π |φ_j(E)|^{s_j} whenever, for every subset H
//! of the indices, Σ_j s_j |D_j ∩ H| ≥ |H|. The exponents come from an exact
//! rational LP; the certificate is re-checked over all 2^d subsets.

use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::expr::poly::rat;
use crate::expr::Rational;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BlError {
    #[error("dimension `{0}` is not covered by any projection")]
    Uncovered(String),
    #[error("rank constraints infeasible under the exponent bounds")]
    Infeasible,
    #[error("too many dimensions ({0}); at most 6 are supported")]
    TooManyDims(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlCertificate {
    pub dims: Vec<String>,
    pub kept: Vec<Vec<String>>,
    #[serde(serialize_with = "ser_rats")]
    pub exponents: Vec<Rational>,
    pub verified: bool,
}

fn ser_rats<S: serde::Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for r in v {
        seq.serialize_element(&r.to_string())?;
    }
    seq.end()
}

impl BlCertificate {
    pub fn sum(&self) -> Rational {
        self.exponents.iter().fold(Rational::zero(), |a, b| a + b)
    }
}

/// Checks the rank condition over every coordinate subspace.
pub fn verify(dims: &[String], kept: &[Vec<String>], s: &[Rational]) -> bool {
    if s.iter().any(|x| x.is_negative()) {
        return false;
    }
    let d = dims.len();
    (1u32..(1 << d)).all(|mask| {
        let h: Vec<&String> = (0..d).filter(|b| mask >> b & 1 == 1).map(|b| &dims[b]).collect();
        let lhs = kept.iter().zip(s).fold(Rational::zero(), |acc, (k, sj)| {
            let r = k.iter().filter(|x| h.contains(x)).count();
            acc + sj * rat(r as i64)
        });
        lhs >= rat(h.len() as i64)
    })
}

/// Exponents minimizing Σ w_j s_j, ties broken by smallest Σ s_j, with
/// `bounds[j] = (lo, hi)` on each exponent.
pub fn solve(
    dims: &[String],
    kept: &[Vec<String>],
    weights: &[Rational],
    bounds: &[(Rational, Rational)],
) -> Result<BlCertificate, BlError> {
    let d = dims.len();
    if d > 6 {
        return Err(BlError::TooManyDims(d));
    }
    for x in dims {
        if !kept.iter().any(|k| k.contains(x)) {
            return Err(BlError::Uncovered(x.clone()));
        }
    }
    let n = kept.len();
    // substitute s = lo + y, y in [0, hi - lo]
    let mut rows: Vec<(Vec<Rational>, Cmp, Rational)> = Vec::new();
    for mask in 1u32..(1 << d) {
        let h: Vec<&String> = (0..d).filter(|b| mask >> b & 1 == 1).map(|b| &dims[b]).collect();
        let a: Vec<Rational> = kept
            .iter()
            .map(|k| rat(k.iter().filter(|x| h.contains(x)).count() as i64))
            .collect();
        let shift = a.iter().zip(bounds).fold(Rational::zero(), |acc, (aj, (lo, _))| acc + aj * lo);
        rows.push((a, Cmp::Ge, rat(h.len() as i64) - shift));
    }
    for (j, (lo, hi)) in bounds.iter().enumerate() {
        if hi < lo {
            return Err(BlError::Infeasible);
        }
        let mut a = vec![Rational::zero(); n];
        a[j] = Rational::one();
        rows.push((a, Cmp::Le, hi - lo));
    }
    let first = minimize(weights, &rows).ok_or(BlError::Infeasible)?;
    // second stage: hold the weighted optimum, minimize the plain sum
    let opt: Rational = weights.iter().zip(&first).fold(Rational::zero(), |a, (w, y)| a + w * y);
    let mut rows2 = rows.clone();
    rows2.push((weights.to_vec(), Cmp::Le, opt));
    let ones = vec![Rational::one(); n];
    let y = minimize(&ones, &rows2).unwrap_or(first);
    let s: Vec<Rational> = y.iter().zip(bounds).map(|(yj, (lo, _))| yj + lo).collect();
    let verified = verify(dims, kept, &s);
    Ok(BlCertificate { dims: dims.to_vec(), kept: kept.to_vec(), exponents: s, verified })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
}

/// Minimizes c·y subject to `rows` and y ≥ 0 with a dense two-phase simplex
/// (Bland's rule). `None` when infeasible or unbounded.
pub fn minimize(c: &[Rational], rows: &[(Vec<Rational>, Cmp, Rational)]) -> Option<Vec<Rational>> {
    let n = c.len();
    let m = rows.len();
    // columns: n originals, m slack/surplus, then artificials
    let mut a: Vec<Vec<Rational>> = Vec::with_capacity(m);
    let mut b: Vec<Rational> = Vec::with_capacity(m);
    let mut basis: Vec<Option<usize>> = vec![None; m];
    for (r, (coef, cmp, rhs)) in rows.iter().enumerate() {
        let mut row = coef.clone();
        row.resize(n + m, Rational::zero());
        row[n + r] = if *cmp == Cmp::Le { Rational::one() } else { -Rational::one() };
        let mut rhs = rhs.clone();
        if rhs.is_negative() {
            for x in row.iter_mut() {
                *x = -x.clone();
            }
            rhs = -rhs;
        }
        if row[n + r].is_one() {
            basis[r] = Some(n + r);
        }
        a.push(row);
        b.push(rhs);
    }
    let mut width = n + m;
    let mut art = Vec::new();
    for r in 0..m {
        if basis[r].is_none() {
            for (rr, row) in a.iter_mut().enumerate() {
                row.push(if rr == r { Rational::one() } else { Rational::zero() });
            }
            basis[r] = Some(width);
            art.push(width);
            width += 1;
        }
    }
    let mut basis: Vec<usize> = basis.into_iter().map(|x| x.unwrap()).collect();
    if !art.is_empty() {
        let mut c1 = vec![Rational::zero(); width];
        for &j in &art {
            c1[j] = Rational::one();
        }
        run(&c1, &mut a, &mut b, &mut basis, width)?;
        let infeas = basis
            .iter()
            .zip(&b)
            .any(|(&j, v)| art.contains(&j) && !v.is_zero());
        if infeas {
            return None;
        }
        // pivot zero-level artificials out of the basis
        let mut r = 0;
        while r < a.len() {
            if art.contains(&basis[r]) {
                match (0..n + m).find(|&j| !a[r][j].is_zero()) {
                    Some(j) => {
                        pivot(&mut a, &mut b, r, j);
                        basis[r] = j;
                        r += 1;
                    }
                    None => {
                        a.remove(r);
                        b.remove(r);
                        basis.remove(r);
                    }
                }
            } else {
                r += 1;
            }
        }
        for row in a.iter_mut() {
            row.truncate(n + m);
        }
    }
    let mut c2 = c.to_vec();
    c2.resize(n + m, Rational::zero());
    run(&c2, &mut a, &mut b, &mut basis, n + m)?;
    let mut y = vec![Rational::zero(); n];
    for (r, &j) in basis.iter().enumerate() {
        if j < n {
            y[j] = b[r].clone();
        }
    }
    Some(y)
}

fn pivot(a: &mut [Vec<Rational>], b: &mut [Rational], r: usize, j: usize) {
    let inv = Rational::one() / &a[r][j];
    for x in a[r].iter_mut() {
        *x = &*x * &inv;
    }
    b[r] = &b[r] * &inv;
    let prow = a[r].clone();
    let pb = b[r].clone();
    for (rr, row) in a.iter_mut().enumerate() {
        if rr != r && !row[j].is_zero() {
            let f = row[j].clone();
            for (x, p) in row.iter_mut().zip(&prow) {
                *x -= &f * p;
            }
            b[rr] -= &f * &pb;
        }
    }
}

// Primal simplex on a tableau already in canonical form. `None` when
// unbounded.
fn run(c: &[Rational], a: &mut [Vec<Rational>], b: &mut [Rational], basis: &mut [usize], width: usize) -> Option<()> {
    loop {
        let entering = (0..width).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let reduced = basis
                .iter()
                .enumerate()
                .fold(c[j].clone(), |acc, (r, &bj)| acc - &c[bj] * &a[r][j]);
            reduced.is_negative()
        });
        let Some(j) = entering else { return Some(()) };
        let mut leave: Option<(usize, Rational)> = None;
        for r in 0..a.len() {
            if a[r][j].is_positive() {
                let ratio = &b[r] / &a[r][j];
                let better = match &leave {
                    None => true,
                    Some((lr, lv)) => ratio < *lv || (ratio == *lv && basis[r] < basis[*lr]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let (r, _) = leave?;
        pivot(a, b, r, j);
        basis[r] = j;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::poly::frac;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn unit(n: usize) -> (Vec<Rational>, Vec<(Rational, Rational)>) {
        (vec![Rational::one(); n], vec![(Rational::zero(), Rational::one()); n])
    }

    #[test]
    fn loomis_whitney_exponents() {
        let dims = names(&["i", "j", "k"]);
        let kept = vec![names(&["i", "j"]), names(&["i", "k"]), names(&["k", "j"])];
        let (w, b) = unit(3);
        let c = solve(&dims, &kept, &w, &b).unwrap();
        assert_eq!(c.exponents, vec![frac(1, 2); 3]);
        assert_eq!(c.sum(), frac(3, 2));
        assert!(c.verified);
    }

    #[test]
    fn one_dimensional_projections() {
        let dims = names(&["i", "j", "k"]);
        let kept = vec![names(&["i"]), names(&["j"]), names(&["k"])];
        let (w, b) = unit(3);
        assert_eq!(solve(&dims, &kept, &w, &b).unwrap().exponents, vec![rat(1); 3]);
    }

    #[test]
    fn uncovered_dimension() {
        let dims = names(&["i", "j"]);
        let (w, b) = unit(1);
        assert_eq!(solve(&dims, &[names(&["i"])], &w, &b).unwrap_err(), BlError::Uncovered("j".into()));
    }

    #[test]
    fn forced_exponent_and_weights() {
        // slice (k, i): φ_i forced to 1, φ_k (cap 2, weight 0), φ_ik (cap K)
        let dims = names(&["k", "i"]);
        let kept = vec![names(&["i"]), names(&["k"]), names(&["i", "k"])];
        let w = vec![rat(0), rat(0), frac(3, 2)];
        let b = vec![(rat(1), rat(1)), (rat(0), rat(1)), (rat(0), rat(1))];
        let c = solve(&dims, &kept, &w, &b).unwrap();
        assert_eq!(c.exponents, vec![rat(1), rat(1), rat(0)]);
    }

    #[test]
    fn lp_detects_infeasibility() {
        let rows = vec![(vec![rat(1)], Cmp::Ge, rat(2)), (vec![rat(1)], Cmp::Le, rat(1))];
        assert!(minimize(&[rat(1)], &rows).is_none());
        let rows = vec![(vec![rat(1), rat(1)], Cmp::Ge, rat(3))];
        assert_eq!(minimize(&[rat(2), rat(1)], &rows).unwrap(), vec![rat(0), rat(3)]);
    }
}
