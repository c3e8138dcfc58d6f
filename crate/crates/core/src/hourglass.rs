//! Hourglass-pattern detection.
//!
//! A statement's indices are split into temporal (T), broadcast (I) and
//! neutral (J) groups. The pattern holds when, for every neutral value j and
//! consecutive temporal steps t, t', every instance SX[t,j,i] reaches every
//! instance SX[t',j,i']. Verification runs on concrete CDAGs at small
//! bindings; widths are measured there and fitted to affine forms, with a
//! held-out binding guarding the fit.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, ToPrimitive, Zero};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::cdag::{instantiate, Cdag, NodeId, NodeKind};
use crate::expr::poly::rat;
use crate::expr::{Binding, BoundExpr, Rational};
use crate::kernel::{AffineExpr, AffineKernel, KernelError};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DetectError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("cdag: {0}")]
    Cdag(String),
    #[error("split not applicable: {0}")]
    SplitNotApplicable(String),
}

fn ser_affine<S: Serializer>(e: &AffineExpr, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&e.to_string())
}

fn ser_opt_affine<S: Serializer>(e: &Option<AffineExpr>, s: S) -> Result<S::Ok, S::Error> {
    match e {
        Some(e) => s.serialize_str(&e.to_string()),
        None => s.serialize_none(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HourglassReport {
    pub statement: String,
    pub temporal: Vec<String>,
    pub broadcast: Vec<String>,
    pub neutral: Vec<String>,
    /// Statement instances at the intermediate temporal step on chains from
    /// the line SX[t,j,*] to the line SX[t+2,j,*], as a function of the
    /// parameters and the starting temporal index. `None` when the
    /// measurements are not affine.
    #[serde(serialize_with = "ser_opt_affine")]
    pub width: Option<AffineExpr>,
    /// Size of one broadcast line |{i : (t,j,i) in D}|.
    #[serde(serialize_with = "ser_affine")]
    pub line_width: AffineExpr,
    /// Minimum of `line_width` over the temporal range.
    #[serde(serialize_with = "ser_affine")]
    pub width_min: AffineExpr,
    /// Maximum of `line_width` over the temporal range.
    #[serde(serialize_with = "ser_affine")]
    pub width_max: AffineExpr,
    /// Whether `width_min` grows with the problem parameters.
    pub large_width: bool,
}

impl HourglassReport {
    pub fn width_min_expr(&self) -> BoundExpr {
        BoundExpr::from_poly(&self.width_min.to_poly())
    }

    pub fn width_max_expr(&self) -> BoundExpr {
        BoundExpr::from_poly(&self.width_max.to_poly())
    }

    pub fn line_width_expr(&self) -> BoundExpr {
        BoundExpr::from_poly(&self.line_width.to_poly())
    }

    pub fn width_expr(&self) -> Option<BoundExpr> {
        self.width.as_ref().map(|w| BoundExpr::from_poly(&w.to_poly()))
    }
}

/// Training bindings plus one held-out binding.
pub fn verification_bindings(kernel: &AffineKernel) -> (Vec<Binding>, Binding) {
    let params = kernel.problem_parameters();
    // (M, N) pairs; the default collinear choice M = 2N - 1 would leave an
    // affine fit in M and N underdetermined, so one pair breaks the line.
    let table: [(i64, i64); 4] = [(7, 4), (9, 5), (10, 4), (13, 7)];
    let make = |(m, n): (i64, i64)| {
        let mut b = Binding::new();
        match params.as_slice() {
            [single] => b.set(single, m),
            _ => {
                for p in &params {
                    b.set(p, if *p == "N" { n } else { m });
                }
            }
        }
        b
    };
    (table[..3].iter().copied().map(make).collect(), make(table[3]))
}

struct Partition {
    t: Vec<usize>,
    i: Vec<usize>,
    j: Vec<usize>,
}

fn partitions(d: usize) -> Vec<Partition> {
    let mut out = Vec::new();
    for tlen in 1..d {
        let rest: Vec<usize> = (tlen..d).collect();
        for mask in 1u32..(1 << rest.len()) {
            let i: Vec<usize> = rest.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &x)| x).collect();
            let j: Vec<usize> = rest.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 0).map(|(_, &x)| x).collect();
            out.push(Partition { t: (0..tlen).collect(), i, j });
        }
    }
    out
}

// Instances of one statement grouped by temporal tuple (in execution order)
// and neutral tuple.
struct Groups {
    order: Vec<Vec<i64>>,
    by: BTreeMap<(Vec<i64>, Vec<i64>), Vec<NodeId>>,
}

fn group(g: &Cdag, stmt: usize, p: &Partition) -> Groups {
    let mut order: Vec<Vec<i64>> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut by: BTreeMap<(Vec<i64>, Vec<i64>), Vec<NodeId>> = BTreeMap::new();
    for n in g.compute_nodes() {
        if let NodeKind::Compute { stmt: s, iter } = g.kind(n) {
            if *s != stmt {
                continue;
            }
            let t: Vec<i64> = p.t.iter().map(|&d| iter[d]).collect();
            let j: Vec<i64> = p.j.iter().map(|&d| iter[d]).collect();
            if seen.insert(t.clone()) {
                order.push(t.clone());
            }
            by.entry((t, j)).or_default().push(n);
        }
    }
    Groups { order, by }
}

fn forward(g: &Cdag, sources: &[NodeId], limit: NodeId) -> Vec<bool> {
    let lo = sources.iter().copied().min().unwrap_or(0);
    if limit < lo {
        return Vec::new();
    }
    let mut mark = vec![false; limit - lo + 1];
    for &s in sources {
        if s <= limit {
            mark[s - lo] = true;
        }
    }
    for n in lo..=limit {
        if mark[n - lo] {
            for &s in g.succs(n) {
                if s <= limit {
                    mark[s - lo] = true;
                }
            }
        }
    }
    // re-index to absolute ids by padding
    let mut out = vec![false; lo];
    out.extend(mark);
    out
}

fn backward(g: &Cdag, sinks: &[NodeId], floor: NodeId) -> Vec<bool> {
    let hi = sinks.iter().copied().max().unwrap_or(0);
    let mut mark = vec![false; hi + 1];
    for &s in sinks {
        mark[s] = true;
    }
    for n in (floor..=hi).rev() {
        if mark[n] {
            for &p in g.preds(n) {
                if p >= floor {
                    mark[p] = true;
                }
            }
        }
    }
    mark
}

fn next_steps(groups: &Groups, j: &[i64]) -> Vec<Vec<i64>> {
    groups
        .order
        .iter()
        .filter(|t| groups.by.contains_key(&((*t).clone(), j.to_vec())))
        .cloned()
        .collect()
}

/// All-to-all reachability between consecutive temporal steps.
fn path_property(g: &Cdag, groups: &Groups) -> bool {
    let js: BTreeSet<Vec<i64>> = groups.by.keys().map(|(_, j)| j.clone()).collect();
    let mut checked = 0usize;
    let mut wide = false;
    for j in &js {
        let steps = next_steps(groups, j);
        for w in steps.windows(2) {
            let src = &groups.by[&(w[0].clone(), j.clone())];
            let dst = &groups.by[&(w[1].clone(), j.clone())];
            if src.len() > 1 || dst.len() > 1 {
                wide = true;
            }
            let limit = *dst.iter().max().unwrap();
            for &s in src {
                let reach = forward(g, &[s], limit);
                if dst.iter().any(|&d| !reach.get(d).copied().unwrap_or(false)) {
                    return false;
                }
                checked += 1;
            }
        }
    }
    checked > 0 && wide
}

struct Sample {
    vars: BTreeMap<String, i64>,
    value: i64,
}

fn measure(
    g: &Cdag,
    kernel: &AffineKernel,
    stmt: usize,
    p: &Partition,
    groups: &Groups,
    binding: &Binding,
) -> (Vec<Sample>, Vec<Sample>) {
    let st = &kernel.statements[stmt];
    let tnames: Vec<&String> = p.t.iter().map(|&d| &st.domain.indices[d]).collect();
    let vars_at = |t: &[i64]| {
        let mut v: BTreeMap<String, i64> = binding.iter().map(|(k, v)| (k.clone(), *v)).collect();
        for (name, val) in tnames.iter().zip(t) {
            v.insert((*name).clone(), *val);
        }
        v
    };
    let mut lines = Vec::new();
    for t in &groups.order {
        let last_j = groups.by.keys().filter(|(tt, _)| tt == t).map(|(_, j)| j).last();
        if let Some(j) = last_j {
            lines.push(Sample { vars: vars_at(t), value: groups.by[&(t.clone(), j.clone())].len() as i64 });
        }
    }
    // statements sharing the temporal loops, for locating the middle step
    let shares_t = |s: usize| {
        let d = &kernel.statements[s].domain.indices;
        d.len() >= tnames.len() && d.iter().zip(&tnames).all(|(a, b)| a == *b)
    };
    let mut chains = Vec::new();
    let order = &groups.order;
    for w in order.windows(3) {
        let common: Option<Vec<i64>> = groups
            .by
            .keys()
            .filter(|(tt, _)| tt == &w[0])
            .map(|(_, j)| j.clone())
            .filter(|j| groups.by.contains_key(&(w[1].clone(), j.clone())) && groups.by.contains_key(&(w[2].clone(), j.clone())))
            .last();
        let Some(j) = common else { continue };
        let src = &groups.by[&(w[0].clone(), j.clone())];
        let dst = &groups.by[&(w[2].clone(), j.clone())];
        let lo = *src.iter().min().unwrap();
        let hi = *dst.iter().max().unwrap();
        let fwd = forward(g, src, hi);
        let bwd = backward(g, dst, lo);
        let mut count = 0;
        for n in lo..=hi {
            if !(fwd[n] && bwd[n]) {
                continue;
            }
            if let NodeKind::Compute { stmt: s, iter } = g.kind(n) {
                if shares_t(*s) && iter[..tnames.len()] == w[1][..] {
                    count += 1;
                }
            }
        }
        chains.push(Sample { vars: vars_at(&w[0]), value: count });
    }
    (lines, chains)
}

/// Exact solve of a square rational system; free variables are set to 0.
fn solve(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Vec<Rational> {
    let n = a.len();
    let m = if n == 0 { 0 } else { a[0].len() };
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..m {
        let Some(p) = (row..n).find(|&r| !a[r][col].is_zero()) else { continue };
        a.swap(row, p);
        b.swap(row, p);
        let inv = Rational::one() / &a[row][col];
        for c in 0..m {
            a[row][c] = &a[row][c] * &inv;
        }
        b[row] = &b[row] * &inv;
        for r in 0..n {
            if r != row && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in 0..m {
                    let d = &f * &a[row][c];
                    a[r][c] -= d;
                }
                let d = &f * &b[row];
                b[r] -= d;
            }
        }
        pivots.push((row, col));
        row += 1;
    }
    let mut x = vec![Rational::zero(); m];
    for (r, c) in pivots {
        x[c] = b[r].clone();
    }
    x
}

/// Exact affine least-squares fit; `None` unless it interpolates every
/// sample with integer coefficients.
fn fit_affine(samples: &[Sample], vars: &[String]) -> Option<AffineExpr> {
    if samples.is_empty() {
        return None;
    }
    let row = |s: &Sample| {
        let mut r = vec![Rational::one()];
        r.extend(vars.iter().map(|v| rat(s.vars[v])));
        r
    };
    let m = vars.len() + 1;
    let mut ata = vec![vec![Rational::zero(); m]; m];
    let mut atb = vec![Rational::zero(); m];
    for s in samples {
        let r = row(s);
        for a in 0..m {
            for b in 0..m {
                ata[a][b] += &r[a] * &r[b];
            }
            atb[a] += &r[a] * rat(s.value);
        }
    }
    let x = solve(ata, atb);
    if x.iter().any(|c| !c.is_integer()) {
        return None;
    }
    let mut e = AffineExpr::constant(x[0].to_integer().to_i64()?);
    for (v, c) in vars.iter().zip(&x[1..]) {
        let c = c.to_integer().to_i64()?;
        if c != 0 {
            e.terms.insert(v.clone(), c);
        }
    }
    fits(&e, samples).then_some(e)
}

fn fits(e: &AffineExpr, samples: &[Sample]) -> bool {
    samples.iter().all(|s| e.eval(|v| s.vars.get(v).copied()).ok() == Some(s.value))
}

/// Extremum of `e` over the temporal loops, taken innermost first by moving
/// each temporal index to the end of its range that decreases (or, for
/// `maximize`, increases) `e`.
fn extremum_over(e: &AffineExpr, kernel: &AffineKernel, stmt: usize, temporal: &[usize], maximize: bool) -> AffineExpr {
    let d = &kernel.statements[stmt].domain;
    let mut cur = e.clone();
    for &t in temporal.iter().rev() {
        let name = &d.indices[t];
        let c = cur.coeff(name);
        let (lo, hi) = &d.bounds[t];
        let at = if (c > 0) != maximize { lo.clone() } else { hi.sub(&AffineExpr::constant(1)) };
        cur = cur.substitute(name, &at);
    }
    cur
}

/// Detection on one statement.
pub fn detect(kernel: &AffineKernel, label: &str) -> Result<Option<HourglassReport>, DetectError> {
    let (train, held) = verification_bindings(kernel);
    let cdags = instantiate_all(kernel, &train, &held)?;
    detect_with(kernel, label, &cdags)
}

/// Detection on every statement that shows the pattern.
pub fn detect_all(kernel: &AffineKernel) -> Result<Vec<HourglassReport>, DetectError> {
    let (train, held) = verification_bindings(kernel);
    let cdags = instantiate_all(kernel, &train, &held)?;
    let mut out = Vec::new();
    for st in &kernel.statements {
        if let Some(r) = detect_with(kernel, &st.label, &cdags)? {
            out.push(r);
        }
    }
    Ok(out)
}

fn instantiate_all(kernel: &AffineKernel, train: &[Binding], held: &Binding) -> Result<Vec<(Binding, Cdag)>, DetectError> {
    train
        .iter()
        .chain(std::iter::once(held))
        .map(|b| {
            instantiate(kernel, b)
                .map(|g| (b.clone(), g))
                .map_err(|e| DetectError::Cdag(e.to_string()))
        })
        .collect()
}

// `cdags`: training bindings followed by the held-out one.
fn detect_with(kernel: &AffineKernel, label: &str, cdags: &[(Binding, Cdag)]) -> Result<Option<HourglassReport>, DetectError> {
    let (stmt, st) = kernel.statement(label)?;
    let dims = &st.domain.indices;
    let params: Vec<String> = kernel.problem_parameters().iter().map(|s| s.to_string()).collect();
    let (train, held) = cdags.split_at(cdags.len() - 1);
    let held = &held[0];
    let mut best: Option<(HourglassReport, (usize, usize, Rational))> = None;
    'cand: for p in partitions(dims.len()) {
        let mut lines = Vec::new();
        let mut chains = Vec::new();
        for (b, g) in train {
            let groups = group(g, stmt, &p);
            if !path_property(g, &groups) {
                continue 'cand;
            }
            let (l, c) = measure(g, kernel, stmt, &p, &groups, b);
            lines.extend(l);
            chains.extend(c);
        }
        let held_groups = group(&held.1, stmt, &p);
        if !path_property(&held.1, &held_groups) {
            continue;
        }
        let (held_lines, held_chains) = measure(&held.1, kernel, stmt, &p, &held_groups, &held.0);
        let mut vars = params.clone();
        vars.extend(p.t.iter().map(|&d| dims[d].clone()));
        let Some(line_width) = fit_affine(&lines, &vars).filter(|e| fits(e, &held_lines)) else {
            continue;
        };
        let width = fit_affine(&chains, &vars).filter(|e| fits(e, &held_chains));
        let width_min = extremum_over(&line_width, kernel, stmt, &p.t, false);
        let width_max = extremum_over(&line_width, kernel, stmt, &p.t, true);
        let large_width = width_min.terms.keys().any(|k| params.contains(k));
        let names = |v: &[usize]| v.iter().map(|&d| dims[d].clone()).collect::<Vec<_>>();
        let report = HourglassReport {
            statement: label.to_string(),
            temporal: names(&p.t),
            broadcast: names(&p.i),
            neutral: names(&p.j),
            width,
            line_width,
            width_min,
            width_max,
            large_width,
        };
        let wmin_at = rat(report.width_min.eval(|v| held.0.get(v)).unwrap_or(i64::MAX));
        // prefer more neutral dims, fewer temporal dims, smaller width
        let key = (usize::MAX - p.j.len(), p.t.len(), wmin_at);
        if best.as_ref().is_none_or(|(_, k)| key < *k) {
            best = Some((report, key));
        }
    }
    Ok(best.map(|(r, _)| r))
}

/// Result of splitting the outermost temporal loop.
#[derive(Clone, Debug)]
pub struct SplitResult {
    pub first: AffineKernel,
    pub second: AffineKernel,
    /// Extremes of the broadcast-line size over the first fragment.
    pub first_width_min: AffineExpr,
    pub first_width_max: AffineExpr,
}

/// Splits the outermost temporal loop of `report.statement` at the fresh
/// parameter `split`. Only meaningful when the width minimum is a constant.
pub fn split_temporal(kernel: &AffineKernel, report: &HourglassReport, split: &str) -> Result<SplitResult, DetectError> {
    if report.large_width {
        return Err(DetectError::SplitNotApplicable(format!(
            "width_min {} already grows with the parameters",
            report.width_min
        )));
    }
    let (first, second) = kernel.split_loop(&report.statement, split).map_err(|e| DetectError::SplitNotApplicable(e.to_string()))?;
    let (stmt, st) = first.statement(&report.statement)?;
    let temporal: Vec<usize> = report
        .temporal
        .iter()
        .map(|t| st.domain.position(t).expect("temporal index"))
        .collect();
    let first_width_min = extremum_over(&report.line_width, &first, stmt, &temporal, false);
    let first_width_max = extremum_over(&report.line_width, &first, stmt, &temporal, true);
    Ok(SplitResult { first, second, first_width_min, first_width_max })
}

/// Evaluated width minimum, clamped below at zero.
pub fn width_min_at(report: &HourglassReport, binding: &Binding) -> Option<i64> {
    report.width_min.eval(|v| binding.get(v)).ok().map(|w| w.max(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::builtin_kernel;

    fn aff(s: &str) -> AffineExpr {
        AffineExpr::parse(s).unwrap()
    }

    #[test]
    fn partitions_cover_dims() {
        let ps = partitions(3);
        assert_eq!(ps.len(), 4);
        for p in &ps {
            let mut all: Vec<usize> = p.t.iter().chain(&p.i).chain(&p.j).copied().collect();
            all.sort();
            assert_eq!(all, vec![0, 1, 2]);
            assert!(!p.i.is_empty());
        }
    }

    #[test]
    fn mgs_su() {
        let k = builtin_kernel("mgs").unwrap();
        let r = detect(&k, "SU").unwrap().expect("pattern");
        assert_eq!(r.temporal, vec!["k"]);
        assert_eq!(r.broadcast, vec!["i"]);
        assert_eq!(r.neutral, vec!["j"]);
        assert_eq!(r.width, Some(aff("2*M")));
        assert_eq!(r.line_width, aff("M"));
        assert_eq!(r.width_min, aff("M"));
        assert!(r.large_width);
        let err = split_temporal(&k, &r, "P").unwrap_err();
        assert!(matches!(err, DetectError::SplitNotApplicable(_)));
    }

    #[test]
    fn a2v_su() {
        let k = builtin_kernel("hh_a2v").unwrap();
        let r = detect(&k, "SU").unwrap().expect("pattern");
        assert_eq!((r.temporal.clone(), r.broadcast.clone(), r.neutral.clone()), (vec!["k".into()], vec!["i".into()], vec!["j".into()]));
        assert_eq!(r.line_width, aff("M - 1 - k"));
        assert_eq!(r.width_min, aff("M - N"));
        assert_eq!(r.width_max, aff("M - 1"));
    }

    #[test]
    fn gehd2_split() {
        let k = builtin_kernel("gehd2").unwrap();
        let r = detect(&k, "Supd1").unwrap().expect("pattern");
        assert_eq!(r.temporal, vec!["j"]);
        assert_eq!(r.line_width, aff("N - 2 - j"));
        assert_eq!(r.width_min, aff("1"));
        assert!(!r.large_width);
        let s = split_temporal(&k, &r, "M").unwrap();
        assert_eq!(s.first_width_min, aff("N - M - 1"));
        assert_eq!(s.first_width_max, aff("N - 2"));
        // split at 0: empty first fragment, second equal to the original
        let b = Binding::from_pairs(&[("N", 8), ("M", 0)]);
        assert_eq!(s.first.cardinality("Supd1").unwrap().eval(&b).unwrap(), rat(0));
        assert_eq!(
            s.second.cardinality("Supd1").unwrap().eval(&b).unwrap(),
            k.cardinality("Supd1").unwrap().eval(&b).unwrap()
        );
    }

    #[test]
    fn scalar_statements_have_no_pattern() {
        let k = builtin_kernel("mgs").unwrap();
        assert!(detect(&k, "Ssqrt").unwrap().is_none());
        assert!(detect(&k, "SR0").unwrap().is_none());
    }
}
