//! Lower-bound derivation: classical K-partitioning and the hourglass
//! refinement (thick part I' plus flat part F), with the published catalog
//! for comparison.

use std::fmt;

use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::bl::{self, BlCertificate, BlError};
use crate::expr::poly::{frac, rat};
use crate::expr::{to_f64, Binding, BoundExpr, EvalError, ParseError, Rational};
use crate::hourglass::{detect_all, split_temporal, DetectError, HourglassReport};
use crate::kernel::{domain_cardinality, AffineExpr, AffineKernel, IterationDomain, KernelError, Statement};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BoundError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Bl(#[from] BlError),
    #[error("unknown catalog entry `{0}`")]
    UnknownCatalog(String),
    #[error("catalog formula: {0}")]
    Parse(#[from] ParseError),
}

/// Relative cost of the symbols in the exponent objective: caps are
/// compared through log|cap| with K ~ W^ALPHA, the regime W ≤ K ≤ W² where
/// the hourglass refinement matters.
fn alpha() -> Rational {
    frac(3, 2)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cap {
    pub expr: BoundExpr,
    pub k_degree: i64,
    pub w_degree: i64,
}

impl Cap {
    pub fn k() -> Self {
        Cap { expr: BoundExpr::param("K"), k_degree: 1, w_degree: 0 }
    }

    pub fn k_over(w: &BoundExpr) -> Self {
        Cap { expr: BoundExpr::param("K").div(w.clone()), k_degree: 1, w_degree: -1 }
    }

    pub fn width(w: &BoundExpr) -> Self {
        Cap { expr: w.clone(), k_degree: 0, w_degree: 1 }
    }

    pub fn constant(c: i64) -> Self {
        Cap { expr: BoundExpr::int(c), k_degree: 0, w_degree: 0 }
    }

    fn weight(&self) -> Rational {
        alpha() * rat(self.k_degree) + rat(self.w_degree)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    InsetPath,
    HourglassWidth,
    /// each projected point of a thick set pins W inset elements: at most K/W
    LineCut,
    Flatness,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProjectionSpec {
    pub kept: Vec<String>,
    pub cap: Cap,
    pub origin: Origin,
}

impl fmt::Display for ProjectionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "phi_{{{}}} <= {}", self.kept.join(","), self.cap.expr)
    }
}

/// One coordinate projection per distinct subscript-index set of the reads.
pub fn inset_projections(kernel: &AffineKernel, label: &str) -> Result<Vec<ProjectionSpec>, BoundError> {
    let (_, st) = kernel.statement(label)?;
    let mut out: Vec<ProjectionSpec> = Vec::new();
    for acc in &st.reads {
        let kept = acc.kept_dims(&st.domain.indices);
        if kept.is_empty() || out.iter().any(|p| p.kept == kept) {
            continue;
        }
        out.push(ProjectionSpec { kept, cap: Cap::k(), origin: Origin::InsetPath });
    }
    Ok(out)
}

pub fn bl_exponents(dims: &[String], projections: &[ProjectionSpec]) -> Result<BlCertificate, BlError> {
    bl_with_bounds(dims, projections, &vec![(Rational::zero(), Rational::one()); projections.len()])
}

fn bl_with_bounds(
    dims: &[String],
    projections: &[ProjectionSpec],
    bounds: &[(Rational, Rational)],
) -> Result<BlCertificate, BlError> {
    let kept: Vec<Vec<String>> = projections.iter().map(|p| p.kept.clone()).collect();
    let weights: Vec<Rational> = projections.iter().map(|p| p.cap.weight()).collect();
    bl::solve(dims, &kept, &weights, bounds)
}

/// Π cap_j^{s_j}, skipping `skip` and zero exponents.
fn cap_product(projections: &[ProjectionSpec], cert: &BlCertificate, skip: Option<usize>) -> BoundExpr {
    let mut factors = vec![BoundExpr::int(1)];
    for (j, (p, s)) in projections.iter().zip(&cert.exponents).enumerate() {
        if Some(j) == skip || s.is_zero() {
            continue;
        }
        factors.push(if s.is_one() { p.cap.expr.clone() } else { p.cap.expr.clone().pow(s.clone()) });
    }
    tidy(&BoundExpr::Product(factors))
}

/// Rational-function normal form when available.
fn tidy(e: &BoundExpr) -> BoundExpr {
    match e.to_rational_function() {
        Some(rf) => rf.normalize().to_expr(),
        None => e.simplify(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Classical,
    General,
    SmallCache,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Counts every instance of the statement; used for the best bound.
    Sound,
    /// Follows the published table's conventions (first temporal step
    /// excluded from the count, smallest width as the broadcast cap). Kept
    /// for reproduction only.
    CatalogConvention,
}

/// A free split parameter maximized over `[lo, hi]` at evaluation time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitRange {
    pub param: String,
    pub lo: BoundExpr,
    pub hi: BoundExpr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivedBound {
    pub kernel: String,
    pub statement: String,
    pub regime: Regime,
    pub variant: Variant,
    pub k_choice: BoundExpr,
    /// Upper bound on |E| for a K-bounded set, in the symbol K.
    pub emax: BoundExpr,
    pub node_count: BoundExpr,
    /// (K - S) * node_count / emax with K = k_choice.
    pub q_bound: BoundExpr,
    /// Applicability: each pair (a, b) requires a <= b.
    pub requires: Vec<(BoundExpr, BoundExpr)>,
    /// Largest K admissible for the regime in a K sweep (`None`: 4S).
    pub k_max: Option<BoundExpr>,
    pub split: Option<SplitRange>,
    pub notes: Vec<String>,
}

fn q_expr(k: &BoundExpr, node_count: &BoundExpr, emax: &BoundExpr) -> BoundExpr {
    let num = k.clone().sub(BoundExpr::param("S")).mul(node_count.clone());
    let den = emax.substitute("K", k);
    let q = num.clone().div(den.clone());
    match q.to_rational_function() {
        Some(rf) => rf.normalize().to_expr(),
        None => tidy(&num).div(tidy(&den)),
    }
}

fn eval_int(e: &BoundExpr, b: &Binding) -> Result<i64, EvalError> {
    let v = e.evaluate(b)?;
    Ok(v.floor().to_integer().to_i64().unwrap_or(i64::MAX))
}

impl DerivedBound {
    fn bindings(&self, binding: &Binding) -> Result<Vec<Binding>, EvalError> {
        match &self.split {
            None => Ok(vec![binding.clone()]),
            Some(sp) => {
                let lo = eval_int(&sp.lo, binding)?;
                let hi = eval_int(&sp.hi, binding)?;
                Ok((lo..=hi).map(|v| binding.with(&sp.param, v)).collect())
            }
        }
    }

    fn applicable(&self, b: &Binding) -> Result<bool, EvalError> {
        for (lhs, rhs) in &self.requires {
            if lhs.evaluate(b)? > rhs.evaluate(b)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Exact value at `binding`; `None` when the regime does not apply.
    /// Negative values are clamped to zero.
    pub fn evaluate(&self, binding: &Binding) -> Result<Option<Rational>, EvalError> {
        let mut best: Option<Rational> = None;
        for b in self.bindings(binding)? {
            if !self.applicable(&b)? {
                continue;
            }
            let v = self.q_bound.evaluate(&b)?.max(Rational::zero());
            if best.as_ref().is_none_or(|x| v > *x) {
                best = Some(v);
            }
        }
        Ok(best)
    }

    /// Value of the split parameter attaining the maximum, if any.
    pub fn best_split(&self, binding: &Binding) -> Result<Option<i64>, EvalError> {
        let Some(sp) = &self.split else { return Ok(None) };
        let mut best: Option<(Rational, i64)> = None;
        for b in self.bindings(binding)? {
            if !self.applicable(&b)? {
                continue;
            }
            let v = self.q_bound.evaluate(&b)?;
            if best.as_ref().is_none_or(|(x, _)| v > *x) {
                best = Some((v, b.get(&sp.param).unwrap_or(0)));
            }
        }
        Ok(best.map(|(_, m)| m))
    }

    /// Maximum of (K - S) * node_count / emax(K) over integer K in
    /// (S, k_max]; a refinement of the fixed proof choice of K.
    pub fn evaluate_k_sweep(&self, binding: &Binding) -> Result<Option<(Rational, i64)>, EvalError> {
        let s = binding.get("S").ok_or_else(|| EvalError::Unbound("S".into()))?;
        let mut best: Option<(Rational, i64)> = None;
        for b in self.bindings(binding)? {
            if !self.applicable(&b)? {
                continue;
            }
            let hi = match &self.k_max {
                Some(e) => eval_int(e, &b)?,
                None => 4 * s,
            };
            let q = BoundExpr::param("K")
                .sub(BoundExpr::param("S"))
                .mul(self.node_count.clone())
                .div(self.emax.clone());
            for k in (s + 1)..=hi {
                let v = match q.evaluate(&b.with("K", k)) {
                    Ok(v) => v,
                    Err(EvalError::DivisionByZero(_)) => continue,
                    Err(e) => return Err(e),
                };
                if best.as_ref().is_none_or(|(x, _)| v > *x) {
                    best = Some((v, k));
                }
            }
        }
        // the fixed choice is one of the candidates only when it lies in range
        if let Some(fixed) = self.evaluate(binding)? {
            if best.as_ref().is_none_or(|(x, _)| fixed > *x) {
                let k = eval_int(&self.k_choice, binding).unwrap_or(0);
                best = Some((fixed, k));
            }
        }
        Ok(best)
    }

    pub fn to_json(&self, binding: &Binding) -> serde_json::Value {
        let value = self.evaluate(binding);
        let (num, den, approx, err) = match &value {
            Ok(Some(v)) => (Some(v.numer().to_string()), Some(v.denom().to_string()), Some(to_f64(v)), None),
            Ok(None) => (None, None, None, Some("not applicable".to_string())),
            Err(e) => (None, None, None, Some(e.to_string())),
        };
        json!({
            "kernel": self.kernel,
            "statement": self.statement,
            "regime": self.regime,
            "variant": self.variant,
            "expression": self.q_bound.normalized_string(),
            "emax": self.emax.normalized_string(),
            "k": self.k_choice.to_string(),
            "node_count": self.node_count.normalized_string(),
            "value": {"numerator": num, "denominator": den, "approx": approx},
            "error": err,
            "notes": self.notes,
        })
    }
}

/// Classical K-partitioning bound with K = 2S.
pub fn classical_bound(kernel: &AffineKernel, label: &str, node_count: &BoundExpr) -> Result<DerivedBound, BoundError> {
    let (_, st) = kernel.statement(label)?;
    let projections = inset_projections(kernel, label)?;
    let cert = bl_exponents(&st.domain.indices, &projections)?;
    let sigma = cert.sum();
    let emax = if sigma.is_one() { BoundExpr::param("K") } else { BoundExpr::param("K").pow(sigma) };
    let k = BoundExpr::int(2).mul(BoundExpr::param("S"));
    Ok(DerivedBound {
        kernel: kernel.name.clone(),
        statement: label.to_string(),
        regime: Regime::Classical,
        variant: Variant::Sound,
        q_bound: q_expr(&k, node_count, &emax),
        k_choice: k,
        emax,
        node_count: node_count.clone(),
        requires: vec![],
        k_max: None,
        split: None,
        notes: vec![],
    })
}

/// Widths entering the thick-part bound: `line` caps the broadcast
/// projection, `min` divides K in the projections that lose broadcast dims.
#[derive(Clone, Debug)]
pub struct Widths {
    pub line: BoundExpr,
    pub min: BoundExpr,
}

/// Bound on |I'| (the temporally thick part): each projection onto x ∪ a
/// with a a nonempty set of broadcast dims becomes a projection onto x
/// capped by K/W, and the broadcast dims themselves are capped by W.
pub fn hourglass_iprime_bound(
    dims: &[String],
    report: &HourglassReport,
    projections: &[ProjectionSpec],
    widths: &Widths,
) -> Result<(BoundExpr, BlCertificate), BoundError> {
    let mut set: Vec<ProjectionSpec> = vec![ProjectionSpec {
        kept: report.broadcast.clone(),
        cap: Cap::width(&widths.line),
        origin: Origin::HourglassWidth,
    }];
    for p in projections {
        let (a, x): (Vec<String>, Vec<String>) = p.kept.iter().cloned().partition(|d| report.broadcast.contains(d));
        let spec = if a.is_empty() {
            p.clone()
        } else {
            ProjectionSpec { kept: x, cap: Cap::k_over(&widths.min), origin: Origin::LineCut }
        };
        if spec.kept.is_empty() {
            continue;
        }
        match set.iter_mut().find(|q| q.kept == spec.kept) {
            Some(q) => {
                if spec.cap.weight() < q.cap.weight() {
                    *q = spec;
                }
            }
            None => set.push(spec),
        }
    }
    let cert = bl_exponents(dims, &set)?;
    Ok((cap_product(&set, &cert, None), cert))
}

#[derive(Clone, Debug)]
pub struct FBound {
    pub e: BoundExpr,
    pub r: BoundExpr,
    pub bound: BoundExpr,
    /// Projection whose exponent was forced to 1; `None` on fallback.
    pub w: Option<Vec<String>>,
}

/// Bound on |F| (the temporally flat part): on each neutral slice the
/// temporal projection has at most 2 values; one projection touching the
/// neutral dims is kept at exponent 1 so the slices sum to at most R*K.
pub fn hourglass_f_bound(
    st: &Statement,
    report: &HourglassReport,
    projections: &[ProjectionSpec],
    node_count: &BoundExpr,
) -> FBound {
    let slice: Vec<String> = st
        .domain
        .indices
        .iter()
        .filter(|d| report.temporal.contains(d) || report.broadcast.contains(d))
        .cloned()
        .collect();
    let mut best: Option<(Rational, Rational, FBound)> = None;
    for (wi, w) in projections.iter().enumerate() {
        if !w.kept.iter().any(|d| report.neutral.contains(d)) {
            continue;
        }
        let restrict = |p: &ProjectionSpec| p.kept.iter().filter(|d| slice.contains(d)).cloned().collect::<Vec<_>>();
        let wk = restrict(w);
        if wk.is_empty() {
            continue;
        }
        let mut set = vec![
            ProjectionSpec { kept: wk, cap: Cap::k(), origin: Origin::InsetPath },
            ProjectionSpec { kept: report.temporal.clone(), cap: Cap::constant(2), origin: Origin::Flatness },
        ];
        for (j, p) in projections.iter().enumerate() {
            let kept = restrict(p);
            if j == wi || kept.is_empty() || set.iter().any(|q| q.kept == kept) {
                continue;
            }
            set.push(ProjectionSpec { kept, cap: Cap::k(), origin: Origin::InsetPath });
        }
        let mut bounds = vec![(Rational::zero(), Rational::one()); set.len()];
        bounds[0] = (Rational::one(), Rational::one());
        let Ok(cert) = bl_with_bounds(&slice, &set, &bounds) else { continue };
        let objective = set
            .iter()
            .zip(&cert.exponents)
            .skip(1)
            .fold(Rational::zero(), |a, (p, s)| a + p.cap.weight() * s);
        let e = cap_product(&set, &cert, Some(0));
        let missing: Vec<&String> = report.neutral.iter().filter(|d| !w.kept.contains(d)).collect();
        let r = if missing.is_empty() {
            BoundExpr::int(1)
        } else {
            tidy(&BoundExpr::Product(missing.iter().map(|d| extent(&st.domain, d)).collect()))
        };
        let bound = tidy(&e.clone().mul(r.clone()).mul(BoundExpr::param("K")));
        let key = (objective, cert.sum());
        if best.as_ref().is_none_or(|(o, s, _)| (key.0.clone(), key.1.clone()) < (o.clone(), s.clone())) {
            best = Some((key.0, key.1, FBound { e, r, bound, w: Some(w.kept.clone()) }));
        }
    }
    match best {
        Some((_, _, f)) => f,
        None => FBound { e: BoundExpr::int(1), r: BoundExpr::int(1), bound: node_count.clone(), w: None },
    }
}

/// Upper bound on the number of values index `dim` takes for fixed outer
/// indices: its range length maximized over the outer box.
fn extent(d: &IterationDomain, dim: &str) -> BoundExpr {
    let pos = d.position(dim).expect("dimension of the statement");
    let (lo, hi) = &d.bounds[pos];
    let mut cands = vec![hi.sub(lo)];
    for outer in (0..pos).rev() {
        let name = &d.indices[outer];
        let (olo, ohi) = &d.bounds[outer];
        let last = ohi.sub(&AffineExpr::constant(1));
        cands = cands
            .into_iter()
            .flat_map(|c| {
                if c.coeff(name) == 0 {
                    vec![c]
                } else {
                    vec![c.substitute(name, olo), c.substitute(name, &last)]
                }
            })
            .collect();
    }
    let mut exprs: Vec<BoundExpr> = cands.iter().map(|c| BoundExpr::from_poly(&c.to_poly())).collect();
    exprs.push(BoundExpr::int(0));
    BoundExpr::Max(exprs).simplify()
}

/// Instance count with the outermost temporal step removed.
fn interior_count(st: &Statement) -> BoundExpr {
    let mut d = st.domain.clone();
    d.bounds[0].0 = d.bounds[0].0.add(&AffineExpr::constant(1));
    BoundExpr::from_poly(&domain_cardinality(&d))
}

fn affine_expr(e: &AffineExpr) -> BoundExpr {
    BoundExpr::from_poly(&e.to_poly())
}

struct HourglassInputs<'a> {
    kernel: &'a AffineKernel,
    st: &'a Statement,
    report: &'a HourglassReport,
    projections: Vec<ProjectionSpec>,
}

impl HourglassInputs<'_> {
    #[allow(clippy::too_many_arguments)]
    fn regimes(
        &self,
        variant: Variant,
        widths: &Widths,
        node_count: &BoundExpr,
        split: Option<SplitRange>,
        small_cache: bool,
        notes: &[String],
    ) -> Result<Vec<DerivedBound>, BoundError> {
        let dims = &self.st.domain.indices;
        let (iprime, _) = hourglass_iprime_bound(dims, self.report, &self.projections, widths)?;
        let f = hourglass_f_bound(self.st, self.report, &self.projections, node_count);
        let mut notes = notes.to_vec();
        if f.w.is_none() {
            notes.push("no projection touches the neutral dims; flat part bounded by the node count".into());
        }
        if self.projections.len() > 3 {
            notes.push("flat-part bound generalized beyond three projections".into());
        }
        let one = BoundExpr::int(1);
        let s = BoundExpr::param("S");
        let mut out = Vec::new();
        let emax = tidy(&iprime.add(f.bound.clone()));
        let k = BoundExpr::int(2).mul(s.clone());
        out.push(DerivedBound {
            kernel: self.kernel.name.clone(),
            statement: self.st.label.clone(),
            regime: Regime::General,
            variant,
            q_bound: q_expr(&k, node_count, &emax),
            k_choice: k,
            emax,
            node_count: node_count.clone(),
            requires: vec![(one.clone(), widths.min.clone())],
            k_max: None,
            split: split.clone(),
            notes: notes.clone(),
        });
        if small_cache {
            // with K no larger than the width, no thick set fits in K
            let k = widths.min.clone();
            out.push(DerivedBound {
                kernel: self.kernel.name.clone(),
                statement: self.st.label.clone(),
                regime: Regime::SmallCache,
                variant,
                q_bound: q_expr(&k, node_count, &f.bound),
                k_choice: k.clone(),
                emax: f.bound.clone(),
                node_count: node_count.clone(),
                requires: vec![(one, widths.min.clone()), (s, widths.min.clone())],
                k_max: Some(k),
                split,
                notes,
            });
        }
        Ok(out)
    }
}

/// Hourglass bounds for one detected statement: the sound general and
/// small-cache regimes, plus the catalog-convention general form.
pub fn hourglass_bound(kernel: &AffineKernel, report: &HourglassReport) -> Result<Vec<DerivedBound>, BoundError> {
    let (_, st) = kernel.statement(&report.statement)?;
    let inputs = HourglassInputs {
        kernel,
        st,
        report,
        projections: inset_projections(kernel, &report.statement)?,
    };
    let full = BoundExpr::from_poly(&kernel.cardinality(&report.statement)?);
    let interior = interior_count(st);
    let mut out = Vec::new();
    if report.large_width {
        let sound = Widths { line: affine_expr(&report.width_max), min: affine_expr(&report.width_min) };
        out.extend(inputs.regimes(Variant::Sound, &sound, &full, None, true, &[])?);
        let conv = Widths { line: affine_expr(&report.width_min), min: affine_expr(&report.width_min) };
        out.extend(inputs.regimes(Variant::CatalogConvention, &conv, &interior, None, false, &[])?);
    } else {
        let param = fresh_split_param(kernel);
        let split = split_temporal(kernel, report, &param)?;
        let (_, fst) = split.first.statement(&report.statement)?;
        let first_count = BoundExpr::from_poly(&domain_cardinality(&fst.domain));
        let wmin = affine_expr(&split.first_width_min);
        let range = SplitRange {
            param: param.clone(),
            lo: BoundExpr::int(1),
            // largest split keeping the first fragment's width at least 1
            hi: tidy(&wmin.clone().substitute(&param, &BoundExpr::int(0)).sub(BoundExpr::int(1))),
        };
        let note = format!("outer temporal loop split at {param}; maximized over the split point");
        let sound = Widths { line: affine_expr(&split.first_width_max), min: wmin.clone() };
        out.extend(inputs.regimes(Variant::Sound, &sound, &first_count, Some(range.clone()), true, &[note.clone()])?);
        let conv = Widths { line: wmin.clone(), min: wmin };
        out.extend(inputs.regimes(Variant::CatalogConvention, &conv, &interior, Some(range), false, &[note])?);
    }
    Ok(out)
}

fn fresh_split_param(kernel: &AffineKernel) -> String {
    ["M", "P", "Q", "T"]
        .iter()
        .find(|p| !kernel.parameters.iter().any(|q| &q.name == *p))
        .expect("a free parameter name")
        .to_string()
}

/// Every bound derivable for a kernel.
#[derive(Clone, Debug)]
pub struct BoundSet {
    pub kernel: String,
    pub reports: Vec<HourglassReport>,
    pub bounds: Vec<DerivedBound>,
}

pub fn derive(kernel: &AffineKernel) -> Result<BoundSet, BoundError> {
    let reports = detect_all(kernel)?;
    let mut bounds = Vec::new();
    for st in &kernel.statements {
        let count = BoundExpr::from_poly(&kernel.cardinality(&st.label)?);
        match classical_bound(kernel, &st.label, &count) {
            Ok(b) => bounds.push(b),
            Err(BoundError::Bl(_)) => {}
            Err(e) => return Err(e),
        }
    }
    for r in &reports {
        bounds.extend(hourglass_bound(kernel, r)?);
    }
    Ok(BoundSet { kernel: kernel.name.clone(), reports, bounds })
}

impl BoundSet {
    fn best_by(&self, binding: &Binding, keep: impl Fn(&DerivedBound) -> bool) -> Option<(Rational, &DerivedBound)> {
        let mut best: Option<(Rational, &DerivedBound)> = None;
        for b in self.bounds.iter().filter(|b| keep(b)) {
            if let Ok(Some(v)) = b.evaluate(binding) {
                if best.as_ref().is_none_or(|(x, _)| v > *x) {
                    best = Some((v, b));
                }
            }
        }
        best
    }

    /// Largest sound bound of any regime.
    pub fn best(&self, binding: &Binding) -> Option<(Rational, &DerivedBound)> {
        self.best_by(binding, |b| b.variant == Variant::Sound)
    }

    pub fn best_classical(&self, binding: &Binding) -> Option<(Rational, &DerivedBound)> {
        self.best_by(binding, |b| b.regime == Regime::Classical)
    }

    pub fn best_hourglass(&self, binding: &Binding) -> Option<(Rational, &DerivedBound)> {
        self.best_by(binding, |b| b.variant == Variant::Sound && b.regime != Regime::Classical)
    }

    pub fn best_in(&self, binding: &Binding, regime: Regime) -> Option<(Rational, &DerivedBound)> {
        self.best_by(binding, |b| b.variant == Variant::Sound && b.regime == regime)
    }

    pub fn find(&self, statement: &str, regime: Regime, variant: Variant) -> Option<&DerivedBound> {
        self.bounds
            .iter()
            .find(|b| b.statement == statement && b.regime == regime && b.variant == variant)
    }
}

/// A published formula: dominant fractional term plus additive tail.
#[derive(Clone, Debug)]
pub struct CatalogRow {
    pub dominant: BoundExpr,
    pub tail: BoundExpr,
}

impl CatalogRow {
    fn parse(dominant: &str, tail: &str) -> Result<Self, ParseError> {
        Ok(CatalogRow { dominant: BoundExpr::parse(dominant)?, tail: BoundExpr::parse(tail)? })
    }

    pub fn full(&self) -> BoundExpr {
        self.dominant.clone().add(self.tail.clone())
    }
}

#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub kernel: String,
    pub old: CatalogRow,
    pub new: CatalogRow,
    pub upper: Option<BoundExpr>,
    /// Free split parameter of the new row, maximized at evaluation.
    pub split: Option<SplitRange>,
}

impl CatalogEntry {
    /// Row value at `binding` (dominant plus tail), maximized over the
    /// split parameter when present and clamped at zero.
    pub fn evaluate(&self, row: &CatalogRow, binding: &Binding) -> Result<Rational, EvalError> {
        let full = row.full();
        let points = match &self.split {
            Some(sp) if full.symbols().contains(&sp.param) => {
                let lo = eval_int(&sp.lo, binding)?;
                let hi = eval_int(&sp.hi, binding)?;
                (lo..=hi).map(|v| binding.with(&sp.param, v)).collect()
            }
            _ => vec![binding.clone()],
        };
        let mut best = Rational::zero();
        for b in points {
            best = best.max(full.evaluate(&b)?);
        }
        Ok(best)
    }
}

pub const CATALOG_KERNELS: [&str; 5] = ["mgs", "hh_a2v", "hh_v2q", "gebd2", "gehd2"];

/// Published lower bounds without and with the hourglass refinement, and
/// the tiled-algorithm upper bounds where known. GEHD2's new row carries
/// the split parameter M.
pub fn catalog(id: &str) -> Result<CatalogEntry, BoundError> {
    let (old, old_tail, new, new_tail, upper): (&str, &str, &str, &str, Option<&str>) = match id {
        "mgs" => (
            "(2*M + 3*M*N + M*N^2)/sqrt(S)",
            "5*M - M*N + (7*N - N^2)/2 - S - 6",
            "(N^2*M^2 + 2*M^2 - 3*N*M^2)/(8*(M + S))",
            "5*M - M*N + (7*N - N^2)/2 - S - 6",
            Some("M^2*N^2/(2*S)"),
        ),
        "hh_a2v" => (
            "(3*M*N^2 + 6*M + 7*N - N^3 - 9*M*N - 6)/(3*sqrt(S))",
            "5*M - M*N + 5*N - S - 13",
            "(3*M*N^2 - 9*M*N + 7*N + 6*M - 6 - N^3)/(24*(1 - S/(N - M)))",
            "5*M - M*N + 5*N - S - 13",
            Some("(M^2*N^2 - M*N^3/3)/(2*S)"),
        ),
        "hh_v2q" => (
            "(3*M*N^2 - N^3 + 6*M + 7*N - 9*M*N - 6)/(3*sqrt(S))",
            "2*M + 2*N + (N - N^2)/2 - S - 4",
            "(3*M*N^2 - N^3 + 6*M + 7*N - 9*M*N - 6)/(24*(1 + S/(M - N)))",
            "2*M + 2*N + (N - N^2)/2 - S - 4",
            None,
        ),
        "gebd2" => (
            "(3*M*N^2 - N^3 - 9*M*N + 6*M + 7*N - 6)/(3*sqrt(S))",
            "5*N + 5*M - M*N - S - 13",
            "(3*M*N^2 - N^3 + 3*N^2 - 15*M*N + 4*N + 18*M - 12)/(24*(1 + S/(1 + M - N)))",
            "5*N + 7*M - M*N - S - 18",
            None,
        ),
        "gehd2" => (
            "(5*N^3 - 30*N^2 + 55*N - 30)/(3*sqrt(S))",
            "(69*N - 9*N^2)/2 - 3*S - 56",
            "(N^3 - 6*N^2 + 11*N - 6)/(12*(1 + S/(N - M - 1)))",
            "-N^2 + 12*N - S - 19",
            None,
        ),
        other => return Err(BoundError::UnknownCatalog(other.to_string())),
    };
    Ok(CatalogEntry {
        kernel: id.to_string(),
        old: CatalogRow::parse(old, old_tail)?,
        new: CatalogRow::parse(new, new_tail)?,
        upper: upper.map(BoundExpr::parse).transpose()?,
        split: (id == "gehd2").then(|| SplitRange {
            param: "M".into(),
            lo: BoundExpr::int(1),
            hi: BoundExpr::param("N").sub(BoundExpr::int(2)),
        }),
    })
}
