//! Parametric affine loop nests and the built-in kernels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::expr::poly::{rat, sum_over, Poly};
use crate::expr::Binding;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("unknown statement `{0}`")]
    UnknownStatement(String),
    #[error("unbound symbol `{0}`")]
    Unbound(String),
    #[error("malformed affine expression `{0}`")]
    Malformed(String),
    #[error("{0}")]
    NotApplicable(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AffineExpr {
    pub constant: i64,
    pub terms: BTreeMap<String, i64>,
}

impl AffineExpr {
    pub fn constant(c: i64) -> Self {
        AffineExpr { constant: c, terms: BTreeMap::new() }
    }

    pub fn var(name: &str) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(name.to_string(), 1);
        AffineExpr { constant: 0, terms }
    }

    /// Parses `2*k + j - N + 1` style expressions.
    pub fn parse(src: &str) -> Result<Self, KernelError> {
        let bad = || KernelError::Malformed(src.to_string());
        let mut out = AffineExpr::default();
        let s: String = src.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err(bad());
        }
        let mut chunks = Vec::new();
        let mut cur = String::new();
        for (idx, c) in s.chars().enumerate() {
            if (c == '+' || c == '-') && idx > 0 {
                chunks.push(std::mem::take(&mut cur));
            }
            cur.push(c);
        }
        chunks.push(cur);
        for chunk in chunks {
            let (sign, body) = match chunk.strip_prefix('-') {
                Some(rest) => (-1, rest),
                None => (1, chunk.strip_prefix('+').unwrap_or(&chunk)),
            };
            if body.is_empty() {
                return Err(bad());
            }
            let (coef, name) = match body.split_once('*') {
                Some((c, n)) => (c.parse::<i64>().map_err(|_| bad())?, n),
                None => match body.parse::<i64>() {
                    Ok(v) => {
                        out.constant += sign * v;
                        continue;
                    }
                    Err(_) => (1, body),
                },
            };
            if !name.chars().all(|c| c.is_alphanumeric() || c == '_')
                || name.starts_with(|c: char| c.is_ascii_digit())
            {
                return Err(bad());
            }
            *out.terms.entry(name.to_string()).or_insert(0) += sign * coef;
        }
        out.terms.retain(|_, c| *c != 0);
        Ok(out)
    }

    pub fn coeff(&self, name: &str) -> i64 {
        self.terms.get(name).copied().unwrap_or(0)
    }

    pub fn symbols(&self) -> impl Iterator<Item = &String> {
        self.terms.keys()
    }

    pub fn add(&self, o: &AffineExpr) -> AffineExpr {
        let mut r = self.clone();
        r.constant += o.constant;
        for (k, v) in &o.terms {
            *r.terms.entry(k.clone()).or_insert(0) += v;
        }
        r.terms.retain(|_, c| *c != 0);
        r
    }

    pub fn neg(&self) -> AffineExpr {
        AffineExpr {
            constant: -self.constant,
            terms: self.terms.iter().map(|(k, v)| (k.clone(), -v)).collect(),
        }
    }

    pub fn sub(&self, o: &AffineExpr) -> AffineExpr {
        self.add(&o.neg())
    }

    pub fn scale(&self, c: i64) -> AffineExpr {
        let mut r = AffineExpr {
            constant: self.constant * c,
            terms: self.terms.iter().map(|(k, v)| (k.clone(), v * c)).collect(),
        };
        r.terms.retain(|_, c| *c != 0);
        r
    }

    /// Replaces `name` by `value`.
    pub fn substitute(&self, name: &str, value: &AffineExpr) -> AffineExpr {
        let c = self.coeff(name);
        if c == 0 {
            return self.clone();
        }
        let mut rest = self.clone();
        rest.terms.remove(name);
        rest.add(&value.scale(c))
    }

    pub fn eval(&self, lookup: impl Fn(&str) -> Option<i64>) -> Result<i64, KernelError> {
        let mut v = self.constant;
        for (k, c) in &self.terms {
            v += c * lookup(k).ok_or_else(|| KernelError::Unbound(k.clone()))?;
        }
        Ok(v)
    }

    pub fn to_poly(&self) -> Poly {
        let mut p = Poly::int(self.constant);
        for (k, c) in &self.terms {
            p = p + Poly::var(k).scale(&rat(*c));
        }
        p
    }
}

impl fmt::Display for AffineExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, c) in &self.terms {
            let sign = if *c < 0 { "-" } else if first { "" } else { "+" };
            let mag = c.abs();
            if !first {
                write!(f, " {sign} ")?;
            } else {
                write!(f, "{sign}")?;
            }
            if mag == 1 {
                write!(f, "{k}")?;
            } else {
                write!(f, "{mag}*{k}")?;
            }
            first = false;
        }
        if first {
            write!(f, "{}", self.constant)
        } else if self.constant > 0 {
            write!(f, " + {}", self.constant)
        } else if self.constant < 0 {
            write!(f, " - {}", -self.constant)
        } else {
            Ok(())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ArrayAccess {
    pub array: String,
    pub subscripts: Vec<AffineExpr>,
}

impl ArrayAccess {
    /// Parses `A[i][k+1]`.
    pub fn parse(src: &str) -> Result<Self, KernelError> {
        let bad = || KernelError::Malformed(src.to_string());
        let src = src.trim();
        let open = src.find('[').unwrap_or(src.len());
        let array = src[..open].trim().to_string();
        if array.is_empty() {
            return Err(bad());
        }
        let mut subscripts = Vec::new();
        let mut rest = &src[open..];
        while !rest.is_empty() {
            let inner = rest.strip_prefix('[').ok_or_else(bad)?;
            let close = inner.find(']').ok_or_else(bad)?;
            subscripts.push(AffineExpr::parse(&inner[..close])?);
            rest = inner[close + 1..].trim_start();
        }
        Ok(ArrayAccess { array, subscripts })
    }

    /// Loop indices referenced by the subscripts, in `order`.
    pub fn kept_dims(&self, order: &[String]) -> Vec<String> {
        order
            .iter()
            .filter(|d| self.subscripts.iter().any(|s| s.coeff(d) != 0))
            .cloned()
            .collect()
    }
}

impl fmt::Display for ArrayAccess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.array)?;
        for s in &self.subscripts {
            write!(f, "[{s}]")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ParamRole {
    ProblemSize,
    CacheSize,
    BlockSize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Parameter {
    pub name: String,
    pub role: ParamRole,
}

/// Loop bounds of a statement: `bounds[d] = (lower, upper)` with the upper
/// bound exclusive. `descending[d]` records iteration direction only; the
/// set of points is the same.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IterationDomain {
    pub indices: Vec<String>,
    pub bounds: Vec<(AffineExpr, AffineExpr)>,
    pub descending: Vec<bool>,
}

impl IterationDomain {
    pub fn position(&self, index: &str) -> Option<usize> {
        self.indices.iter().position(|x| x == index)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Statement {
    pub label: String,
    pub domain: IterationDomain,
    pub reads: Vec<ArrayAccess>,
    pub write: ArrayAccess,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Loop {
    pub index: String,
    pub lower: AffineExpr,
    pub upper: AffineExpr,
    pub descending: bool,
    pub body: Vec<Node>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Loop(Loop),
    Stmt(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffineKernel {
    pub name: String,
    pub parameters: Vec<Parameter>,
    pub statements: Vec<Statement>,
    pub body: Vec<Node>,
    pub outputs: BTreeSet<String>,
}

impl AffineKernel {
    pub fn statement(&self, label: &str) -> Result<(usize, &Statement), KernelError> {
        self.statements
            .iter()
            .enumerate()
            .find(|(_, s)| s.label == label)
            .ok_or_else(|| KernelError::UnknownStatement(label.to_string()))
    }

    pub fn problem_parameters(&self) -> Vec<&str> {
        self.parameters
            .iter()
            .filter(|p| p.role == ParamRole::ProblemSize)
            .map(|p| p.name.as_str())
            .collect()
    }

    fn rebuild_domains(&mut self) {
        fn walk(nodes: &[Node], path: &mut Vec<(String, AffineExpr, AffineExpr, bool)>, out: &mut BTreeMap<usize, IterationDomain>) {
            for n in nodes {
                match n {
                    Node::Stmt(s) => {
                        out.insert(
                            *s,
                            IterationDomain {
                                indices: path.iter().map(|p| p.0.clone()).collect(),
                                bounds: path.iter().map(|p| (p.1.clone(), p.2.clone())).collect(),
                                descending: path.iter().map(|p| p.3).collect(),
                            },
                        );
                    }
                    Node::Loop(l) => {
                        path.push((l.index.clone(), l.lower.clone(), l.upper.clone(), l.descending));
                        walk(&l.body, path, out);
                        path.pop();
                    }
                }
            }
        }
        let mut out = BTreeMap::new();
        walk(&self.body, &mut Vec::new(), &mut out);
        for (s, d) in out {
            self.statements[s].domain = d;
        }
    }

    /// Visits every statement instance in sequential execution order.
    pub fn for_each_instance(
        &self,
        binding: &Binding,
        mut visit: impl FnMut(usize, &[i64]),
    ) -> Result<(), KernelError> {
        let compiled = compile_nodes(&self.body, binding, &mut Vec::new())?;
        let mut vals = Vec::new();
        run_nodes(&compiled, &mut vals, &mut visit);
        Ok(())
    }

    /// Symbolic instance count of a statement as a polynomial in the
    /// parameters. Exact whenever every loop's upper bound is at least its
    /// lower bound over the domain, which holds for the built-in kernels at
    /// all bindings where their statements are meaningful.
    pub fn cardinality(&self, label: &str) -> Result<Poly, KernelError> {
        let (_, st) = self.statement(label)?;
        Ok(domain_cardinality(&st.domain))
    }

    /// Splits the outermost loop enclosing `label` at `split`. The first
    /// fragment covers `[lower, split)` and the second `[split, upper)`.
    pub fn split_loop(&self, label: &str, split: &str) -> Result<(AffineKernel, AffineKernel), KernelError> {
        let (_, st) = self.statement(label)?;
        let outer = st
            .domain
            .indices
            .first()
            .ok_or_else(|| KernelError::NotApplicable(format!("{label} has no loop")))?
            .clone();
        if self.parameters.iter().any(|p| p.name == split) {
            return Err(KernelError::NotApplicable(format!("{split} is not a fresh parameter")));
        }
        let make = |first: bool| {
            let mut k = self.clone();
            for n in &mut k.body {
                if let Node::Loop(l) = n {
                    if l.index == outer {
                        if first {
                            l.upper = AffineExpr::var(split);
                        } else {
                            l.lower = AffineExpr::var(split);
                        }
                    }
                }
            }
            k.parameters.push(Parameter { name: split.to_string(), role: ParamRole::ProblemSize });
            k.name = format!("{}[{}{}{}]", self.name, outer, if first { "<" } else { ">=" }, split);
            k.rebuild_domains();
            k
        };
        Ok((make(true), make(false)))
    }
}

pub fn domain_cardinality(d: &IterationDomain) -> Poly {
    let mut p = Poly::int(1);
    for (idx, (lo, hi)) in d.indices.iter().zip(&d.bounds).rev() {
        p = sum_over(&p, idx, &lo.to_poly(), &hi.to_poly());
    }
    p
}

/// Instances of one statement in execution order.
pub fn enumerate_instances(st: &Statement, binding: &Binding) -> Result<Vec<Vec<i64>>, KernelError> {
    let mut out = Vec::new();
    let d = &st.domain;
    let bounds: Vec<(CAffine, CAffine)> = d
        .bounds
        .iter()
        .map(|(l, u)| Ok((CAffine::compile(l, binding, &d.indices)?, CAffine::compile(u, binding, &d.indices)?)))
        .collect::<Result<_, KernelError>>()?;
    fn rec(
        depth: usize,
        bounds: &[(CAffine, CAffine)],
        desc: &[bool],
        vals: &mut Vec<i64>,
        out: &mut Vec<Vec<i64>>,
    ) {
        if depth == bounds.len() {
            out.push(vals.clone());
            return;
        }
        let lo = bounds[depth].0.eval(vals);
        let hi = bounds[depth].1.eval(vals);
        let mut step = |v: i64, vals: &mut Vec<i64>| {
            vals.push(v);
            rec(depth + 1, bounds, desc, vals, out);
            vals.pop();
        };
        if desc[depth] {
            for v in (lo..hi).rev() {
                step(v, vals);
            }
        } else {
            for v in lo..hi {
                step(v, vals);
            }
        }
    }
    rec(0, &bounds, &d.descending, &mut Vec::new(), &mut out);
    Ok(out)
}

// Affine form with parameters folded in and indices addressed by depth.
#[derive(Clone, Debug)]
struct CAffine {
    constant: i64,
    coeffs: Vec<(usize, i64)>,
}

impl CAffine {
    fn compile(e: &AffineExpr, binding: &Binding, indices: &[String]) -> Result<Self, KernelError> {
        let mut constant = e.constant;
        let mut coeffs = Vec::new();
        for (k, c) in &e.terms {
            if let Some(pos) = indices.iter().position(|x| x == k) {
                coeffs.push((pos, *c));
            } else {
                constant += c * binding.get(k).ok_or_else(|| KernelError::Unbound(k.clone()))?;
            }
        }
        Ok(CAffine { constant, coeffs })
    }

    fn eval(&self, vals: &[i64]) -> i64 {
        self.constant + self.coeffs.iter().map(|(p, c)| c * vals[*p]).sum::<i64>()
    }
}

enum CNode {
    Loop { lower: CAffine, upper: CAffine, descending: bool, body: Vec<CNode> },
    Stmt(usize),
}

fn compile_nodes(nodes: &[Node], binding: &Binding, path: &mut Vec<String>) -> Result<Vec<CNode>, KernelError> {
    nodes
        .iter()
        .map(|n| match n {
            Node::Stmt(s) => Ok(CNode::Stmt(*s)),
            Node::Loop(l) => {
                let lower = CAffine::compile(&l.lower, binding, path)?;
                let upper = CAffine::compile(&l.upper, binding, path)?;
                path.push(l.index.clone());
                let body = compile_nodes(&l.body, binding, path);
                path.pop();
                Ok(CNode::Loop { lower, upper, descending: l.descending, body: body? })
            }
        })
        .collect()
}

fn run_nodes(nodes: &[CNode], vals: &mut Vec<i64>, visit: &mut impl FnMut(usize, &[i64])) {
    for n in nodes {
        match n {
            CNode::Stmt(s) => visit(*s, vals),
            CNode::Loop { lower, upper, descending, body } => {
                let (lo, hi) = (lower.eval(vals), upper.eval(vals));
                if *descending {
                    for v in (lo..hi).rev() {
                        vals.push(v);
                        run_nodes(body, vals, visit);
                        vals.pop();
                    }
                } else {
                    for v in lo..hi {
                        vals.push(v);
                        run_nodes(body, vals, visit);
                        vals.pop();
                    }
                }
            }
        }
    }
}

/// Incremental construction of a loop tree.
pub struct KernelBuilder {
    name: String,
    parameters: Vec<Parameter>,
    statements: Vec<Statement>,
    stack: Vec<Vec<Node>>,
    outputs: BTreeSet<String>,
}

fn aff(s: &str) -> AffineExpr {
    AffineExpr::parse(s).unwrap_or_else(|e| panic!("{e}"))
}

impl KernelBuilder {
    pub fn new(name: &str, params: &[&str], outputs: &[&str]) -> Self {
        KernelBuilder {
            name: name.to_string(),
            parameters: params
                .iter()
                .map(|p| Parameter { name: p.to_string(), role: ParamRole::ProblemSize })
                .collect(),
            statements: Vec::new(),
            stack: vec![Vec::new()],
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn push_loop(&mut self, index: &str, lo: &str, hi: &str, descending: bool, f: impl FnOnce(&mut Self)) -> &mut Self {
        self.stack.push(Vec::new());
        f(self);
        let body = self.stack.pop().unwrap();
        self.stack.last_mut().unwrap().push(Node::Loop(Loop {
            index: index.to_string(),
            lower: aff(lo),
            upper: aff(hi),
            descending,
            body,
        }));
        self
    }

    /// `for (index = lo; index < hi; index++)`.
    pub fn for_(&mut self, index: &str, lo: &str, hi: &str, f: impl FnOnce(&mut Self)) -> &mut Self {
        self.push_loop(index, lo, hi, false, f)
    }

    /// `for (index = hi - 1; index >= lo; index--)`.
    pub fn for_rev(&mut self, index: &str, lo: &str, hi: &str, f: impl FnOnce(&mut Self)) -> &mut Self {
        self.push_loop(index, lo, hi, true, f)
    }

    pub fn stmt(&mut self, label: &str, write: &str, reads: &[&str]) -> &mut Self {
        let acc = |s: &str| ArrayAccess::parse(s).unwrap_or_else(|e| panic!("{e}"));
        self.statements.push(Statement {
            label: label.to_string(),
            domain: IterationDomain { indices: vec![], bounds: vec![], descending: vec![] },
            reads: reads.iter().map(|r| acc(r)).collect(),
            write: acc(write),
        });
        let idx = self.statements.len() - 1;
        self.stack.last_mut().unwrap().push(Node::Stmt(idx));
        self
    }

    pub fn build(mut self) -> AffineKernel {
        assert_eq!(self.stack.len(), 1, "unbalanced loops");
        let mut k = AffineKernel {
            name: self.name,
            parameters: self.parameters,
            statements: self.statements,
            body: self.stack.pop().unwrap(),
            outputs: self.outputs,
        };
        k.rebuild_domains();
        k
    }
}

pub const BUILTIN_KERNELS: [&str; 4] = ["mgs", "hh_a2v", "hh_v2q", "gehd2"];

pub fn builtin_kernel(name: &str) -> Result<AffineKernel, KernelError> {
    match name {
        "mgs" => Ok(mgs()),
        "hh_a2v" => Ok(hh_a2v()),
        "hh_v2q" => Ok(hh_v2q()),
        "gehd2" => Ok(gehd2()),
        other => Err(KernelError::UnknownKernel(other.to_string())),
    }
}

fn mgs() -> AffineKernel {
    let mut b = KernelBuilder::new("mgs", &["M", "N"], &["Q", "R"]);
    b.for_("k", "0", "N", |b| {
        b.stmt("Snrm0", "nrm[k]", &[]);
        b.for_("i", "0", "M", |b| {
            b.stmt("Snrm", "nrm[k]", &["nrm[k]", "A[i][k]"]);
        });
        b.stmt("Ssqrt", "R[k][k]", &["nrm[k]"]);
        b.for_("i", "0", "M", |b| {
            b.stmt("Sq", "Q[i][k]", &["A[i][k]", "R[k][k]"]);
        });
        b.for_("j", "k+1", "N", |b| {
            b.stmt("SR0", "R[k][j]", &[]);
            b.for_("i", "0", "M", |b| {
                b.stmt("SR", "R[k][j]", &["R[k][j]", "Q[i][k]", "A[i][j]"]);
            });
            b.for_("i", "0", "M", |b| {
                b.stmt("SU", "A[i][j]", &["A[i][j]", "Q[i][k]", "R[k][j]"]);
            });
        });
    });
    b.build()
}

// The scalar reflector work value `tau[j]` (j > k) is versioned as w[k][j]
// so that it does not alias the reflector coefficients tau[k].
fn hh_a2v() -> AffineKernel {
    let mut b = KernelBuilder::new("hh_a2v", &["M", "N"], &["A", "tau"]);
    b.for_("k", "0", "N", |b| {
        b.stmt("Sn0", "norma2[k]", &[]);
        b.for_("i", "k+1", "M", |b| {
            b.stmt("Sn", "norma2[k]", &["norma2[k]", "A[i][k]"]);
        });
        b.stmt("Snorm", "norma[k]", &["A[k][k]", "norma2[k]"]);
        b.stmt("Sdiag", "A[k][k]", &["A[k][k]", "norma[k]"]);
        b.stmt("Stau", "tau[k]", &["norma2[k]", "A[k][k]"]);
        b.for_("i", "k+1", "M", |b| {
            b.stmt("Sv", "A[i][k]", &["A[i][k]", "A[k][k]"]);
        });
        b.stmt("Sdiag2", "A[k][k]", &["A[k][k]", "norma[k]"]);
        b.for_("j", "k+1", "N", |b| {
            b.stmt("Sw0", "w[k][j]", &["A[k][j]"]);
            b.for_("i", "k+1", "M", |b| {
                b.stmt("SR", "w[k][j]", &["w[k][j]", "A[i][k]", "A[i][j]"]);
            });
            b.stmt("Sscale", "w[k][j]", &["tau[k]", "w[k][j]"]);
            b.stmt("Stop", "A[k][j]", &["A[k][j]", "w[k][j]"]);
            b.for_("i", "k+1", "M", |b| {
                b.stmt("SU", "A[i][j]", &["A[i][j]", "A[i][k]", "w[k][j]"]);
            });
        });
    });
    b.build()
}

fn hh_v2q() -> AffineKernel {
    let mut b = KernelBuilder::new("hh_v2q", &["M", "N"], &["A"]);
    b.for_rev("k", "0", "N", |b| {
        b.for_("j", "k+1", "N", |b| {
            b.stmt("Sw0", "w[k][j]", &[]);
            b.for_("i", "k+1", "M", |b| {
                b.stmt("SR", "w[k][j]", &["w[k][j]", "A[i][k]", "A[i][j]"]);
            });
        });
        b.for_("j", "k+1", "N", |b| {
            b.stmt("ST", "w[k][j]", &["w[k][j]", "tau[k]"]);
        });
        b.stmt("Sd", "A[k][k]", &["tau[k]"]);
        b.for_("j", "k+1", "N", |b| {
            b.stmt("Srow", "A[k][j]", &["w[k][j]"]);
        });
        b.for_("j", "k+1", "N", |b| {
            b.for_("i", "k+1", "M", |b| {
                b.stmt("SU", "A[i][j]", &["A[i][j]", "A[i][k]", "w[k][j]"]);
            });
        });
        b.for_("i", "k+1", "M", |b| {
            b.stmt("Scol", "A[i][k]", &["A[i][k]", "tau[k]"]);
        });
    });
    b.build()
}

fn gehd2() -> AffineKernel {
    let mut b = KernelBuilder::new("gehd2", &["N"], &["A", "tau"]);
    b.for_("j", "0", "N-2", |b| {
        b.stmt("Sn0", "norma2[j]", &[]);
        b.for_("i", "j+2", "N", |b| {
            b.stmt("Sn", "norma2[j]", &["norma2[j]", "A[i][j]"]);
        });
        b.stmt("Snorm", "norma[j]", &["A[j+1][j]", "norma2[j]"]);
        b.stmt("Sd1", "A[j+1][j]", &["A[j+1][j]", "norma[j]"]);
        b.stmt("Stau", "tau[j]", &["norma2[j]", "A[j+1][j]"]);
        b.for_("i", "j+2", "N", |b| {
            b.stmt("Sv", "A[i][j]", &["A[i][j]", "A[j+1][j]"]);
        });
        b.stmt("Sd2", "A[j+1][j]", &["A[j+1][j]", "norma[j]"]);
        b.for_("i", "j+1", "N", |b| {
            b.stmt("St1", "tmp[j][i]", &["A[j+1][i]"]);
            b.for_("k", "j+2", "N", |b| {
                b.stmt("Sred1", "tmp[j][i]", &["tmp[j][i]", "A[k][j]", "A[k][i]"]);
            });
        });
        b.for_("i", "j+1", "N", |b| {
            b.stmt("Ss1", "tmp[j][i]", &["tmp[j][i]", "tau[j]"]);
        });
        b.for_("i", "j+1", "N", |b| {
            b.stmt("Sr1", "A[j+1][i]", &["A[j+1][i]", "tmp[j][i]"]);
        });
        b.for_("i", "j+2", "N", |b| {
            b.for_("k", "j+1", "N", |b| {
                b.stmt("Supd1", "A[i][k]", &["A[i][k]", "A[i][j]", "tmp[j][k]"]);
            });
        });
        b.for_("i", "0", "N", |b| {
            b.stmt("St2", "tmp[j][i]", &["A[i][j+1]"]);
            b.for_("k", "j+2", "N", |b| {
                b.stmt("Sred2", "tmp[j][i]", &["tmp[j][i]", "A[i][k]", "A[k][j]"]);
            });
        });
        b.for_("i", "0", "N", |b| {
            b.stmt("Ss2", "tmp[j][i]", &["tmp[j][i]", "tau[j]"]);
        });
        b.for_("i", "0", "N", |b| {
            b.stmt("Sr2", "A[i][j+1]", &["A[i][j+1]", "tmp[j][i]"]);
        });
        b.for_("i", "0", "N", |b| {
            b.for_("k", "j+2", "N", |b| {
                b.stmt("Supd2", "A[i][k]", &["A[i][k]", "tmp[j][i]", "A[k][j]"]);
            });
        });
    });
    b.build()
}
