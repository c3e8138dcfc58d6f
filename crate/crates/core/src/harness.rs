//! Sweeps, soundness/tightness checks, the sampling oracle and JSON
//! reports shared by the command line and the acceptance tests.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::bound::{catalog, derive, BoundError, BoundSet, Regime, CATALOG_KERNELS};
use crate::cdag::{instantiate, Cdag, CdagError, NodeId};
use crate::expr::{to_f64, Binding, BoundExpr, EvalError, ParseError, Rational};
use crate::hourglass::detect_all;
use crate::kernel::{builtin_kernel, AffineKernel, BUILTIN_KERNELS};
use crate::pebble::{run, Policy, PebbleTrace, SimError};
use crate::schedules::{default_block, reference_schedule, tiled_schedule, ScheduleError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Cdag(#[from] CdagError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("grid: {0}")]
    Grid(String),
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("kernel `{0}` has published bounds only, no loop nest")]
    CatalogOnly(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<ParseError> for HarnessError {
    fn from(e: ParseError) -> Self {
        HarnessError::Grid(e.to_string())
    }
}

pub fn has_cdag(kernel: &str) -> bool {
    BUILTIN_KERNELS.contains(&kernel)
}

pub fn is_known(kernel: &str) -> bool {
    has_cdag(kernel) || CATALOG_KERNELS.contains(&kernel)
}

/// Parameter grid such as `M=16,24,32;N=M/2;S=2M+1,4M,8M`. Later
/// parameters may refer to earlier ones; values are floored.
#[derive(Clone, Debug)]
pub struct Grid {
    params: Vec<(String, Vec<BoundExpr>)>,
}

fn implicit_products(src: &str) -> String {
    let mut out = String::new();
    let mut prev: Option<char> = None;
    for c in src.chars() {
        if let Some(p) = prev {
            if (p.is_ascii_digit() && (c.is_ascii_alphabetic() || c == '(')) || (p == ')' && c == '(') {
                out.push('*');
            }
        }
        out.push(c);
        if !c.is_whitespace() {
            prev = Some(c);
        }
    }
    out
}

impl Grid {
    pub fn parse(src: &str) -> Result<Self, HarnessError> {
        let mut params = Vec::new();
        for part in src.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, values) = part
                .split_once('=')
                .ok_or_else(|| HarnessError::Grid(format!("expected NAME=values in `{part}`")))?;
            let values = values
                .split(',')
                .map(|v| BoundExpr::parse(&implicit_products(v.trim())))
                .collect::<Result<Vec<_>, _>>()?;
            params.push((name.trim().to_string(), values));
        }
        if params.is_empty() {
            return Err(HarnessError::Grid("empty grid".into()));
        }
        Ok(Grid { params })
    }

    pub fn bindings(&self) -> Result<Vec<Binding>, HarnessError> {
        let mut acc = vec![Binding::new()];
        for (name, values) in &self.params {
            let mut next = Vec::new();
            for b in &acc {
                for v in values {
                    let x = v.evaluate(b)?.floor().to_integer();
                    let x: i64 = x.try_into().map_err(|_| HarnessError::Grid(format!("{name} overflows")))?;
                    next.push(b.with(name, x));
                }
            }
            acc = next;
        }
        Ok(acc)
    }
}

/// The acceptance grid: M in {8,16,24,32}, N in {M/2, M}, S in {2M+1, 4M, 8M}.
pub fn acceptance_grid() -> Vec<Binding> {
    Grid::parse("M=8,16,24,32;N=M/2,M;S=2M+1,4M,8M").unwrap().bindings().unwrap()
}

/// One sweep row; `error` collects per-row failures.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub m: i64,
    pub n: i64,
    pub s: i64,
    pub b: Option<i64>,
    #[serde(serialize_with = "ser_opt_rational")]
    pub classical_bound: Option<Rational>,
    #[serde(serialize_with = "ser_opt_rational")]
    pub hourglass_bound: Option<Rational>,
    pub loads_reference: Option<u64>,
    pub loads_tiled: Option<u64>,
    pub error: Option<String>,
}

fn ser_opt_rational<S: serde::Serializer>(v: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.serialize_str(&v.to_string()),
        None => s.serialize_none(),
    }
}

impl SweepRow {
    /// Tiled loads (reference when no tiling) over the hourglass bound.
    pub fn ratio(&self) -> Option<f64> {
        let loads = self.loads_tiled.or(self.loads_reference)? as f64;
        let h = to_f64(self.hourglass_bound.as_ref()?);
        (h > 0.0).then(|| loads / h)
    }
}

fn binding_of(kernel: &str, b: &Binding) -> Binding {
    // single-parameter kernels ignore M
    if kernel == "gehd2" {
        let mut out = Binding::new();
        for (k, v) in b.iter() {
            if k != "M" {
                out.set(k, *v);
            }
        }
        out
    } else {
        b.clone()
    }
}

pub fn sweep_row(kernel: &str, set: &BoundSet, b: &Binding, policy: Policy) -> SweepRow {
    let m = b.get("M").unwrap_or(0);
    let n = b.get("N").unwrap_or(0);
    let s = b.get("S").unwrap_or(0);
    let mut row = SweepRow {
        m,
        n,
        s,
        b: None,
        classical_bound: None,
        hourglass_bound: None,
        loads_reference: None,
        loads_tiled: None,
        error: None,
    };
    let kb = binding_of(kernel, b);
    row.classical_bound = set.best_classical(&kb).map(|x| x.0);
    row.hourglass_bound = set.best_hourglass(&kb).map(|x| x.0);
    let mut errors = Vec::new();
    if has_cdag(kernel) {
        match simulate_both(kernel, &kb, s as usize, policy) {
            Ok((r, t, blk)) => {
                row.loads_reference = Some(r.loads);
                row.loads_tiled = t.map(|t| t.loads);
                row.b = blk;
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
    }
    row
}

/// Reference run plus a tiled run when the kernel has tiling and S > 2M.
pub fn simulate_both(
    kernel: &str,
    b: &Binding,
    s: usize,
    policy: Policy,
) -> Result<(PebbleTrace, Option<PebbleTrace>, Option<i64>), HarnessError> {
    let g = cdag_for(kernel, b)?;
    let r = run(&g, &reference_schedule(&g), s, policy)?;
    let tiled = match (kernel, b.get("M")) {
        ("mgs" | "hh_a2v", Some(m)) => match default_block(m, s as i64) {
            Ok(blk) => {
                let blk = blk.min(b.get("N").unwrap_or(1)).max(1);
                match tiled_schedule(&g, blk) {
                    Ok(sch) => Some((run(&g, &sch, s, policy)?, blk)),
                    Err(ScheduleError::Shape) => None,
                    Err(e) => return Err(e.into()),
                }
            }
            Err(_) => None,
        },
        _ => None,
    };
    let blk = tiled.as_ref().map(|t| t.1);
    Ok((r, tiled.map(|t| t.0), blk))
}

fn kernel_model(kernel: &str) -> Result<AffineKernel, HarnessError> {
    builtin_kernel(kernel).map_err(|_| {
        if is_known(kernel) {
            HarnessError::CatalogOnly(kernel.to_string())
        } else {
            HarnessError::UnknownKernel(kernel.to_string())
        }
    })
}

pub fn cdag_for(kernel: &str, b: &Binding) -> Result<Cdag, HarnessError> {
    let k = kernel_model(kernel)?;
    Ok(instantiate(&k, &binding_of(kernel, b))?)
}

pub fn bound_set(kernel: &str) -> Result<BoundSet, HarnessError> {
    let k = kernel_model(kernel)?;
    Ok(derive(&k)?)
}

/// Rows in grid order, computed in parallel.
pub fn sweep(kernel: &str, grid: &[Binding], policy: Policy) -> Result<Vec<SweepRow>, HarnessError> {
    if !is_known(kernel) {
        return Err(HarnessError::UnknownKernel(kernel.to_string()));
    }
    let set = if has_cdag(kernel) { Some(bound_set(kernel)?) } else { None };
    Ok(grid
        .par_iter()
        .map(|b| match &set {
            Some(set) => sweep_row(kernel, set, b, policy),
            None => catalog_row(kernel, b),
        })
        .collect())
}

fn catalog_row(kernel: &str, b: &Binding) -> SweepRow {
    let entry = catalog(kernel).expect("known catalog kernel");
    let mut row = SweepRow {
        m: b.get("M").unwrap_or(0),
        n: b.get("N").unwrap_or(0),
        s: b.get("S").unwrap_or(0),
        b: None,
        classical_bound: None,
        hourglass_bound: None,
        loads_reference: None,
        loads_tiled: None,
        error: Some("catalog only: no CDAG".into()),
    };
    row.classical_bound = entry.evaluate(&entry.old, b).ok();
    row.hourglass_bound = entry.evaluate(&entry.new, b).ok();
    row
}

fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = 5 - x.abs().log10().floor() as i32;
    if digits >= 0 {
        format!("{:.*}", digits as usize, x)
    } else {
        format!("{:.5e}", x)
    }
}

pub const CSV_HEADER: [&str; 14] = [
    "M",
    "N",
    "S",
    "B",
    "classical_bound",
    "hourglass_bound",
    "loads_reference",
    "loads_tiled",
    "ratio",
    "classical_num",
    "classical_den",
    "hourglass_num",
    "hourglass_den",
    "error",
];

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let opt = |x: Option<String>| x.unwrap_or_default();
    for r in rows {
        let dec = |v: &Option<Rational>| opt(v.as_ref().map(|v| sig6(to_f64(v))));
        let num = |v: &Option<Rational>| opt(v.as_ref().map(|v| v.numer().to_string()));
        let den = |v: &Option<Rational>| opt(v.as_ref().map(|v| v.denom().to_string()));
        w.write_record([
            r.m.to_string(),
            r.n.to_string(),
            r.s.to_string(),
            opt(r.b.map(|b| b.to_string())),
            dec(&r.classical_bound),
            dec(&r.hourglass_bound),
            opt(r.loads_reference.map(|l| l.to_string())),
            opt(r.loads_tiled.map(|l| l.to_string())),
            opt(r.ratio().map(sig6)),
            num(&r.classical_bound),
            den(&r.classical_bound),
            num(&r.hourglass_bound),
            den(&r.hourglass_bound),
            opt(r.error.clone()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A run whose loads fell below a sound lower bound.
#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub kernel: String,
    pub binding: String,
    pub schedule: String,
    pub policy: Policy,
    pub loads: u64,
    pub bound: String,
}

/// Every schedule and policy against the best sound bound at each binding.
pub fn soundness(kernel: &str, grid: &[Binding]) -> Result<(usize, Vec<Violation>), HarnessError> {
    let set = bound_set(kernel)?;
    let results: Vec<Result<(usize, Vec<Violation>), HarnessError>> = grid
        .par_iter()
        .map(|b| {
            let kb = binding_of(kernel, b);
            let bound = set.best(&kb).map(|x| x.0);
            let s = b.get("S").unwrap_or(0) as usize;
            let mut checked = 0;
            let mut bad = Vec::new();
            for policy in [Policy::Belady, Policy::Lru] {
                let (r, t, _) = simulate_both(kernel, &kb, s, policy)?;
                for trace in std::iter::once(r).chain(t) {
                    checked += 1;
                    if let Some(v) = &bound {
                        if Rational::from_integer(trace.loads.into()) < *v {
                            bad.push(Violation {
                                kernel: kernel.to_string(),
                                binding: kb.to_string(),
                                schedule: trace.schedule.clone(),
                                policy,
                                loads: trace.loads,
                                bound: v.to_string(),
                            });
                        }
                    }
                }
            }
            Ok((checked, bad))
        })
        .collect();
    let mut total = 0;
    let mut all = Vec::new();
    for r in results {
        let (c, v) = r?;
        total += c;
        all.extend(v);
    }
    Ok((total, all))
}

/// Outcome of the random convex-set oracle.
#[derive(Clone, Debug, Serialize)]
pub struct SamplingReport {
    pub kernel: String,
    pub binding: String,
    pub k: usize,
    pub width: i64,
    pub samples: usize,
    pub violations: usize,
    pub max_size: usize,
    /// max |E| / (K²/W + 2K)
    pub max_ratio: f64,
}

impl SamplingReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Grows a random convex set of computation nodes whose inset stays
/// within `k`, one neighbouring node at a time.
pub fn sample_convex_set(g: &Cdag, k: usize, rng: &mut impl Rng) -> BTreeSet<NodeId> {
    let compute: Vec<NodeId> = g.compute_nodes().collect();
    let mut e = BTreeSet::new();
    let start = compute[rng.gen_range(0..compute.len())];
    e.insert(start);
    if g.inset(&e).len() > k {
        return e;
    }
    loop {
        let mut frontier: Vec<NodeId> = e
            .iter()
            .flat_map(|&n| g.preds(n).iter().chain(g.succs(n)).copied())
            .filter(|n| !g.is_input(*n) && !e.contains(n))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        frontier.shuffle(rng);
        let mut grown = false;
        for c in frontier {
            e.insert(c);
            if g.inset(&e).len() <= k && g.is_convex(&e) {
                grown = true;
                break;
            }
            e.remove(&c);
        }
        if !grown {
            return e;
        }
    }
}

/// Width used by the oracle: the smallest detected broadcast width at the
/// binding among the kernel's hourglass statements.
pub fn oracle_width(kernel: &str, b: &Binding) -> Result<Option<i64>, HarnessError> {
    let k = kernel_model(kernel)?;
    let reports = detect_all(&k).map_err(BoundError::from)?;
    let mut best: Option<i64> = None;
    for r in reports.iter().filter(|r| r.large_width) {
        let w = r.width_min_expr().evaluate(b)?.floor().to_integer();
        let w: i64 = w.try_into().unwrap_or(i64::MAX);
        best = Some(best.map_or(w, |x: i64| x.min(w)));
    }
    Ok(best)
}

pub fn verify_sampling(
    kernel: &str,
    b: &Binding,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<SamplingReport, HarnessError> {
    let g = cdag_for(kernel, b)?;
    let w = oracle_width(kernel, b)?.unwrap_or(1).max(1);
    let bound = Rational::new((k * k).into(), w.into()) + Rational::from_integer((2 * k).into());
    let sizes: Vec<usize> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64));
            sample_convex_set(&g, k, &mut rng).len()
        })
        .collect();
    let violations = sizes
        .iter()
        .filter(|&&s| Rational::from_integer((s as i64).into()) > bound)
        .count();
    let max_size = sizes.iter().copied().max().unwrap_or(0);
    Ok(SamplingReport {
        kernel: kernel.to_string(),
        binding: b.to_string(),
        k,
        width: w,
        samples,
        violations,
        max_size,
        max_ratio: max_size as f64 / to_f64(&bound),
    })
}

fn rational_json(v: &Rational) -> serde_json::Value {
    json!({"numerator": v.numer().to_string(), "denominator": v.denom().to_string(), "approx": to_f64(v)})
}

/// Everything the `bound` command prints, as JSON.
pub fn bound_report(kernel: &str, b: &Binding, symbolic: bool) -> Result<serde_json::Value, HarnessError> {
    if !is_known(kernel) {
        return Err(HarnessError::UnknownKernel(kernel.to_string()));
    }
    let mut out = json!({"kernel": kernel, "binding": b.to_string()});
    if let Ok(entry) = catalog(kernel) {
        let row = |r: &crate::bound::CatalogRow| {
            let mut v = json!({"dominant": r.dominant.to_string(), "tail": r.tail.to_string()});
            match entry.evaluate(r, b) {
                Ok(x) => v["value"] = rational_json(&x),
                Err(e) => v["error"] = json!(e.to_string()),
            }
            let dom = crate::bound::CatalogRow { dominant: r.dominant.clone(), tail: BoundExpr::int(0) };
            if let Ok(x) = entry.evaluate(&dom, b) {
                v["dominant_value"] = rational_json(&x);
            }
            v
        };
        out["catalog"] = json!({"old": row(&entry.old), "new": row(&entry.new)});
        if let Some(u) = &entry.upper {
            out["catalog"]["upper"] = json!(u.to_string());
        }
    }
    if !has_cdag(kernel) {
        out["note"] = json!("catalog only: no loop nest is modelled for this kernel");
        return Ok(out);
    }
    let set = bound_set(kernel)?;
    let kb = binding_of(kernel, b);
    let pick = |x: Option<(Rational, &crate::bound::DerivedBound)>| match x {
        Some((v, d)) => {
            let mut j = json!({"statement": d.statement, "value": rational_json(&v)});
            if symbolic {
                j["expression"] = json!(d.q_bound.normalized_string());
            }
            if let Ok(Some(m)) = d.best_split(&kb) {
                j["split_at"] = json!(m);
            }
            j
        }
        None => json!(null),
    };
    out["classical"] = pick(set.best_classical(&kb));
    out["hourglass_general"] = pick(set.best_in(&kb, Regime::General));
    out["hourglass_small_cache"] = pick(set.best_in(&kb, Regime::SmallCache));
    out["best"] = pick(set.best(&kb));
    if symbolic {
        out["derived"] = json!(set.bounds.iter().map(|d| d.to_json(&kb)).collect::<Vec<_>>());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expansion() {
        let g = Grid::parse("M=16,24,32;N=M/2;S=2M+1,4M,8M").unwrap().bindings().unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0].to_string(), "M=16,N=8,S=33");
        assert_eq!(g[8].to_string(), "M=32,N=16,S=256");
        assert_eq!(acceptance_grid().len(), 24);
        assert!(Grid::parse("M").is_err());
        assert!(Grid::parse("").is_err());
    }

    #[test]
    fn significant_digits() {
        assert_eq!(sig6(3968.0), "3968.00");
        assert_eq!(sig6(1402.8998538), "1402.90");
        assert_eq!(sig6(0.123456789), "0.123457");
        assert_eq!(sig6(12345678.0), "1.23457e7");
    }

    #[test]
    fn csv_round_trip() {
        let set = bound_set("mgs").unwrap();
        let b = Binding::from_pairs(&[("M", 8), ("N", 4), ("S", 40)]);
        let row = sweep_row("mgs", &set, &b, Policy::Belady);
        assert!(row.error.is_none(), "{:?}", row.error);
        let mut buf = Vec::new();
        write_csv(&[row.clone()], &mut buf).unwrap();
        let mut rd = csv::Reader::from_reader(buf.as_slice());
        let rec = rd.records().next().unwrap().unwrap();
        let h = row.hourglass_bound.unwrap();
        let back = Rational::new(rec[11].parse().unwrap(), rec[12].parse().unwrap());
        assert_eq!(back, h);
        assert_eq!(rec[3].parse::<i64>().unwrap(), 4);
    }

    #[test]
    fn sampled_sets_are_convex_and_bounded() {
        let g = cdag_for("mgs", &Binding::from_pairs(&[("M", 4), ("N", 4)])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let e = sample_convex_set(&g, 8, &mut rng);
            assert!(g.is_convex(&e));
            assert!(e.len() == 1 || g.inset(&e).len() <= 8);
        }
    }

    #[test]
    fn catalog_only_report() {
        let r = bound_report("gebd2", &Binding::from_pairs(&[("M", 64), ("N", 32), ("S", 64)]), false).unwrap();
        assert!(r["note"].is_string());
        assert!(r.get("classical").is_none());
        assert!(bound_report("lu", &Binding::new(), false).is_err());
    }
}
