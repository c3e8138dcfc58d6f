use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use hourglass_core::expr::{to_f64, Binding, Rational};
use hourglass_core::harness::{self, Grid};
use hourglass_core::hourglass::{detect_all, split_temporal};
use hourglass_core::kernel::builtin_kernel;
use hourglass_core::pebble::{run, Policy};
use hourglass_core::schedules::{default_block, reference_schedule, tiled_schedule};

#[derive(Parser)]
#[command(name = "iolb-hourglass", version, about = "I/O lower bounds with the hourglass pattern, and a pebble-game simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Params {
    /// Kernel id (mgs, hh_a2v, hh_v2q, gehd2; gebd2 is catalog only)
    kernel: Option<String>,
    #[arg(long = "kernel", value_name = "ID")]
    kernel_flag: Option<String>,
    #[arg(short = 'M')]
    m: Option<i64>,
    #[arg(short = 'N')]
    n: Option<i64>,
    #[arg(short = 'S')]
    s: Option<i64>,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Params {
    fn kernel(&self) -> Result<String> {
        match (&self.kernel, &self.kernel_flag) {
            (Some(k), _) | (None, Some(k)) => Ok(k.clone()),
            (None, None) => bail!("a kernel id is required"),
        }
    }

    fn binding(&self) -> Binding {
        let mut b = Binding::new();
        for (name, v) in [("M", self.m), ("N", self.n), ("S", self.s)] {
            if let Some(v) = v {
                b.set(name, v);
            }
        }
        b
    }

    fn sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
            None => Box::new(io::stdout()),
        })
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Classical, hourglass and catalog bounds at a binding
    Bound {
        #[command(flatten)]
        p: Params,
        /// Print normalized symbolic expressions
        #[arg(long)]
        symbolic: bool,
    },
    /// Run the pebble game on a schedule
    Simulate {
        #[command(flatten)]
        p: Params,
        #[arg(long, default_value = "reference")]
        schedule: String,
        #[arg(long)]
        block: Option<i64>,
        #[arg(long, default_value = "belady")]
        policy: Policy,
    },
    /// Bounds and simulated loads over a parameter grid, as CSV
    Sweep {
        #[command(flatten)]
        p: Params,
        /// e.g. "M=16,24,32;N=M/2;S=2M+1,4M,8M"
        #[arg(long)]
        grid: String,
        #[arg(long, default_value = "belady")]
        policy: Policy,
    },
    /// Hourglass detection per statement
    Detect {
        #[command(flatten)]
        p: Params,
    },
    /// Check |E| <= K^2/W + 2K on random convex K-bounded sets
    VerifySampling {
        #[command(flatten)]
        p: Params,
        #[arg(short = 'K')]
        k: Option<usize>,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn fmt_rational(v: &Rational) -> String {
    if v.is_integer() {
        v.to_string()
    } else {
        format!("{v} (~{:.6})", to_f64(v))
    }
}

fn print_value(w: &mut dyn Write, label: &str, v: &serde_json::Value) -> Result<()> {
    if v.is_null() {
        writeln!(w, "{label:<22} not applicable")?;
        return Ok(());
    }
    let num: &str = v["value"]["numerator"].as_str().unwrap_or("?");
    let den: &str = v["value"]["denominator"].as_str().unwrap_or("1");
    let approx = v["value"]["approx"].as_f64().unwrap_or(f64::NAN);
    let exact = if den == "1" { num.to_string() } else { format!("{num}/{den}") };
    write!(w, "{label:<22} {exact} (~{approx:.6})")?;
    if let Some(st) = v["statement"].as_str() {
        write!(w, "  [{st}]")?;
    }
    if let Some(m) = v["split_at"].as_i64() {
        write!(w, "  split M={m}")?;
    }
    writeln!(w)?;
    if let Some(e) = v["expression"].as_str() {
        writeln!(w, "{:<22} {e}", "")?;
    }
    Ok(())
}

fn cmd_bound(p: &Params, symbolic: bool) -> Result<ExitCode> {
    let kernel = p.kernel()?;
    let b = p.binding();
    let report = harness::bound_report(&kernel, &b, symbolic)?;
    let mut w = p.sink()?;
    if p.json {
        writeln!(w, "{}", serde_json::to_string_pretty(&report)?)?;
        return Ok(ExitCode::SUCCESS);
    }
    writeln!(w, "{kernel} at {b}")?;
    if let Some(note) = report["note"].as_str() {
        writeln!(w, "note: {note}")?;
    }
    for (label, key) in [
        ("classical", "classical"),
        ("hourglass (general)", "hourglass_general"),
        ("hourglass (small S)", "hourglass_small_cache"),
        ("best", "best"),
    ] {
        if let Some(v) = report.get(key) {
            print_value(&mut *w, label, v)?;
        }
    }
    if let Some(c) = report.get("catalog") {
        for (label, key) in [("catalog old", "old"), ("catalog new", "new")] {
            let row = &c[key];
            match row.get("value") {
                Some(_) => print_value(&mut *w, label, row)?,
                None => writeln!(w, "{label:<22} {}", row["error"].as_str().unwrap_or("n/a"))?,
            }
            if let Some(d) = row["dominant_value"]["approx"].as_f64() {
                writeln!(w, "{:<22} dominant term ~{d:.6}", "")?;
            }
            if symbolic {
                writeln!(w, "{:<22} {} + {}", "", row["dominant"].as_str().unwrap_or(""), row["tail"].as_str().unwrap_or(""))?;
            }
        }
        if let Some(u) = c["upper"].as_str() {
            writeln!(w, "{:<22} {u}", "tiled upper bound")?;
        }
    }
    if symbolic {
        if let Some(all) = report["derived"].as_array() {
            writeln!(w, "derived bounds:")?;
            for d in all {
                writeln!(
                    w,
                    "  {} {} {}: {}",
                    d["statement"].as_str().unwrap_or(""),
                    d["regime"].as_str().unwrap_or(""),
                    d["variant"].as_str().unwrap_or(""),
                    d["expression"].as_str().unwrap_or("")
                )?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(p: &Params, schedule: &str, block: Option<i64>, policy: Policy) -> Result<ExitCode> {
    let kernel = p.kernel()?;
    let b = p.binding();
    let s = p.s.context("-S is required")?;
    if s < 1 {
        bail!("S must be positive");
    }
    let g = harness::cdag_for(&kernel, &b)?;
    let sched = match schedule {
        "reference" => reference_schedule(&g),
        "tiled" => {
            let blk = match block {
                Some(blk) => blk,
                None => default_block(p.m.context("-M is required for tiling")?, s)?,
            };
            tiled_schedule(&g, blk)?
        }
        other => bail!("unknown schedule `{other}` (expected reference or tiled)"),
    };
    let trace = run(&g, &sched, s as usize, policy)?;
    let set = harness::bound_set(&kernel)?;
    let best = set.best(&g.binding).map(|x| x.0);
    let ratio = best
        .as_ref()
        .filter(|v| **v > Rational::from_integer(0.into()))
        .map(|v| trace.loads as f64 / to_f64(v));
    let mut w = p.sink()?;
    if p.json {
        let mut j = serde_json::to_value(&trace)?;
        j["lower_bound"] = json!(best.as_ref().map(|v| v.to_string()));
        j["ratio"] = json!(ratio);
        j["operand_pinning"] = json!("operands of the current step are never evicted");
        writeln!(w, "{}", serde_json::to_string_pretty(&j)?)?;
    } else {
        writeln!(w, "{kernel} {} schedule={} policy={policy} S={s}", g.binding, trace.schedule)?;
        writeln!(w, "loads     {}", trace.loads)?;
        writeln!(w, "stores    {}", trace.stores)?;
        writeln!(w, "peak_red  {}", trace.peak_red)?;
        for (a, l) in &trace.loads_by_array {
            if *l > 0 {
                writeln!(w, "  {a:<8} {l}")?;
            }
        }
        match (&best, ratio) {
            (Some(v), Some(r)) => writeln!(w, "bound     {}  ratio {r:.4}", fmt_rational(v))?,
            (Some(v), None) => writeln!(w, "bound     {}", fmt_rational(v))?,
            (None, _) => writeln!(w, "bound     not applicable")?,
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(p: &Params, grid: &str, policy: Policy) -> Result<ExitCode> {
    let kernel = p.kernel()?;
    let bindings = Grid::parse(grid)?.bindings()?;
    let rows = harness::sweep(&kernel, &bindings, policy)?;
    let mut w = p.sink()?;
    if p.json {
        writeln!(w, "{}", serde_json::to_string_pretty(&rows)?)?;
    } else {
        harness::write_csv(&rows, &mut w)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_detect(p: &Params) -> Result<ExitCode> {
    let kernel = builtin_kernel(&p.kernel()?)?;
    let reports = detect_all(&kernel)?;
    let mut out = Vec::new();
    for r in &reports {
        let mut j = serde_json::to_value(r)?;
        if !r.large_width {
            if let Ok(split) = split_temporal(&kernel, r, "M") {
                j["split"] = json!({
                    "parameter": "M",
                    "first_width_min": split.first_width_min.to_string(),
                    "first_width_max": split.first_width_max.to_string(),
                });
            }
        }
        out.push(j);
    }
    let mut w = p.sink()?;
    if p.json {
        writeln!(w, "{}", serde_json::to_string_pretty(&out)?)?;
        return Ok(ExitCode::SUCCESS);
    }
    for j in &out {
        let list = |k: &str| {
            j[k].as_array()
                .map(|a| a.iter().filter_map(|x| x.as_str()).collect::<Vec<_>>().join(","))
                .unwrap_or_default()
        };
        write!(
            w,
            "{:<8} T{{{}}} I{{{}}} J{{{}}} width_min={} width_max={}",
            j["statement"].as_str().unwrap_or(""),
            list("temporal"),
            list("broadcast"),
            list("neutral"),
            j["width_min"].as_str().unwrap_or("?"),
            j["width_max"].as_str().unwrap_or("?")
        )?;
        if let Some(wd) = j["width"].as_str() {
            write!(w, " width={wd}")?;
        }
        if let Some(s) = j.get("split") {
            let f = |k: &str| s[k].as_str().unwrap_or("?").to_string();
            write!(w, " split at {}: first fragment width {} .. {}", f("parameter"), f("first_width_min"), f("first_width_max"))?;
        }
        writeln!(w)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify_sampling(p: &Params, k: Option<usize>, samples: usize, seed: u64) -> Result<ExitCode> {
    let kernel = p.kernel()?;
    let b = p.binding();
    let k = match k {
        Some(k) => k,
        None => 2 * p.m.context("-K or -M is required")? as usize,
    };
    let g = harness::cdag_for(&kernel, &b)?;
    if g.len() > 50_000 {
        bail!("CDAG has {} nodes; the oracle is limited to 50000", g.len());
    }
    let r = harness::verify_sampling(&kernel, &b, k, samples, seed)?;
    let mut w = p.sink()?;
    if p.json {
        let mut j = serde_json::to_value(&r)?;
        j["passed"] = json!(r.passed());
        writeln!(w, "{}", serde_json::to_string_pretty(&j)?)?;
    } else {
        writeln!(
            w,
            "{} {} K={} W={}: {} samples, {} violations, max |E|={} (ratio {:.4}) -> {}",
            r.kernel,
            r.binding,
            r.k,
            r.width,
            r.samples,
            r.violations,
            r.max_size,
            r.max_ratio,
            if r.passed() { "PASS" } else { "FAIL" }
        )?;
    }
    Ok(if r.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<std::io::Error>())
        .any(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Bound { p, symbolic } => cmd_bound(p, *symbolic),
        Cmd::Simulate { p, schedule, block, policy } => cmd_simulate(p, schedule, *block, *policy),
        Cmd::Sweep { p, grid, policy } => cmd_sweep(p, grid, *policy),
        Cmd::Detect { p } => cmd_detect(p),
        Cmd::VerifySampling { p, k, samples, seed } => cmd_verify_sampling(p, *k, *samples, *seed),
    };
    match res {
        Ok(code) => code,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
