//! Program-order and left-looking tiled schedules.

use thiserror::Error;

use crate::cdag::{Cdag, NodeId};
use crate::pebble::Schedule;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("block size {b} outside 1..={n}")]
    BlockOutOfRange { b: i64, n: i64 },
    #[error("tiling needs S > 2M (S={s}, M={m})")]
    TilingNotApplicable { s: i64, m: i64 },
    #[error("no tiled schedule for kernel `{0}`")]
    NoTiling(String),
    #[error("tiled A2V needs M >= N")]
    Shape,
    #[error("missing parameter {0}")]
    Unbound(&'static str),
    #[error("instance {0} not in the CDAG")]
    Missing(String),
}

/// The loop nest's own sequential order (CDAG construction order).
pub fn reference_schedule(g: &Cdag) -> Schedule {
    Schedule::new("reference", g.compute_nodes().collect())
}

/// ⌊S/M⌋ - 1: the block plus one extra column fit in S (with equality
/// allowed when M divides S).
pub fn default_block(m: i64, s: i64) -> Result<i64, ScheduleError> {
    if s <= 2 * m {
        return Err(ScheduleError::TilingNotApplicable { s, m });
    }
    Ok(s / m - 1)
}

pub fn tiled_schedule(g: &Cdag, b: i64) -> Result<Schedule, ScheduleError> {
    match g.kernel.as_str() {
        "mgs" => tiled_mgs_schedule(g, b),
        "hh_a2v" => tiled_a2v_schedule(g, b),
        other => Err(ScheduleError::NoTiling(other.to_string())),
    }
}

struct Emit<'a> {
    g: &'a Cdag,
    order: Vec<NodeId>,
}

impl Emit<'_> {
    fn push(&mut self, label: &str, iter: &[i64]) -> Result<(), ScheduleError> {
        let n = self
            .g
            .node_of(label, iter)
            .ok_or_else(|| ScheduleError::Missing(format!("{label}{iter:?}")))?;
        self.order.push(n);
        Ok(())
    }
}

fn dims(g: &Cdag, b: i64) -> Result<(i64, i64), ScheduleError> {
    let m = g.binding.get("M").ok_or(ScheduleError::Unbound("M"))?;
    let n = g.binding.get("N").ok_or(ScheduleError::Unbound("N"))?;
    if b < 1 || b > n.max(1) {
        return Err(ScheduleError::BlockOutOfRange { b, n });
    }
    Ok((m, n))
}

/// Column blocks of width `b`; each block is first projected against every
/// earlier column one column at a time, then factored left-looking.
pub fn tiled_mgs_schedule(g: &Cdag, b: i64) -> Result<Schedule, ScheduleError> {
    if g.kernel != "mgs" {
        return Err(ScheduleError::NoTiling(g.kernel.clone()));
    }
    let (m, n) = dims(g, b)?;
    let mut e = Emit { g, order: Vec::with_capacity(g.num_compute()) };
    let project = |e: &mut Emit, k: i64, j: i64| -> Result<(), ScheduleError> {
        e.push("SR0", &[k, j])?;
        for i in 0..m {
            e.push("SR", &[k, j, i])?;
        }
        for i in 0..m {
            e.push("SU", &[k, j, i])?;
        }
        Ok(())
    };
    for j0 in (0..n).step_by(b as usize) {
        let hi = (j0 + b).min(n);
        for k in 0..j0 {
            for j in j0..hi {
                project(&mut e, k, j)?;
            }
        }
        for j in j0..hi {
            for k in j0..j {
                project(&mut e, k, j)?;
            }
            e.push("Snrm0", &[j])?;
            for i in 0..m {
                e.push("Snrm", &[j, i])?;
            }
            e.push("Ssqrt", &[j])?;
            for i in 0..m {
                e.push("Sq", &[j, i])?;
            }
        }
    }
    Ok(Schedule::new(&format!("tiled-B{b}"), e.order))
}

/// Blocks of `b` target columns; each reflector to the left is applied to
/// the whole block before the block's own columns are factored.
pub fn tiled_a2v_schedule(g: &Cdag, b: i64) -> Result<Schedule, ScheduleError> {
    if g.kernel != "hh_a2v" {
        return Err(ScheduleError::NoTiling(g.kernel.clone()));
    }
    let (m, n) = dims(g, b)?;
    if m < n {
        return Err(ScheduleError::Shape);
    }
    let mut e = Emit { g, order: Vec::with_capacity(g.num_compute()) };
    let reflect = |e: &mut Emit, k: i64, j: i64| -> Result<(), ScheduleError> {
        e.push("Sw0", &[k, j])?;
        for i in k + 1..m {
            e.push("SR", &[k, j, i])?;
        }
        e.push("Sscale", &[k, j])?;
        e.push("Stop", &[k, j])?;
        for i in k + 1..m {
            e.push("SU", &[k, j, i])?;
        }
        Ok(())
    };
    for j0 in (0..n).step_by(b as usize) {
        let hi = (j0 + b).min(n);
        for k in 0..j0 {
            for j in j0..hi {
                reflect(&mut e, k, j)?;
            }
        }
        for j in j0..hi {
            for k in j0..j {
                reflect(&mut e, k, j)?;
            }
            e.push("Sn0", &[j])?;
            for i in j + 1..m {
                e.push("Sn", &[j, i])?;
            }
            for label in ["Snorm", "Sdiag", "Stau"] {
                e.push(label, &[j])?;
            }
            for i in j + 1..m {
                e.push("Sv", &[j, i])?;
            }
            e.push("Sdiag2", &[j])?;
        }
    }
    Ok(Schedule::new(&format!("tiled-B{b}"), e.order))
}
