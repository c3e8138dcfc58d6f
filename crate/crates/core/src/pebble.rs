//! Red-white pebble game over a fixed schedule.
//!
//! Each step pins its operands (loading any that are not red), then places
//! the result; eviction happens only when the cache is full and never
//! touches the pinned operands of the current step.

use std::cmp::Reverse;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::cdag::{Cdag, NodeId};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("cache of {s} pebbles cannot hold the {need} operands and result of step {step}")]
    CacheTooSmall { step: usize, need: usize, s: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Lru,
    Belady,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Lru => "lru",
            Policy::Belady => "belady",
        })
    }
}

impl FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lru" => Ok(Policy::Lru),
            "belady" => Ok(Policy::Belady),
            _ => Err(format!("unknown policy `{s}` (expected lru or belady)")),
        }
    }
}

/// An order of the computation nodes of a CDAG.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub id: String,
    pub order: Vec<NodeId>,
}

impl Schedule {
    pub fn new(id: &str, order: Vec<NodeId>) -> Self {
        Schedule { id: id.to_string(), order }
    }

    /// Every computation node exactly once, after its computed predecessors.
    pub fn validate(&self, g: &Cdag) -> Result<(), SimError> {
        let mut done = vec![false; g.len()];
        for (step, &n) in self.order.iter().enumerate() {
            if n >= g.len() || g.is_input(n) {
                return Err(SimError::InvalidSchedule(format!("step {step}: node {n} is not a computation")));
            }
            if done[n] {
                return Err(SimError::InvalidSchedule(format!("node {} scheduled twice", g.name(n))));
            }
            if let Some(&p) = g.preds(n).iter().find(|&&p| !g.is_input(p) && !done[p]) {
                return Err(SimError::InvalidSchedule(format!(
                    "{} scheduled before its predecessor {}",
                    g.name(n),
                    g.name(p)
                )));
            }
            done[n] = true;
        }
        if self.order.len() != g.num_compute() {
            return Err(SimError::InvalidSchedule(format!(
                "{} of {} computation nodes scheduled",
                self.order.len(),
                g.num_compute()
            )));
        }
        Ok(())
    }

    /// One node id per line.
    pub fn dump(&self) -> String {
        self.order.iter().map(|n| format!("{n}\n")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PebbleTrace {
    pub kernel: String,
    pub binding: String,
    pub schedule: String,
    pub policy: Policy,
    #[serde(rename = "S")]
    pub s: usize,
    pub loads: u64,
    pub stores: u64,
    pub peak_red: usize,
    /// Loads per array, in CDAG array order.
    pub loads_by_array: Vec<(String, u64)>,
}

impl PebbleTrace {
    pub fn loads_of(&self, array: &str) -> u64 {
        self.loads_by_array.iter().find(|(a, _)| a == array).map_or(0, |(_, l)| *l)
    }

    /// Loads excluding the given arrays.
    pub fn loads_excluding(&self, arrays: &[&str]) -> u64 {
        self.loads_by_array
            .iter()
            .filter(|(a, _)| !arrays.contains(&a.as_str()))
            .map(|(_, l)| l)
            .sum()
    }
}

const NEVER: u64 = u64::MAX;

struct Uses {
    offsets: Vec<usize>,
    steps: Vec<u64>,
    cursor: Vec<usize>,
}

impl Uses {
    fn new(g: &Cdag, order: &[NodeId]) -> Self {
        let mut count = vec![0usize; g.len() + 1];
        for &n in order {
            for &p in g.preds(n) {
                count[p + 1] += 1;
            }
        }
        for i in 1..count.len() {
            count[i] += count[i - 1];
        }
        let offsets = count.clone();
        let mut fill = count;
        let mut steps = vec![0u64; *offsets.last().unwrap()];
        for (t, &n) in order.iter().enumerate() {
            for &p in g.preds(n) {
                steps[fill[p]] = t as u64;
                fill[p] += 1;
            }
        }
        let cursor = offsets[..g.len()].to_vec();
        Uses { offsets, steps, cursor }
    }

    /// First use strictly after `t`, advancing past consumed ones.
    fn next_after(&mut self, n: NodeId, t: u64) -> u64 {
        let end = self.offsets[n + 1];
        let c = &mut self.cursor[n];
        while *c < end && self.steps[*c] <= t {
            *c += 1;
        }
        if *c < end { self.steps[*c] } else { NEVER }
    }
}

struct Cache {
    policy: Policy,
    red: Vec<bool>,
    key: Vec<u64>,
    // (key, Reverse(id)): belady evicts the last entry, lru the first
    order: BTreeSet<(u64, Reverse<NodeId>)>,
}

impl Cache {
    fn len(&self) -> usize {
        self.order.len()
    }

    fn set(&mut self, n: NodeId, key: u64) {
        if self.red[n] {
            self.order.remove(&(self.key[n], Reverse(n)));
        }
        self.red[n] = true;
        self.key[n] = key;
        self.order.insert((key, Reverse(n)));
    }

    fn victim(&self, pinned: &[NodeId]) -> Option<NodeId> {
        let ok = |(_, Reverse(n)): &&(u64, Reverse<NodeId>)| !pinned.contains(n);
        match self.policy {
            Policy::Belady => self.order.iter().rev().find(ok),
            Policy::Lru => self.order.iter().find(ok),
        }
        .map(|(_, Reverse(n))| *n)
    }

    fn evict(&mut self, n: NodeId) {
        self.order.remove(&(self.key[n], Reverse(n)));
        self.red[n] = false;
    }
}

/// Simulates `schedule` with `s` red pebbles. `per_node`, when given,
/// receives the number of loads of every node.
fn simulate(
    g: &Cdag,
    schedule: &Schedule,
    s: usize,
    policy: Policy,
    mut per_node: Option<&mut Vec<u32>>,
) -> Result<PebbleTrace, SimError> {
    schedule.validate(g)?;
    let mut uses = Uses::new(g, &schedule.order);
    let mut cache = Cache {
        policy,
        red: vec![false; g.len()],
        key: vec![0; g.len()],
        order: BTreeSet::new(),
    };
    let mut stored = vec![false; g.len()];
    let mut by_array = vec![0u64; g.arrays().len()];
    let (mut loads, mut stores, mut peak) = (0u64, 0u64, 0usize);
    let mut clock = 0u64;

    let mut make_room = |cache: &mut Cache, pinned: &[NodeId], uses: &mut Uses, t: u64| -> bool {
        if cache.len() < s {
            return true;
        }
        let Some(v) = cache.victim(pinned) else { return false };
        cache.evict(v);
        let live = uses.next_after(v, t) != NEVER || g.is_output(v);
        if !g.is_input(v) && live && !stored[v] {
            stored[v] = true;
            stores += 1;
        }
        true
    };

    for (step, &n) in schedule.order.iter().enumerate() {
        let t = step as u64;
        let preds = g.preds(n);
        if preds.len() + 1 > s {
            return Err(SimError::CacheTooSmall { step, need: preds.len() + 1, s });
        }
        for &p in preds {
            if !cache.red[p] {
                loads += 1;
                by_array[g.array_of(p)] += 1;
                if let Some(c) = per_node.as_deref_mut() {
                    c[p] += 1;
                }
                if !make_room(&mut cache, preds, &mut uses, t) {
                    return Err(SimError::CacheTooSmall { step, need: preds.len() + 1, s });
                }
                cache.set(p, 0);
            }
        }
        for &p in preds {
            clock += 1;
            let key = match policy {
                Policy::Belady => uses.next_after(p, t),
                Policy::Lru => clock,
            };
            cache.set(p, key);
        }
        if !make_room(&mut cache, preds, &mut uses, t) {
            return Err(SimError::CacheTooSmall { step, need: preds.len() + 1, s });
        }
        clock += 1;
        let key = match policy {
            Policy::Belady => uses.next_after(n, t),
            Policy::Lru => clock,
        };
        cache.set(n, key);
        peak = peak.max(cache.len());
        debug_assert!(cache.len() <= s);
    }
    Ok(PebbleTrace {
        kernel: g.kernel.clone(),
        binding: g.binding.to_string(),
        schedule: schedule.id.clone(),
        policy,
        s,
        loads,
        stores,
        peak_red: peak,
        loads_by_array: g.arrays().iter().cloned().zip(by_array).collect(),
    })
}

pub fn run(g: &Cdag, schedule: &Schedule, s: usize, policy: Policy) -> Result<PebbleTrace, SimError> {
    simulate(g, schedule, s, policy, None)
}

/// As `run`, also returning the number of loads of each node.
pub fn run_instrumented(
    g: &Cdag,
    schedule: &Schedule,
    s: usize,
    policy: Policy,
) -> Result<(PebbleTrace, Vec<u32>), SimError> {
    let mut counts = vec![0u32; g.len()];
    let trace = simulate(g, schedule, s, policy, Some(&mut counts))?;
    Ok((trace, counts))
}

/// Fewest loads achievable for this fixed order without recomputation:
/// furthest-next-use eviction is optimal for a fixed reference string.
pub fn min_loads_for_schedule(g: &Cdag, schedule: &Schedule, s: usize) -> Result<u64, SimError> {
    Ok(run(g, schedule, s, Policy::Belady)?.loads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdag::instantiate;
    use crate::expr::Binding;
    use crate::kernel::{builtin_kernel, KernelBuilder};

    fn program_order(g: &Cdag) -> Schedule {
        Schedule::new("reference", g.compute_nodes().collect())
    }

    fn chain(n: usize) -> Cdag {
        let mut b = KernelBuilder::new("chain", &["N"], &["x"]);
        b.for_("t", "1", "N", |b| {
            b.stmt("S", "x[t]", &["x[t-1]"]);
        });
        instantiate(&b.build(), &Binding::from_pairs(&[("N", n as i64)])).unwrap()
    }

    #[test]
    fn chain_loads_its_input_once() {
        let g = chain(8);
        for p in [Policy::Lru, Policy::Belady] {
            let t = run(&g, &program_order(&g), 2, p).unwrap();
            assert_eq!(t.loads, 1);
            assert!(t.peak_red <= 2);
        }
        assert_eq!(min_loads_for_schedule(&g, &program_order(&g), 2).unwrap(), 1);
    }

    #[test]
    fn whole_cdag_fits() {
        let g = instantiate(&builtin_kernel("mgs").unwrap(), &Binding::from_pairs(&[("M", 2), ("N", 2)])).unwrap();
        assert_eq!(g.num_compute(), 17);
        let t = run(&g, &program_order(&g), 21, Policy::Belady).unwrap();
        assert_eq!(t.loads, 4);
        assert_eq!(t.loads, g.num_inputs() as u64);
        assert_eq!(t.stores, 0);
    }

    #[test]
    fn errors() {
        let g = instantiate(&builtin_kernel("mgs").unwrap(), &Binding::from_pairs(&[("M", 3), ("N", 3)])).unwrap();
        let sched = program_order(&g);
        assert!(matches!(run(&g, &sched, 3, Policy::Lru), Err(SimError::CacheTooSmall { .. })));
        let mut bad = sched.clone();
        bad.order.swap(0, 5);
        assert!(matches!(run(&g, &bad, 20, Policy::Lru), Err(SimError::InvalidSchedule(_))));
        let short = Schedule::new("short", sched.order[..4].to_vec());
        assert!(short.validate(&g).is_err());
        assert_eq!(sched.dump().lines().count(), g.num_compute());
    }

    #[test]
    fn belady_beats_lru_on_reference() {
        let g = instantiate(&builtin_kernel("mgs").unwrap(), &Binding::from_pairs(&[("M", 6), ("N", 5)])).unwrap();
        let sched = program_order(&g);
        for s in [4, 8, 13, 20] {
            let b = run(&g, &sched, s, Policy::Belady).unwrap();
            let l = run(&g, &sched, s, Policy::Lru).unwrap();
            assert!(b.loads <= l.loads, "S={s}: {} > {}", b.loads, l.loads);
            assert!(b.loads >= g.num_inputs() as u64);
            assert_eq!(b.loads, b.loads_by_array.iter().map(|x| x.1).sum::<u64>());
        }
    }
}
