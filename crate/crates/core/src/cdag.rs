//! Concrete computational DAGs.
//!
//! Node ids follow sequential order: every INPUT node first (in order of
//! first read), then statement instances in execution order. Edges always go
//! from a smaller id to a larger one.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::expr::Binding;
use crate::kernel::{AffineKernel, KernelError};

pub type NodeId = usize;

pub const DEFAULT_NODE_CEILING: usize = 10_000_000;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CdagError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("node count exceeds ceiling {0}")]
    TooLarge(usize),
    #[error("dependence cycle through node {0}")]
    Cyclic(NodeId),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Input { array: usize, coords: Vec<i64> },
    Compute { stmt: usize, iter: Vec<i64> },
}

#[derive(Clone, Debug)]
pub struct Cdag {
    pub kernel: String,
    pub binding: Binding,
    labels: Vec<String>,
    arrays: Vec<String>,
    nodes: Vec<NodeKind>,
    node_array: Vec<usize>,
    preds: Vec<Vec<NodeId>>,
    succs: Vec<Vec<NodeId>>,
    num_inputs: usize,
    outputs: Vec<bool>,
    index: HashMap<(usize, Vec<i64>), NodeId>,
}

enum Src {
    Input(usize),
    Compute(usize),
}

pub fn instantiate(kernel: &AffineKernel, binding: &Binding) -> Result<Cdag, CdagError> {
    instantiate_with_ceiling(kernel, binding, DEFAULT_NODE_CEILING)
}

pub fn instantiate_with_ceiling(
    kernel: &AffineKernel,
    binding: &Binding,
    ceiling: usize,
) -> Result<Cdag, CdagError> {
    let mut arrays: Vec<String> = Vec::new();
    let array_id = |name: &str, arrays: &mut Vec<String>| match arrays.iter().position(|a| a == name) {
        Some(p) => p,
        None => {
            arrays.push(name.to_string());
            arrays.len() - 1
        }
    };
    // per statement: written array id, read array ids
    let mut stmt_arrays = Vec::new();
    for st in &kernel.statements {
        let w = array_id(&st.write.array, &mut arrays);
        let r: Vec<usize> = st.reads.iter().map(|a| array_id(&a.array, &mut arrays)).collect();
        stmt_arrays.push((w, r));
    }

    let mut compute: Vec<(usize, Vec<i64>)> = Vec::new();
    let mut raw_preds: Vec<Vec<Src>> = Vec::new();
    let mut inputs: Vec<(usize, Vec<i64>)> = Vec::new();
    let mut input_of: HashMap<(usize, Vec<i64>), usize> = HashMap::new();
    let mut last_writer: HashMap<(usize, Vec<i64>), usize> = HashMap::new();
    let mut failure: Option<CdagError> = None;

    kernel.for_each_instance(binding, |s, iter| {
        if failure.is_some() {
            return;
        }
        if compute.len() + inputs.len() >= ceiling {
            failure = Some(CdagError::TooLarge(ceiling));
            return;
        }
        let st = &kernel.statements[s];
        let env = |name: &str| {
            st.domain
                .position(name)
                .map(|p| iter[p])
                .or_else(|| binding.get(name))
        };
        let mut preds = Vec::with_capacity(st.reads.len());
        for (acc, &arr) in st.reads.iter().zip(&stmt_arrays[s].1) {
            let coords: Result<Vec<i64>, _> = acc.subscripts.iter().map(|e| e.eval(env)).collect();
            let coords = match coords {
                Ok(c) => c,
                Err(e) => {
                    failure = Some(e.into());
                    return;
                }
            };
            let key = (arr, coords);
            let src = match last_writer.get(&key) {
                Some(&w) => Src::Compute(w),
                None => {
                    let next = inputs.len();
                    let id = *input_of.entry(key.clone()).or_insert_with(|| {
                        inputs.push(key.clone());
                        next
                    });
                    Src::Input(id)
                }
            };
            preds.push(src);
        }
        let coords: Result<Vec<i64>, _> = st.write.subscripts.iter().map(|e| e.eval(env)).collect();
        match coords {
            Ok(c) => {
                last_writer.insert((stmt_arrays[s].0, c), compute.len());
            }
            Err(e) => {
                failure = Some(e.into());
                return;
            }
        }
        compute.push((s, iter.to_vec()));
        raw_preds.push(preds);
    })?;
    if let Some(f) = failure {
        return Err(f);
    }

    let ni = inputs.len();
    let total = ni + compute.len();
    let mut nodes = Vec::with_capacity(total);
    let mut node_array = Vec::with_capacity(total);
    for (arr, coords) in inputs {
        node_array.push(arr);
        nodes.push(NodeKind::Input { array: arr, coords });
    }
    let mut index = HashMap::with_capacity(compute.len());
    for (c, (s, iter)) in compute.into_iter().enumerate() {
        node_array.push(stmt_arrays[s].0);
        index.insert((s, iter.clone()), ni + c);
        nodes.push(NodeKind::Compute { stmt: s, iter });
    }
    let mut preds: Vec<Vec<NodeId>> = vec![Vec::new(); ni];
    let mut succs: Vec<Vec<NodeId>> = vec![Vec::new(); total];
    for (c, rp) in raw_preds.into_iter().enumerate() {
        let me = ni + c;
        let mut ps: Vec<NodeId> = Vec::with_capacity(rp.len());
        for src in rp {
            let p = match src {
                Src::Input(i) => i,
                Src::Compute(w) => ni + w,
            };
            if !ps.contains(&p) {
                ps.push(p);
                succs[p].push(me);
            }
        }
        preds.push(ps);
    }
    let mut outputs = vec![false; total];
    for ((arr, _), w) in &last_writer {
        if kernel.outputs.contains(&arrays[*arr]) {
            outputs[ni + w] = true;
        }
    }
    let g = Cdag {
        kernel: kernel.name.clone(),
        binding: binding.clone(),
        labels: kernel.statements.iter().map(|s| s.label.clone()).collect(),
        arrays,
        nodes,
        node_array,
        preds,
        succs,
        num_inputs: ni,
        outputs,
        index,
    };
    g.check_acyclic()?;
    Ok(g)
}

impl Cdag {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_compute(&self) -> usize {
        self.nodes.len() - self.num_inputs
    }

    pub fn is_input(&self, n: NodeId) -> bool {
        n < self.num_inputs
    }

    pub fn is_output(&self, n: NodeId) -> bool {
        self.outputs[n]
    }

    pub fn inputs(&self) -> std::ops::Range<NodeId> {
        0..self.num_inputs
    }

    pub fn compute_nodes(&self) -> std::ops::Range<NodeId> {
        self.num_inputs..self.nodes.len()
    }

    pub fn outputs(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&n| self.outputs[n])
    }

    pub fn kind(&self, n: NodeId) -> &NodeKind {
        &self.nodes[n]
    }

    pub fn preds(&self, n: NodeId) -> &[NodeId] {
        &self.preds[n]
    }

    pub fn succs(&self, n: NodeId) -> &[NodeId] {
        &self.succs[n]
    }

    pub fn max_in_degree(&self) -> usize {
        self.preds.iter().map(|p| p.len()).max().unwrap_or(0)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn arrays(&self) -> &[String] {
        &self.arrays
    }

    /// Array holding the value of node `n` (written array, or input array).
    pub fn array_of(&self, n: NodeId) -> usize {
        self.node_array[n]
    }

    pub fn stmt_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn node_of(&self, label: &str, iter: &[i64]) -> Option<NodeId> {
        let s = self.stmt_index(label)?;
        self.index.get(&(s, iter.to_vec())).copied()
    }

    pub fn node_of_stmt(&self, stmt: usize, iter: &[i64]) -> Option<NodeId> {
        self.index.get(&(stmt, iter.to_vec())).copied()
    }

    pub fn label_of(&self, n: NodeId) -> Option<&str> {
        match &self.nodes[n] {
            NodeKind::Compute { stmt, .. } => Some(&self.labels[*stmt]),
            NodeKind::Input { .. } => None,
        }
    }

    pub fn name(&self, n: NodeId) -> String {
        match &self.nodes[n] {
            NodeKind::Input { array, coords } => {
                let subs: String = coords.iter().map(|c| format!("[{c}]")).collect();
                format!("INPUT {}{}", self.arrays[*array], subs)
            }
            NodeKind::Compute { stmt, iter } => {
                let it: Vec<String> = iter.iter().map(|v| v.to_string()).collect();
                format!("{}[{}]", self.labels[*stmt], it.join(","))
            }
        }
    }

    fn check_acyclic(&self) -> Result<(), CdagError> {
        // Kahn's algorithm; the id order is expected to be one such order.
        let mut indeg: Vec<usize> = self.preds.iter().map(|p| p.len()).collect();
        let mut queue: VecDeque<NodeId> = (0..self.len()).filter(|&n| indeg[n] == 0).collect();
        let mut seen = 0;
        while let Some(n) = queue.pop_front() {
            seen += 1;
            for &s in &self.succs[n] {
                if s <= n {
                    return Err(CdagError::Cyclic(s));
                }
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    queue.push_back(s);
                }
            }
        }
        if seen != self.len() {
            let stuck = indeg.iter().position(|&d| d > 0).unwrap_or(0);
            return Err(CdagError::Cyclic(stuck));
        }
        Ok(())
    }

    /// Nodes outside `e` that feed a node of `e`.
    pub fn inset(&self, e: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
        e.iter()
            .flat_map(|&q| self.preds[q].iter().copied())
            .filter(|p| !e.contains(p))
            .collect()
    }

    /// True iff no path between two members of `e` leaves `e`.
    pub fn is_convex(&self, e: &BTreeSet<NodeId>) -> bool {
        let Some(&last) = e.iter().next_back() else {
            return true;
        };
        let mut visited: HashMap<NodeId, ()> = HashMap::new();
        let mut stack: Vec<NodeId> = Vec::new();
        for &p in e {
            for &s in &self.succs[p] {
                if s < last && !e.contains(&s) && visited.insert(s, ()).is_none() {
                    stack.push(s);
                }
            }
        }
        while let Some(n) = stack.pop() {
            for &s in &self.succs[n] {
                if e.contains(&s) {
                    return false;
                }
                if s < last && visited.insert(s, ()).is_none() {
                    stack.push(s);
                }
            }
        }
        true
    }

    /// Whether `to` is reachable from `from`.
    pub fn reaches(&self, from: NodeId, to: NodeId) -> bool {
        if from == to {
            return true;
        }
        if from > to {
            return false;
        }
        let mut seen = vec![false; to - from + 1];
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            for &s in &self.succs[n] {
                if s == to {
                    return true;
                }
                if s < to && !seen[s - from] {
                    seen[s - from] = true;
                    stack.push(s);
                }
            }
        }
        false
    }

    /// Nodes lying on some path from `from` to `to` (endpoints included).
    pub fn between(&self, from: NodeId, to: NodeId) -> Vec<NodeId> {
        if from > to {
            return Vec::new();
        }
        let w = to - from + 1;
        let mut fwd = vec![false; w];
        fwd[0] = true;
        for n in from..=to {
            if fwd[n - from] {
                for &s in &self.succs[n] {
                    if s <= to {
                        fwd[s - from] = true;
                    }
                }
            }
        }
        let mut bwd = vec![false; w];
        bwd[w - 1] = true;
        for n in (from..=to).rev() {
            if bwd[n - from] {
                for &p in &self.preds[n] {
                    if p >= from {
                        bwd[p - from] = true;
                    }
                }
            }
        }
        (from..=to).filter(|&n| fwd[n - from] && bwd[n - from]).collect()
    }

    /// Graphviz rendering; `None` above 2000 nodes.
    pub fn to_dot(&self) -> Option<String> {
        if self.len() > 2000 {
            return None;
        }
        let mut s = String::from("digraph cdag {\n  rankdir=TB;\n");
        for n in 0..self.len() {
            let shape = if self.is_input(n) {
                "box"
            } else if self.is_output(n) {
                "doublecircle"
            } else {
                "ellipse"
            };
            let _ = writeln!(s, "  n{n} [label=\"{}\", shape={shape}];", self.name(n));
        }
        for n in 0..self.len() {
            for &m in &self.succs[n] {
                let _ = writeln!(s, "  n{n} -> n{m};");
            }
        }
        s.push_str("}\n");
        Some(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::builtin_kernel;

    fn mgs(m: i64, n: i64) -> Cdag {
        instantiate(&builtin_kernel("mgs").unwrap(), &Binding::from_pairs(&[("M", m), ("N", n)])).unwrap()
    }

    #[test]
    fn mgs_2x2_counts() {
        let g = mgs(2, 2);
        assert_eq!(g.num_compute(), 17);
        assert_eq!(g.num_inputs(), 4);
        assert!(g.inputs().all(|n| g.preds(n).is_empty()));
        assert!(g.inputs().all(|n| matches!(g.kind(n), NodeKind::Input { array, .. } if g.arrays()[*array] == "A")));
        // Q (M*N) and R (upper triangle) elements
        assert_eq!(g.outputs().count(), 4 + 3);
    }

    #[test]
    fn mgs_su_to_sr_edges() {
        let g = mgs(3, 3);
        for i in 0..3 {
            let sr = g.node_of("SR", &[1, 2, i]).unwrap();
            let su = g.node_of("SU", &[0, 2, i]).unwrap();
            assert!(g.preds(sr).contains(&su));
        }
        let su1 = g.node_of("SU", &[1, 2, 0]).unwrap();
        let su0 = g.node_of("SU", &[0, 2, 0]).unwrap();
        assert!(g.preds(su1).contains(&su0));
    }

    #[test]
    fn inset_examples() {
        let g = mgs(3, 3);
        assert!(g.inset(&BTreeSet::new()).is_empty());
        let all: BTreeSet<NodeId> = (0..g.len()).collect();
        assert!(g.inset(&all).is_empty());
        let comp: BTreeSet<NodeId> = g.compute_nodes().collect();
        assert_eq!(g.inset(&comp), g.inputs().collect());
        let e: BTreeSet<NodeId> = (0..3).map(|i| g.node_of("SU", &[0, 1, i]).unwrap()).collect();
        let ins = g.inset(&e);
        let inputs = ins.iter().filter(|&&n| g.is_input(n)).count();
        let q = ins.iter().filter(|&&n| g.label_of(n) == Some("Sq")).count();
        let r = ins.iter().filter(|&&n| g.label_of(n) == Some("SR")).count();
        assert_eq!((inputs, q, r, ins.len()), (3, 3, 1, 7));
    }

    #[test]
    fn convexity_examples() {
        let g = mgs(3, 4);
        let one: BTreeSet<NodeId> = [g.node_of("SU", &[0, 3, 0]).unwrap()].into();
        assert!(g.is_convex(&one));
        let gap: BTreeSet<NodeId> =
            [g.node_of("SU", &[0, 3, 0]).unwrap(), g.node_of("SU", &[2, 3, 0]).unwrap()].into();
        assert!(!g.is_convex(&gap));
        // ancestors of a node form a convex set
        let target = g.node_of("SU", &[2, 3, 1]).unwrap();
        let mut anc: BTreeSet<NodeId> = BTreeSet::new();
        let mut stack = vec![target];
        while let Some(n) = stack.pop() {
            if anc.insert(n) {
                stack.extend_from_slice(g.preds(n));
            }
        }
        assert!(g.is_convex(&anc));
    }

    #[test]
    fn between_matches_reachability() {
        let g = mgs(3, 3);
        let a = g.node_of("SU", &[0, 2, 0]).unwrap();
        let b = g.node_of("SU", &[1, 2, 2]).unwrap();
        let mid = g.between(a, b);
        for n in a..=b {
            assert_eq!(mid.contains(&n), g.reaches(a, n) && g.reaches(n, b));
        }
    }

    #[test]
    fn ceiling_enforced() {
        let k = builtin_kernel("mgs").unwrap();
        let b = Binding::from_pairs(&[("M", 8), ("N", 8)]);
        assert_eq!(instantiate_with_ceiling(&k, &b, 50).unwrap_err(), CdagError::TooLarge(50));
        assert!(matches!(instantiate(&k, &Binding::from_pairs(&[("M", 2)])), Err(CdagError::Kernel(_))));
    }

    #[test]
    fn dot_dump() {
        let d = mgs(2, 2).to_dot().unwrap();
        assert!(d.contains("INPUT A[0][0]"));
        assert!(mgs(40, 40).to_dot().is_none());
    }
}
