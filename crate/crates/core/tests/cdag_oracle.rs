//! The CDAG builder checked against a direct interpreter of the loop nest
//! that tracks, for every array cell, the last instance that wrote it.

use std::collections::{BTreeSet, HashMap};

use hourglass_core::cdag::{instantiate, Cdag, NodeKind};
use hourglass_core::expr::Binding;
use hourglass_core::kernel::{builtin_kernel, AffineKernel, Node};

/// Producer of a value: an initial array cell or a statement instance.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Src {
    Cell(String, Vec<i64>),
    Inst(String, Vec<i64>),
}

struct Interp<'a> {
    k: &'a AffineKernel,
    env: HashMap<String, i64>,
    last: HashMap<(String, Vec<i64>), Src>,
    order: Vec<Src>,
    deps: HashMap<Src, BTreeSet<Src>>,
}

impl Interp<'_> {
    fn lookup(&self, name: &str) -> Option<i64> {
        self.env.get(name).copied()
    }

    fn walk(&mut self, nodes: &[Node]) {
        for node in nodes {
            match node {
                Node::Loop(l) => {
                    let lo = l.lower.eval(|n| self.lookup(n)).unwrap();
                    let hi = l.upper.eval(|n| self.lookup(n)).unwrap();
                    let values: Vec<i64> = if l.descending { (lo..hi).rev().collect() } else { (lo..hi).collect() };
                    for v in values {
                        self.env.insert(l.index.clone(), v);
                        self.walk(&l.body);
                    }
                    self.env.remove(&l.index);
                }
                Node::Stmt(i) => self.exec(*i),
            }
        }
    }

    fn exec(&mut self, i: usize) {
        let st = &self.k.statements[i];
        let iter: Vec<i64> = st.domain.indices.iter().map(|x| self.env[x]).collect();
        let me = Src::Inst(st.label.clone(), iter);
        let mut deps = BTreeSet::new();
        for r in &st.reads {
            let cell: Vec<i64> = r.subscripts.iter().map(|s| s.eval(|n| self.lookup(n)).unwrap()).collect();
            let key = (r.array.clone(), cell.clone());
            let src = self.last.get(&key).cloned().unwrap_or(Src::Cell(r.array.clone(), cell));
            if src != me {
                deps.insert(src);
            }
        }
        let w = &st.write;
        let cell: Vec<i64> = w.subscripts.iter().map(|s| s.eval(|n| self.lookup(n)).unwrap()).collect();
        self.last.insert((w.array.clone(), cell), me.clone());
        self.order.push(me.clone());
        self.deps.insert(me, deps);
    }
}

fn interpret<'a>(k: &'a AffineKernel, b: &Binding) -> Interp<'a> {
    let mut it = Interp {
        k,
        env: b.iter().map(|(n, v)| (n.clone(), *v)).collect(),
        last: HashMap::new(),
        order: Vec::new(),
        deps: HashMap::new(),
    };
    let body = k.body.clone();
    it.walk(&body);
    it
}

fn src_of(g: &Cdag, n: usize) -> Src {
    match g.kind(n) {
        NodeKind::Input { array, coords } => Src::Cell(g.arrays()[*array].clone(), coords.clone()),
        NodeKind::Compute { iter, .. } => Src::Inst(g.label_of(n).unwrap().to_string(), iter.clone()),
    }
}

fn check(kernel: &str, pairs: &[(&str, i64)]) {
    let k = builtin_kernel(kernel).unwrap();
    let b = Binding::from_pairs(pairs);
    let g = instantiate(&k, &b).unwrap();
    let it = interpret(&k, &b);

    let built: Vec<Src> = g.compute_nodes().map(|n| src_of(&g, n)).collect();
    assert_eq!(built, it.order, "{kernel} {b}: instance order");

    let mut cells = BTreeSet::new();
    for n in g.compute_nodes() {
        let me = src_of(&g, n);
        let got: BTreeSet<Src> = g.preds(n).iter().map(|&p| src_of(&g, p)).collect();
        assert_eq!(got, it.deps[&me], "{kernel} {b}: preds of {}", g.name(n));
        cells.extend(got.into_iter().filter(|s| matches!(s, Src::Cell(..))));
    }
    // every input node is read by someone, and only those exist
    let inputs: BTreeSet<Src> = g.inputs().map(|n| src_of(&g, n)).collect();
    assert_eq!(inputs, cells, "{kernel} {b}: input nodes");
}

#[test]
fn mgs_matches_interpreter() {
    for (m, n) in [(1, 1), (2, 2), (3, 2), (2, 4), (5, 3)] {
        check("mgs", &[("M", m), ("N", n)]);
    }
}

#[test]
fn a2v_matches_interpreter() {
    for (m, n) in [(2, 2), (4, 3), (3, 3), (6, 2)] {
        check("hh_a2v", &[("M", m), ("N", n)]);
    }
}

#[test]
fn v2q_matches_interpreter() {
    for (m, n) in [(2, 2), (4, 3), (5, 5)] {
        check("hh_v2q", &[("M", m), ("N", n)]);
    }
}

#[test]
fn gehd2_matches_interpreter() {
    for n in [2, 3, 5, 6] {
        check("gehd2", &[("N", n)]);
    }
}

#[test]
fn small_mgs_counts() {
    // hand count at M = N = 2: per k, 1+2+1+2 column ops, plus the k<j pair
    let g = instantiate(&builtin_kernel("mgs").unwrap(), &Binding::from_pairs(&[("M", 2), ("N", 2)])).unwrap();
    assert_eq!(g.num_compute(), 2 * (1 + 2 + 1 + 2) + (1 + 2 + 2));
    assert_eq!(g.num_inputs(), 4);
}
