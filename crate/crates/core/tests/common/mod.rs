//! Brute-force oracles shared by integration tests.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use rand::Rng;
use sagfn::env::GraphAction;
use sagfn::policy::{EdgeFlowTable, FlowTable, PolicyTable};
use sagfn::state_space::StateDag;
use sagfn::symmetry;
use sagfn::training::{Gradient, Param};
use sagfn::{LabeledGraph, Permutation};

pub fn all_perms(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        let n = used.len();
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for v in 0..n {
            if !used[v] {
                used[v] = true;
                cur.push(v);
                rec(cur, used, out);
                cur.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

pub fn is_automorphism(g: &LabeledGraph, p: &[usize]) -> bool {
    (0..g.n()).all(|v| g.label(v) == g.label(p[v]))
        && g.edges().all(|(u, v, l)| g.edge_label(p[u], p[v]) == Some(l))
}

pub fn brute_automorphisms(g: &LabeledGraph, perms: &[Vec<usize>]) -> Vec<Vec<usize>> {
    perms.iter().filter(|p| is_automorphism(g, p)).cloned().collect()
}

pub fn brute_isomorphic(a: &LabeledGraph, b: &LabeledGraph, perms: &[Vec<usize>]) -> bool {
    if a.n() != b.n() || a.num_edges() != b.num_edges() || a.attrs() != b.attrs() {
        return false;
    }
    perms.iter().any(|p| {
        (0..a.n()).all(|v| a.label(v) == b.label(p[v]))
            && a.edges().all(|(u, v, l)| b.edge_label(p[u], p[v]) == Some(l))
    })
}

pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64, node_labels: u32, edge_labels: u32) -> LabeledGraph {
    let labels = (0..n).map(|_| rng.gen_range(0..node_labels)).collect();
    let mut g = LabeledGraph::with_labels(labels);
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                g.add_edge(u, v, rng.gen_range(0..edge_labels)).unwrap();
            }
        }
    }
    g
}

pub fn random_perm(rng: &mut impl Rng, n: usize) -> Permutation {
    use rand::seq::SliceRandom;
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(rng);
    Permutation::new(v).unwrap()
}

/// All graphs on `n` unlabeled vertices given by edge bitmask.
pub fn graph_from_mask(n: usize, mask: u64) -> LabeledGraph {
    let mut g = LabeledGraph::empty(n);
    let mut bit = 0;
    for u in 0..n {
        for v in u + 1..n {
            if mask >> bit & 1 == 1 {
                g.add_edge(u, v, 0).unwrap();
            }
            bit += 1;
        }
    }
    g
}

/// Images of a sorted vertex set under the given permutations.
pub fn brute_set_orbit(set: &[usize], auts: &[Vec<usize>]) -> usize {
    let mut images: Vec<Vec<usize>> = auts
        .iter()
        .map(|p| {
            let mut s: Vec<usize> = set.iter().map(|&v| p[v]).collect();
            s.sort_unstable();
            s
        })
        .collect();
    images.sort();
    images.dedup();
    images.len()
}

/// Graphs visited by a uniformly random forward walk, initial and terminal included.
pub fn random_walk(env: &sagfn::env::Environment, rng: &mut impl Rng) -> Vec<LabeledGraph> {
    let mut g = env.initial.clone();
    let mut out = vec![g.clone()];
    loop {
        let acts = env.forward_actions(&g);
        if acts.is_empty() {
            return out;
        }
        let a = &acts[rng.gen_range(0..acts.len())];
        g = env.apply(&g, a).expect("legal action");
        out.push(g.clone());
    }
}

pub fn all_envs() -> Vec<sagfn::env::Environment> {
    use sagfn::env::Environment;
    vec![
        Environment::illustrative(),
        Environment::clique(),
        Environment::cycle(),
        Environment::fragment(sagfn::fragments::Vocabulary::standard(), 5),
        Environment::catalog(5),
    ]
}

/// Aut(G) as an explicit list for small graphs, or generators otherwise.
pub struct Group {
    pub perms: Vec<Vec<usize>>,
    pub order: u128,
    pub explicit: bool,
}

pub struct Oracle {
    pub perms6: HashMap<usize, Vec<Vec<usize>>>,
    pub orders: HashMap<String, u128>,
}

impl Oracle {
    pub fn new() -> Self {
        Oracle {
            perms6: (0..=6).map(|n| (n, all_perms(n))).collect(),
            orders: HashMap::new(),
        }
    }

    pub fn group(&mut self, g: &LabeledGraph) -> Group {
        let n = g.n();
        if n <= 6 {
            let auts = brute_automorphisms(g, &self.perms6[&n]);
            return Group { order: auts.len() as u128, perms: auts, explicit: true };
        }
        let aut = symmetry::automorphism_group(g);
        let gens: Vec<Vec<usize>> = aut.generators().iter().map(|p| p.as_slice().to_vec()).collect();
        assert!(gens.iter().all(|p| is_automorphism(g, p)));
        let order = if n == 7 {
            let key = symmetry::canonical_form(g).hash_hex();
            *self.orders.entry(key).or_insert_with(|| {
                all_perms(7).iter().filter(|p| is_automorphism(g, p)).count() as u128
            })
        } else {
            aut.order()
        };
        Group { perms: gens, order, explicit: false }
    }
}

pub fn orbit(a: &GraphAction, group: &Group) -> usize {
    if group.explicit {
        let set: HashSet<GraphAction> = group.perms.iter().map(|p| a.relabel(p)).collect();
        return set.len();
    }
    let mut seen = HashSet::from([a.clone()]);
    let mut stack = vec![a.clone()];
    while let Some(b) = stack.pop() {
        for p in &group.perms {
            let c = b.relabel(p);
            if seen.insert(c.clone()) {
                stack.push(c);
            }
        }
    }
    seen.len()
}

pub struct Brute {
    pub perms: HashMap<usize, Vec<Vec<usize>>>,
}

impl Brute {
    pub fn new() -> Self {
        Brute { perms: (0..=7).map(|n| (n, all_perms(n))).collect() }
    }

    pub fn auts(&self, g: &LabeledGraph) -> Vec<Vec<usize>> {
        brute_automorphisms(g, &self.perms[&g.n()])
    }

    /// |Orb(g ∪ c, V(c))| * |Aut g| * |Aut c| == |Aut(g ∪ c)| by explicit enumeration.
    pub fn lemma(&self, g: &LabeledGraph, c: &LabeledGraph) -> bool {
        let u = g.disjoint_union(c);
        let auts = self.auts(&u);
        let c_nodes: Vec<usize> = (g.n()..u.n()).collect();
        let orbit = brute_set_orbit(&c_nodes, &auts);
        orbit * self.auts(g).len() * self.auts(c).len() == auts.len()
    }
}

pub struct Point {
    pub policy: PolicyTable,
    pub flows: FlowTable,
    pub edges: EdgeFlowTable,
}

impl Point {
    pub fn random(dag: &StateDag, rng: &mut impl Rng) -> Self {
        let mut policy = PolicyTable::uniform(dag);
        policy.logits.iter_mut().flatten().for_each(|l| *l = rng.gen_range(-2.5..2.5));
        policy.log_z = rng.gen_range(-5.0..5.0);
        let mut flows = FlowTable::zeros(dag);
        flows.log_flow.iter_mut().for_each(|f| *f = rng.gen_range(-4.0..4.0));
        let mut edges = EdgeFlowTable::zeros(dag);
        edges.log_flow.iter_mut().flatten().for_each(|f| *f = rng.gen_range(-4.0..4.0));
        Point { policy, flows, edges }
    }

    pub fn slot(&mut self, p: Param) -> &mut f64 {
        match p {
            Param::Logit(s, c) => &mut self.policy.logits[s][c],
            Param::LogZ => &mut self.policy.log_z,
            Param::Flow(s) => &mut self.flows.log_flow[s],
            Param::EdgeFlow(s, c) => &mut self.edges.log_flow[s][c],
        }
    }
}

pub fn check_gradient(point: &mut Point, params: &[Param], loss: impl Fn(&Point) -> (f64, Gradient)) {
    let h = 1e-4;
    let (_, grad) = loss(point);
    for &p in params {
        let x = *point.slot(p);
        *point.slot(p) = x + h;
        let up = loss(point).0;
        *point.slot(p) = x - h;
        let down = loss(point).0;
        *point.slot(p) = x;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grad.get(p);
        let err = (numeric - analytic).abs();
        assert!(
            err < 1e-8 || err < 1e-5 * numeric.abs().max(analytic.abs()),
            "{p:?}: analytic {analytic} numeric {numeric}"
        );
    }
}

