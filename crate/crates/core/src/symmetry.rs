//! Canonical labeling and automorphism groups.
//!
//! A single individualization-refinement search produces the canonical
//! labeling together with a generating set of the automorphism group.
//! Subtrees equivalent under already discovered automorphisms are pruned,
//! and the group order is the product of the orbit lengths of the base
//! points along the first path.

use std::cmp::Ordering;
use std::collections::{HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::LabeledGraph;
use crate::perm::Permutation;

/// Order-invariant byte serialization of the canonically relabeled graph.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CanonicalForm(Vec<u8>);

impl CanonicalForm {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    /// Short stable hex digest, used as a state key in exported files.
    pub fn hash_hex(&self) -> String {
        let d = Sha256::digest(&self.0);
        hex::encode(&d[..12])
    }
}

impl fmt::Debug for CanonicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CanonicalForm({})", self.hash_hex())
    }
}

/// Target of a stabilizer or orbit query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Vertex(usize),
    Pair(usize, usize),
    Set(Vec<usize>),
}

/// Automorphism group given by generators, with vertex and pair orbits.
#[derive(Debug, Clone)]
pub struct AutomorphismGroup {
    n: usize,
    order: u128,
    generators: Vec<Permutation>,
    vertex_orbit: Vec<usize>,
    vertex_orbit_size: Vec<usize>,
    pair_orbit: Vec<usize>,
    pair_orbit_size: Vec<usize>,
}

impl AutomorphismGroup {
    pub(crate) fn from_generators(n: usize, order: u128, generators: Vec<Permutation>) -> Self {
        let mut vuf = UnionFind::new(n);
        for g in &generators {
            for v in 0..n {
                vuf.union(v, g[v]);
            }
        }
        let vertex_orbit: Vec<usize> = (0..n).map(|v| vuf.find(v)).collect();
        let mut vertex_orbit_size = vec![0; n];
        for &r in &vertex_orbit {
            vertex_orbit_size[r] += 1;
        }
        let vertex_orbit_size = vertex_orbit.iter().map(|&r| vertex_orbit_size[r]).collect();

        let mut puf = UnionFind::new(n * n);
        for g in &generators {
            for u in 0..n {
                for v in u + 1..n {
                    let (a, b) = g.apply_pair(u, v);
                    puf.union(u * n + v, a * n + b);
                }
            }
        }
        let mut pair_orbit = vec![usize::MAX; n * n];
        let mut counts = vec![0usize; n * n];
        for u in 0..n {
            for v in u + 1..n {
                let r = puf.find(u * n + v);
                pair_orbit[u * n + v] = r;
                counts[r] += 1;
            }
        }
        let pair_orbit_size = pair_orbit
            .iter()
            .map(|&r| if r == usize::MAX { 0 } else { counts[r] })
            .collect();
        AutomorphismGroup {
            n,
            order,
            generators,
            vertex_orbit,
            vertex_orbit_size,
            pair_orbit,
            pair_orbit_size,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// |Aut(G)|.
    pub fn order(&self) -> u128 {
        self.order
    }

    pub fn generators(&self) -> &[Permutation] {
        &self.generators
    }

    /// Orbit identifier of a vertex (its smallest orbit-mate is not implied).
    pub fn vertex_orbit(&self, v: usize) -> usize {
        self.vertex_orbit[v]
    }

    pub fn vertex_orbit_size(&self, v: usize) -> usize {
        self.vertex_orbit_size[v]
    }

    /// Node orbit partition, each orbit sorted, ordered by smallest member.
    pub fn node_orbits(&self) -> Vec<Vec<usize>> {
        let mut by_rep: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        for v in 0..self.n {
            by_rep[self.vertex_orbit[v]].push(v);
        }
        let mut out: Vec<Vec<usize>> = by_rep.into_iter().filter(|o| !o.is_empty()).collect();
        out.sort();
        out
    }

    /// Orbit identifier of an unordered pair, edge or non-edge.
    pub fn pair_orbit(&self, u: usize, v: usize) -> usize {
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        self.pair_orbit[a * self.n + b]
    }

    pub fn pair_orbit_size(&self, u: usize, v: usize) -> usize {
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        self.pair_orbit_size[a * self.n + b]
    }

    /// All images of a vertex set, each sorted.
    pub fn set_orbit(&self, set: &[usize]) -> Vec<Vec<usize>> {
        let mut start = set.to_vec();
        start.sort_unstable();
        start.dedup();
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        let mut queue = VecDeque::new();
        seen.insert(start.clone());
        queue.push_back(start);
        let mut out = Vec::new();
        while let Some(s) = queue.pop_front() {
            for g in &self.generators {
                let mut img: Vec<usize> = s.iter().map(|&v| g[v]).collect();
                img.sort_unstable();
                if seen.insert(img.clone()) {
                    queue.push_back(img);
                }
            }
            out.push(s);
        }
        out.sort();
        out
    }

    /// Smallest image of a vertex set; equal for sets in one orbit.
    pub fn set_orbit_key(&self, set: &[usize]) -> Vec<usize> {
        self.set_orbit(set).into_iter().next().unwrap_or_default()
    }

    pub fn orbit_size(&self, target: &Target) -> Result<usize> {
        self.check_target(target)?;
        Ok(match target {
            Target::Vertex(v) => self.vertex_orbit_size(*v),
            Target::Pair(u, v) => self.pair_orbit_size(*u, *v),
            Target::Set(s) => self.set_orbit(s).len(),
        })
    }

    /// |Aut(G)| / |Orb(target)|.
    pub fn stabilizer_order(&self, target: &Target) -> Result<u128> {
        let o = self.orbit_size(target)? as u128;
        Ok(self.order / o)
    }

    fn check_target(&self, target: &Target) -> Result<()> {
        let ok = match target {
            Target::Vertex(v) => *v < self.n,
            Target::Pair(u, v) => *u < self.n && *v < self.n && u != v,
            Target::Set(s) => s.iter().all(|&v| v < self.n),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidGraph(format!("invalid target {target:?} for n = {}", self.n)))
        }
    }
}

/// Result of a canonical search.
#[derive(Debug, Clone)]
pub struct Canonicalization {
    /// Vertex `v` of the input sits at position `labeling[v]` in the canonical graph.
    pub labeling: Permutation,
    pub graph: LabeledGraph,
    pub form: CanonicalForm,
    /// Group of the input graph, in input coordinates.
    pub group: AutomorphismGroup,
}

impl Canonicalization {
    /// Group expressed in canonical coordinates.
    pub fn canonical_group(&self) -> AutomorphismGroup {
        let lab = &self.labeling;
        let inv = lab.inverse();
        let gens = self
            .group
            .generators
            .iter()
            .map(|g| lab.compose(&g.compose(&inv)))
            .collect();
        AutomorphismGroup::from_generators(self.group.n, self.group.order, gens)
    }
}

pub fn canonicalize(g: &LabeledGraph) -> Canonicalization {
    let dense = Dense::new(g);
    let mut s = Search::new(&dense);
    s.run();
    let best = s.best.take().expect("search visits a leaf");
    let labeling = Permutation::from_vec_unchecked(best.perm);
    let graph = g.permuted(labeling.as_slice());
    let form = encode(&graph);
    let order = s.order();
    let generators = s.generators.into_iter().map(Permutation::from_vec_unchecked).collect();
    let group = AutomorphismGroup::from_generators(g.n(), order, generators);
    Canonicalization {
        labeling,
        graph,
        form,
        group,
    }
}

pub fn canonical_form(g: &LabeledGraph) -> CanonicalForm {
    canonicalize(g).form
}

pub fn automorphism_group(g: &LabeledGraph) -> AutomorphismGroup {
    canonicalize(g).group
}

/// Returns a witness `p` with `apply_permutation(g1, p) == g2` when isomorphic.
pub fn isomorphism(g1: &LabeledGraph, g2: &LabeledGraph) -> Option<Permutation> {
    if g1.n() != g2.n() || g1.num_edges() != g2.num_edges() || g1.attrs() != g2.attrs() {
        return None;
    }
    let c1 = canonicalize(g1);
    let c2 = canonicalize(g2);
    if c1.form != c2.form {
        return None;
    }
    Some(c2.labeling.inverse().compose(&c1.labeling))
}

pub fn are_isomorphic(g1: &LabeledGraph, g2: &LabeledGraph) -> bool {
    isomorphism(g1, g2).is_some()
}

pub fn stabilizer_order(g: &LabeledGraph, target: &Target) -> Result<u128> {
    automorphism_group(g).stabilizer_order(target)
}

pub fn subgraph_orbit_size(g: &LabeledGraph, set: &[usize]) -> Result<usize> {
    automorphism_group(g).orbit_size(&Target::Set(set.to_vec()))
}

fn encode(c: &LabeledGraph) -> CanonicalForm {
    let mut out = Vec::with_capacity(8 + 4 * c.n() + 12 * c.num_edges());
    out.extend_from_slice(&(c.n() as u32).to_le_bytes());
    for &l in c.labels() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend_from_slice(&(c.num_edges() as u32).to_le_bytes());
    for (u, v, l) in c.edges() {
        out.extend_from_slice(&(u as u32).to_le_bytes());
        out.extend_from_slice(&(v as u32).to_le_bytes());
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend_from_slice(&(c.attrs().len() as u32).to_le_bytes());
    for (k, v) in c.attrs() {
        out.extend_from_slice(&(k.len() as u32).to_le_bytes());
        out.extend_from_slice(k.as_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    CanonicalForm(out)
}

struct Dense {
    n: usize,
    labels: Vec<u32>,
    /// 0 for no edge, label + 1 otherwise.
    adj: Vec<u32>,
    nbrs: Vec<Vec<(usize, u32)>>,
}

impl Dense {
    fn new(g: &LabeledGraph) -> Self {
        let n = g.n();
        let mut adj = vec![0; n * n];
        let mut nbrs = vec![Vec::new(); n];
        for (u, v, l) in g.edges() {
            adj[u * n + v] = l + 1;
            adj[v * n + u] = l + 1;
            nbrs[u].push((v, l));
            nbrs[v].push((u, l));
        }
        Dense {
            n,
            labels: g.labels().to_vec(),
            adj,
            nbrs,
        }
    }
}

fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

struct Leaf {
    perm: Vec<usize>,
    cert: Vec<u32>,
    path: Vec<usize>,
}

enum Flow {
    Continue,
    Jump(usize),
}

struct Search<'a> {
    g: &'a Dense,
    first: Option<Leaf>,
    best: Option<Leaf>,
    generators: Vec<Vec<usize>>,
    keyed: Vec<(u64, u64, usize)>,
}

impl<'a> Search<'a> {
    fn new(g: &'a Dense) -> Self {
        Search {
            g,
            first: None,
            best: None,
            generators: Vec::new(),
            keyed: Vec::with_capacity(g.n),
        }
    }

    fn run(&mut self) {
        let n = self.g.n;
        if n == 0 {
            let leaf = Leaf {
                perm: Vec::new(),
                cert: Vec::new(),
                path: Vec::new(),
            };
            self.best = Some(Leaf {
                perm: Vec::new(),
                cert: Vec::new(),
                path: Vec::new(),
            });
            self.first = Some(leaf);
            return;
        }
        let keys: Vec<u64> = self.g.labels.iter().map(|&l| l as u64).collect();
        let mut colors = vec![0u32; n];
        self.rank(&vec![0; n], &keys, &mut colors);
        self.refine(&mut colors);
        let mut path = Vec::new();
        self.search(colors, &mut path);
    }

    /// Assigns dense ranks by `(old, key)`; returns the number of cells.
    fn rank(&mut self, old: &[u32], key: &[u64], out: &mut [u32]) -> usize {
        self.keyed.clear();
        self.keyed
            .extend((0..old.len()).map(|v| (old[v] as u64, key[v], v)));
        self.keyed.sort_unstable();
        let mut cells = 0;
        let mut prev: Option<(u64, u64)> = None;
        for &(a, b, v) in &self.keyed {
            if prev != Some((a, b)) {
                cells += 1;
                prev = Some((a, b));
            }
            out[v] = (cells - 1) as u32;
        }
        cells
    }

    fn refine(&mut self, colors: &mut Vec<u32>) {
        let n = self.g.n;
        let mut cells = count_cells(colors);
        let mut sig = vec![0u64; n];
        let mut next = vec![0u32; n];
        while cells < n {
            for v in 0..n {
                let mut s = 0u64;
                for &(w, l) in &self.g.nbrs[v] {
                    s = s.wrapping_add(mix(((l as u64) << 32) | colors[w] as u64));
                }
                sig[v] = s;
            }
            let c = self.rank(colors, &sig, &mut next);
            std::mem::swap(colors, &mut next);
            if c == cells {
                break;
            }
            cells = c;
        }
    }

    fn individualize(&mut self, colors: &[u32], v: usize) -> Vec<u32> {
        let n = self.g.n;
        let key: Vec<u64> = (0..n).map(|x| (x != v) as u64).collect();
        let mut out = vec![0u32; n];
        self.rank(colors, &key, &mut out);
        self.refine(&mut out);
        out
    }

    fn target_cell(colors: &[u32]) -> Vec<usize> {
        let n = colors.len();
        let mut size = vec![0usize; n];
        for &c in colors {
            size[c as usize] += 1;
        }
        let mut best: Option<(usize, u32)> = None;
        for (c, &s) in size.iter().enumerate() {
            if s > 1 && best.is_none_or(|(bs, _)| s < bs) {
                best = Some((s, c as u32));
            }
        }
        let (_, c) = best.expect("non-discrete partition");
        (0..n).filter(|&v| colors[v] == c).collect()
    }

    fn search(&mut self, colors: Vec<u32>, path: &mut Vec<usize>) -> Flow {
        if count_cells(&colors) == self.g.n {
            return self.leaf(colors, path);
        }
        let cell = Self::target_cell(&colors);
        let mut tried: Vec<usize> = Vec::new();
        for &v in &cell {
            if !tried.is_empty() && self.equivalent_to_tried(v, &tried, path) {
                continue;
            }
            let child = self.individualize(&colors, v);
            path.push(v);
            let flow = self.search(child, path);
            path.pop();
            tried.push(v);
            if let Flow::Jump(level) = flow {
                if level < path.len() {
                    return flow;
                }
            }
        }
        Flow::Continue
    }

    fn equivalent_to_tried(&self, v: usize, tried: &[usize], path: &[usize]) -> bool {
        let mut uf = UnionFind::new(self.g.n);
        for g in &self.generators {
            if path.iter().all(|&p| g[p] == p) {
                for x in 0..self.g.n {
                    uf.union(x, g[x]);
                }
            }
        }
        let r = uf.find(v);
        tried.iter().any(|&w| uf.find(w) == r)
    }

    fn certificate(&self, perm: &[usize]) -> Vec<u32> {
        let n = self.g.n;
        let mut inv = vec![0; n];
        for (v, &p) in perm.iter().enumerate() {
            inv[p] = v;
        }
        let mut cert = Vec::with_capacity(n + n * (n - 1) / 2);
        cert.extend(inv.iter().map(|&v| self.g.labels[v]));
        for i in 0..n {
            for j in i + 1..n {
                cert.push(self.g.adj[inv[i] * n + inv[j]]);
            }
        }
        cert
    }

    fn leaf(&mut self, colors: Vec<u32>, path: &[usize]) -> Flow {
        let perm: Vec<usize> = colors.iter().map(|&c| c as usize).collect();
        let cert = self.certificate(&perm);
        let leaf = Leaf {
            perm,
            cert,
            path: path.to_vec(),
        };
        let Some(first) = &self.first else {
            self.best = Some(Leaf {
                perm: leaf.perm.clone(),
                cert: leaf.cert.clone(),
                path: leaf.path.clone(),
            });
            self.first = Some(leaf);
            return Flow::Continue;
        };
        if leaf.cert == first.cert {
            let level = common_prefix(&leaf.path, &first.path);
            let gamma = automorphism_between(&first.perm, &leaf.perm);
            self.generators.push(gamma);
            return Flow::Jump(level);
        }
        let best = self.best.as_ref().expect("best set with first");
        match leaf.cert.cmp(&best.cert) {
            Ordering::Equal => {
                let level = common_prefix(&leaf.path, &best.path);
                let gamma = automorphism_between(&best.perm, &leaf.perm);
                self.generators.push(gamma);
                Flow::Jump(level)
            }
            Ordering::Greater => {
                self.best = Some(leaf);
                Flow::Continue
            }
            Ordering::Less => Flow::Continue,
        }
    }

    fn order(&self) -> u128 {
        let n = self.g.n;
        let first = self.first.as_ref().expect("search ran");
        let mut order: u128 = 1;
        for i in 0..first.path.len() {
            let prefix = &first.path[..i];
            let mut uf = UnionFind::new(n);
            for g in &self.generators {
                if prefix.iter().all(|&p| g[p] == p) {
                    for x in 0..n {
                        uf.union(x, g[x]);
                    }
                }
            }
            let r = uf.find(first.path[i]);
            let size = (0..n).filter(|&x| uf.find(x) == r).count() as u128;
            order = order.checked_mul(size).expect("automorphism order overflows u128");
        }
        order
    }
}

/// `gamma` with `gamma(v) = to⁻¹(from(v))`; maps the `from` leaf onto the `to` leaf.
fn automorphism_between(from: &[usize], to: &[usize]) -> Vec<usize> {
    let n = from.len();
    let mut to_inv = vec![0; n];
    for (v, &p) in to.iter().enumerate() {
        to_inv[p] = v;
    }
    (0..n).map(|v| to_inv[from[v]]).collect()
}

fn common_prefix(a: &[usize], b: &[usize]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

fn count_cells(colors: &[u32]) -> usize {
    colors.iter().map(|&c| c as usize + 1).max().unwrap_or(0)
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so identifiers are deterministic
            if ra < rb {
                self.parent[rb] = ra;
            } else {
                self.parent[ra] = rb;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star() -> LabeledGraph {
        LabeledGraph::from_edges(vec![0; 3], &[(0, 1, 0), (0, 2, 0)]).unwrap()
    }

    #[test]
    fn star_group() {
        let g = automorphism_group(&star());
        assert_eq!(g.order(), 2);
        assert_eq!(g.node_orbits(), vec![vec![0], vec![1, 2]]);
        assert_eq!(g.stabilizer_order(&Target::Vertex(0)).unwrap(), 2);
        assert_eq!(g.pair_orbit(0, 1), g.pair_orbit(0, 2));
        assert_ne!(g.pair_orbit(0, 1), g.pair_orbit(1, 2));
    }

    #[test]
    fn complete_graph_orders() {
        let mut f: u128 = 1;
        for n in 1..=9 {
            f *= n as u128;
            let mut g = LabeledGraph::empty(n);
            for u in 0..n {
                for v in u + 1..n {
                    g.add_edge(u, v, 0).unwrap();
                }
            }
            assert_eq!(automorphism_group(&g).order(), f);
            assert_eq!(automorphism_group(&LabeledGraph::empty(n)).order(), f);
        }
    }

    #[test]
    fn empty_graph() {
        let c = canonicalize(&LabeledGraph::new());
        assert_eq!(c.group.order(), 1);
        assert_eq!(c.graph.n(), 0);
    }

    #[test]
    fn witness_maps_graphs() {
        let g1 = LabeledGraph::from_edges(vec![0, 1, 0, 0], &[(0, 1, 0), (1, 2, 0), (2, 3, 1)]).unwrap();
        let p = Permutation::new(vec![3, 1, 0, 2]).unwrap();
        let g2 = g1.apply_permutation(&p).unwrap();
        let w = isomorphism(&g1, &g2).unwrap();
        assert_eq!(g1.apply_permutation(&w).unwrap(), g2);
    }

    #[test]
    fn attrs_distinguish_forms() {
        let mut g = star();
        let f0 = canonical_form(&g);
        g.set_attr("terminated", 1);
        assert_ne!(f0, canonical_form(&g));
    }

    #[test]
    fn canonical_group_fixes_canonical_graph() {
        let g = LabeledGraph::from_edges(vec![0; 5], &[(0, 1, 0), (1, 2, 0), (2, 3, 0), (3, 4, 0), (4, 0, 0)]).unwrap();
        let c = canonicalize(&g);
        let cg = c.canonical_group();
        assert_eq!(cg.order(), 10);
        for p in cg.generators() {
            assert_eq!(c.graph.apply_permutation(p).unwrap(), c.graph);
        }
    }
}
