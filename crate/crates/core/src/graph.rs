//! Labeled undirected graphs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perm::Permutation;

/// Graph attribute marking a terminal (stopped) graph.
pub const TERMINATED: &str = "terminated";

/// Undirected simple graph with integer node labels, edge labels and
/// named integer graph attributes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "GraphRecord", into = "GraphRecord")]
pub struct LabeledGraph {
    labels: Vec<u32>,
    adj: Vec<BTreeMap<usize, u32>>,
    attrs: BTreeMap<String, i64>,
}

/// On-disk JSON shape of a graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphRecord {
    pub n: usize,
    pub node_labels: Vec<u32>,
    pub edges: Vec<[u64; 3]>,
    #[serde(default)]
    pub attrs: BTreeMap<String, i64>,
}

impl TryFrom<GraphRecord> for LabeledGraph {
    type Error = Error;

    fn try_from(r: GraphRecord) -> Result<Self> {
        if r.node_labels.len() != r.n {
            return Err(Error::InvalidGraph(format!(
                "n = {} but {} node labels",
                r.n,
                r.node_labels.len()
            )));
        }
        let mut g = LabeledGraph::with_labels(r.node_labels);
        for [u, v, l] in r.edges {
            let l = u32::try_from(l).map_err(|_| Error::InvalidGraph("edge label".into()))?;
            g.add_edge(u as usize, v as usize, l)?;
        }
        g.attrs = r.attrs;
        Ok(g)
    }
}

impl From<LabeledGraph> for GraphRecord {
    fn from(g: LabeledGraph) -> Self {
        GraphRecord {
            n: g.n(),
            node_labels: g.labels.clone(),
            edges: g
                .edges()
                .map(|(u, v, l)| [u as u64, v as u64, l as u64])
                .collect(),
            attrs: g.attrs,
        }
    }
}

impl LabeledGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// `n` isolated nodes with label 0.
    pub fn empty(n: usize) -> Self {
        Self::with_labels(vec![0; n])
    }

    pub fn with_labels(labels: Vec<u32>) -> Self {
        let adj = vec![BTreeMap::new(); labels.len()];
        LabeledGraph {
            labels,
            adj,
            attrs: BTreeMap::new(),
        }
    }

    pub fn from_edges(labels: Vec<u32>, edges: &[(usize, usize, u32)]) -> Result<Self> {
        let mut g = Self::with_labels(labels);
        for &(u, v, l) in edges {
            g.add_edge(u, v, l)?;
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(|a| a.len()).sum::<usize>() / 2
    }

    pub fn label(&self, v: usize) -> u32 {
        self.labels[v]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn set_label(&mut self, v: usize, label: u32) {
        self.labels[v] = label;
    }

    pub fn add_node(&mut self, label: u32) -> usize {
        self.labels.push(label);
        self.adj.push(BTreeMap::new());
        self.labels.len() - 1
    }

    pub fn add_edge(&mut self, u: usize, v: usize, label: u32) -> Result<()> {
        let n = self.n();
        if u >= n || v >= n {
            return Err(Error::InvalidGraph(format!("edge ({u},{v}) out of range for n = {n}")));
        }
        if u == v {
            return Err(Error::InvalidGraph(format!("self loop at {u}")));
        }
        if self.adj[u].contains_key(&v) {
            return Err(Error::InvalidGraph(format!("duplicate edge ({u},{v})")));
        }
        self.adj[u].insert(v, label);
        self.adj[v].insert(u, label);
        Ok(())
    }

    pub fn set_edge_label(&mut self, u: usize, v: usize, label: u32) {
        if let Some(l) = self.adj[u].get_mut(&v) {
            *l = label;
        }
        if let Some(l) = self.adj[v].get_mut(&u) {
            *l = label;
        }
    }

    pub fn remove_edge(&mut self, u: usize, v: usize) -> Option<u32> {
        let l = self.adj[u].remove(&v);
        self.adj[v].remove(&u);
        l
    }

    /// Removes the given nodes; surviving nodes keep their relative order.
    pub fn remove_nodes(&mut self, nodes: &[usize]) {
        let n = self.n();
        let mut keep = vec![true; n];
        for &v in nodes {
            keep[v] = false;
        }
        let mut new_index = vec![usize::MAX; n];
        let mut next = 0;
        for v in 0..n {
            if keep[v] {
                new_index[v] = next;
                next += 1;
            }
        }
        let mut labels = Vec::with_capacity(next);
        let mut adj = Vec::with_capacity(next);
        for v in 0..n {
            if !keep[v] {
                continue;
            }
            labels.push(self.labels[v]);
            adj.push(
                self.adj[v]
                    .iter()
                    .filter(|(w, _)| keep[**w])
                    .map(|(w, l)| (new_index[*w], *l))
                    .collect(),
            );
        }
        self.labels = labels;
        self.adj = adj;
    }

    pub fn remove_node(&mut self, v: usize) {
        self.remove_nodes(&[v]);
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].contains_key(&v)
    }

    pub fn edge_label(&self, u: usize, v: usize) -> Option<u32> {
        self.adj[u].get(&v).copied()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.adj[v].iter().map(|(w, l)| (*w, *l))
    }

    /// Edges as `(u, v, label)` with `u < v`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, a)| a.range(u + 1..).map(move |(v, l)| (u, *v, *l)))
    }

    pub fn attrs(&self) -> &BTreeMap<String, i64> {
        &self.attrs
    }

    pub fn attr(&self, key: &str) -> i64 {
        self.attrs.get(key).copied().unwrap_or(0)
    }

    /// Sets an attribute; zero removes it so that absent and zero compare equal.
    pub fn set_attr(&mut self, key: &str, value: i64) {
        if value == 0 {
            self.attrs.remove(key);
        } else {
            self.attrs.insert(key.to_string(), value);
        }
    }

    pub fn is_terminated(&self) -> bool {
        self.attr(TERMINATED) != 0
    }

    /// Connected components, each sorted, ordered by smallest vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        self.components_where(|_| true)
    }

    /// Components of the subgraph keeping only edges whose label passes `keep`.
    pub fn components_where(&self, keep: impl Fn(u32) -> bool) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut i = 0;
            while i < comp.len() {
                let v = comp[i];
                i += 1;
                for (w, l) in self.neighbors(v) {
                    if keep(l) && !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.n() <= 1 || self.components().len() == 1
    }

    /// True when removing edge `(u, v)` disconnects the graph.
    pub fn is_bridge(&self, u: usize, v: usize) -> bool {
        let mut seen = vec![false; self.n()];
        seen[u] = true;
        let mut stack = vec![u];
        while let Some(x) = stack.pop() {
            for (w, _) in self.neighbors(x) {
                if (x == u && w == v) || (x == v && w == u) {
                    continue;
                }
                if w == v {
                    return false;
                }
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        true
    }

    /// Induced subgraph on `nodes`, in the given order.
    pub fn induced(&self, nodes: &[usize]) -> LabeledGraph {
        let mut pos = vec![usize::MAX; self.n()];
        for (i, &v) in nodes.iter().enumerate() {
            pos[v] = i;
        }
        let mut g = LabeledGraph::with_labels(nodes.iter().map(|&v| self.labels[v]).collect());
        for (i, &v) in nodes.iter().enumerate() {
            for (w, l) in self.neighbors(v) {
                let j = pos[w];
                if j != usize::MAX && i < j {
                    g.adj[i].insert(j, l);
                    g.adj[j].insert(i, l);
                }
            }
        }
        g
    }

    /// Disjoint union; nodes of `other` are appended after ours.
    pub fn disjoint_union(&self, other: &LabeledGraph) -> LabeledGraph {
        let mut g = self.clone();
        let off = self.n();
        for v in 0..other.n() {
            g.add_node(other.labels[v]);
        }
        for (u, v, l) in other.edges() {
            g.adj[u + off].insert(v + off, l);
            g.adj[v + off].insert(u + off, l);
        }
        g
    }

    /// Relabels vertices: vertex `v` becomes `perm[v]`.
    pub fn apply_permutation(&self, perm: &Permutation) -> Result<LabeledGraph> {
        if perm.len() != self.n() {
            return Err(Error::InvalidPermutation(format!(
                "length {} for graph with {} nodes",
                perm.len(),
                self.n()
            )));
        }
        Ok(self.permuted(perm.as_slice()))
    }

    pub(crate) fn permuted(&self, p: &[usize]) -> LabeledGraph {
        let n = self.n();
        let mut labels = vec![0; n];
        let mut adj = vec![BTreeMap::new(); n];
        for v in 0..n {
            labels[p[v]] = self.labels[v];
            for (w, l) in self.neighbors(v) {
                adj[p[v]].insert(p[w], l);
            }
        }
        LabeledGraph {
            labels,
            adj,
            attrs: self.attrs.clone(),
        }
    }

    /// Number of independent cycles (cyclomatic number).
    pub fn cycle_rank(&self) -> usize {
        (self.num_edges() + self.components().len()).saturating_sub(self.n())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
