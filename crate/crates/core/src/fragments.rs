//! Fragment vocabularies and fragment-level symmetry corrections.
//!
//! Inside an assembled graph a node label packs `base * 4 + stem`, where
//! stem is 0 (no attachment point), 1 (free) or 2 (consumed). Edges within
//! a fragment carry even labels (`2 * base`), inter-fragment edges carry 1.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LabeledGraph;
use crate::symmetry::{self, CanonicalForm};

pub const STEM_NONE: u32 = 0;
pub const STEM_FREE: u32 = 1;
pub const STEM_USED: u32 = 2;
pub const INTER_EDGE: u32 = 1;

pub fn stem(label: u32) -> u32 {
    label % 4
}

pub fn with_stem(label: u32, stem: u32) -> u32 {
    label - label % 4 + stem
}

pub fn is_inter(edge_label: u32) -> bool {
    edge_label % 2 == 1
}

/// A building block with designated attachment points.
#[derive(Debug, Clone)]
pub struct Fragment {
    pub name: String,
    pub graph: LabeledGraph,
    pub attachment_points: Vec<usize>,
    pub approx_n: Option<u64>,
    encoded: LabeledGraph,
    aut_order: u128,
}

impl Fragment {
    pub fn new(
        name: impl Into<String>,
        graph: LabeledGraph,
        attachment_points: Vec<usize>,
        approx_n: Option<u64>,
    ) -> Result<Self> {
        let name = name.into();
        if graph.n() == 0 || !graph.is_connected() {
            return Err(Error::InvalidVocabulary(format!("{name}: fragment must be non-empty and connected")));
        }
        let mut points = attachment_points.clone();
        points.sort_unstable();
        points.dedup();
        if points.len() != attachment_points.len() || points.iter().any(|&v| v >= graph.n()) {
            return Err(Error::InvalidVocabulary(format!("{name}: bad attachment points")));
        }
        if approx_n == Some(0) {
            return Err(Error::InvalidVocabulary(format!("{name}: approx_N must be positive")));
        }
        let mut encoded = LabeledGraph::with_labels(graph.labels().iter().map(|&l| l * 4).collect());
        for &p in &points {
            encoded.set_label(p, encoded.label(p) + STEM_FREE);
        }
        for (u, v, l) in graph.edges() {
            encoded.add_edge(u, v, 2 * l)?;
        }
        let aut_order = symmetry::automorphism_group(&encoded).order();
        Ok(Fragment {
            name,
            graph,
            attachment_points: points,
            approx_n,
            encoded,
            aut_order,
        })
    }

    /// Graph as placed in an assembly: stems encoded into node labels.
    pub fn encoded(&self) -> &LabeledGraph {
        &self.encoded
    }

    /// |Aut(C)| with attachment points treated as node labels.
    pub fn aut_order(&self) -> u128 {
        self.aut_order
    }

    pub fn num_attachment_points(&self) -> usize {
        self.attachment_points.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FragmentRecord {
    #[serde(default)]
    name: Option<String>,
    n: usize,
    node_labels: Vec<u32>,
    edges: Vec<[u64; 3]>,
    #[serde(default)]
    attachment_points: Vec<usize>,
    #[serde(default, rename = "approx_N")]
    approx_n: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum VocabularyFile {
    List(Vec<FragmentRecord>),
    Wrapped { fragments: Vec<FragmentRecord> },
}

/// Fragment table with precomputed automorphism orders.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    fragments: Vec<Fragment>,
    by_form: HashMap<CanonicalForm, usize>,
}

impl Vocabulary {
    pub fn new(fragments: Vec<Fragment>) -> Result<Self> {
        if fragments.is_empty() {
            return Err(Error::InvalidVocabulary("empty vocabulary".into()));
        }
        let mut by_form = HashMap::new();
        for (i, f) in fragments.iter().enumerate() {
            if by_form.insert(symmetry::canonical_form(f.encoded()), i).is_some() {
                return Err(Error::InvalidVocabulary(format!("{}: duplicate fragment", f.name)));
            }
        }
        Ok(Vocabulary { fragments, by_form })
    }

    /// Small symmetric vocabulary used by the built-in fragment environment.
    pub fn standard() -> Self {
        let e = |n: usize, edges: &[(usize, usize)]| {
            let list: Vec<_> = edges.iter().map(|&(u, v)| (u, v, 0)).collect();
            LabeledGraph::from_edges(vec![0; n], &list).unwrap()
        };
        let frags = vec![
            Fragment::new("dot", e(1, &[]), vec![0], Some(1)),
            Fragment::new("bond", e(2, &[(0, 1)]), vec![0, 1], Some(2)),
            Fragment::new("triangle", e(3, &[(0, 1), (1, 2), (0, 2)]), vec![0, 1, 2], Some(3)),
            Fragment::new("claw", e(4, &[(0, 1), (0, 2), (0, 3)]), vec![1, 2, 3], Some(3)),
            Fragment::new("square", e(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]), vec![0, 1, 2, 3], Some(4)),
        ];
        Vocabulary::new(frags.into_iter().collect::<Result<_>>().unwrap()).unwrap()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: VocabularyFile = serde_json::from_str(s)?;
        let records = match file {
            VocabularyFile::List(r) | VocabularyFile::Wrapped { fragments: r } => r,
        };
        let mut out = Vec::new();
        for (i, r) in records.into_iter().enumerate() {
            let graph = LabeledGraph::try_from(crate::graph::GraphRecord {
                n: r.n,
                node_labels: r.node_labels,
                edges: r.edges,
                attrs: Default::default(),
            })?;
            let name = r.name.unwrap_or_else(|| format!("f{i}"));
            out.push(Fragment::new(name, graph, r.attachment_points, r.approx_n)?);
        }
        Vocabulary::new(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Fragment> {
        self.fragments.get(id)
    }

    pub fn fragments(&self) -> &[Fragment] {
        &self.fragments
    }

    /// Identifies a pristine placed fragment (all stems free).
    pub fn identify(&self, encoded: &LabeledGraph) -> Option<usize> {
        self.by_form.get(&symmetry::canonical_form(encoded)).copied()
    }

    /// Index of the fragment with the largest automorphism group.
    pub fn most_symmetric(&self) -> usize {
        (0..self.len()).max_by_key(|&i| (self.fragments[i].aut_order, std::cmp::Reverse(i))).unwrap()
    }
}

/// Decomposition of an assembled graph into placed fragments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentAssembly {
    /// `(fragment id, nodes)` per placed fragment.
    pub fragments: Vec<(usize, Vec<usize>)>,
    pub inter_edges: Vec<(usize, usize)>,
}

impl FragmentAssembly {
    pub fn from_graph(vocab: &Vocabulary, g: &LabeledGraph) -> Result<Self> {
        let mut fragments = Vec::new();
        for comp in g.components_where(|l| !is_inter(l)) {
            let mut sub = g.induced(&comp);
            for v in 0..sub.n() {
                if stem(sub.label(v)) == STEM_USED {
                    sub.set_label(v, with_stem(sub.label(v), STEM_FREE));
                }
            }
            let id = vocab
                .identify(&sub)
                .ok_or_else(|| Error::InvalidVocabulary(format!("component {comp:?} is not a known fragment")))?;
            fragments.push((id, comp));
        }
        let inter_edges = g.edges().filter(|e| is_inter(e.2)).map(|(u, v, _)| (u, v)).collect();
        Ok(FragmentAssembly { fragments, inter_edges })
    }

    pub fn aut_product(&self, vocab: &Vocabulary) -> u128 {
        self.fragments
            .iter()
            .map(|(id, _)| vocab.fragments[*id].aut_order)
            .product()
    }

    pub fn count(&self, id: usize) -> usize {
        self.fragments.iter().filter(|(f, _)| *f == id).count()
    }

    /// True when fragments and inter edges form a tree.
    pub fn is_tree(&self) -> bool {
        self.inter_edges.len() + 1 == self.fragments.len() || self.fragments.is_empty()
    }
}

/// `|Aut(G)| R / Π |Aut(C_i)|`.
pub fn fragment_corrected_reward(vocab: &Vocabulary, g: &LabeledGraph, base_reward: f64) -> Result<f64> {
    if base_reward <= 0.0 || base_reward.is_nan() {
        return Err(Error::Config(format!("reward must be positive, got {base_reward}")));
    }
    let asm = FragmentAssembly::from_graph(vocab, g)?;
    let aut = symmetry::automorphism_group(g).order();
    Ok(base_reward * aut as f64 / asm.aut_product(vocab) as f64)
}

/// `R / Π N(C_i)`.
pub fn approx_corrected_reward(vocab: &Vocabulary, g: &LabeledGraph, base_reward: f64) -> Result<f64> {
    if base_reward <= 0.0 || base_reward.is_nan() {
        return Err(Error::Config(format!("reward must be positive, got {base_reward}")));
    }
    let asm = FragmentAssembly::from_graph(vocab, g)?;
    let mut div = 1.0;
    for (id, _) in &asm.fragments {
        let f = &vocab.fragments[*id];
        let n = f
            .approx_n
            .ok_or_else(|| Error::InvalidVocabulary(format!("{}: missing approx_N", f.name)))?;
        div *= n as f64;
    }
    Ok(base_reward / div)
}

/// Outcome of the attachment-point check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttachmentReport {
    pub valid: bool,
    /// Pairs in different orbits with attachment points that merge without them.
    pub offending_pairs: Vec<(usize, usize)>,
}

/// Orbits computed with attachment points as labels must coincide with
/// the orbits of the bare fragment.
pub fn validate_attachment_points(fragment: &Fragment) -> AttachmentReport {
    let with = symmetry::automorphism_group(fragment.encoded());
    let without = symmetry::automorphism_group(&fragment.graph);
    let n = fragment.graph.n();
    let mut offending = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if with.vertex_orbit(u) != with.vertex_orbit(v) && without.vertex_orbit(u) == without.vertex_orbit(v) {
                offending.push((u, v));
            }
        }
    }
    AttachmentReport {
        valid: offending.is_empty(),
        offending_pairs: offending,
    }
}

/// Checks `|Orb(G ∪ C, C)| |Aut(G)| |Aut(C)| = |Aut(G ∪ C)|`.
pub fn lemma_g1_check(g: &LabeledGraph, c: &LabeledGraph) -> bool {
    let union = g.disjoint_union(c);
    let c_nodes: Vec<usize> = (g.n()..union.n()).collect();
    let orbit = symmetry::subgraph_orbit_size(&union, &c_nodes).expect("valid node set") as u128;
    let lhs = orbit
        .checked_mul(symmetry::automorphism_group(g).order())
        .and_then(|x| x.checked_mul(symmetry::automorphism_group(c).order()));
    lhs == Some(symmetry::automorphism_group(&union).order())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_orders() {
        let v = Vocabulary::standard();
        let orders: Vec<u128> = v.fragments().iter().map(|f| f.aut_order()).collect();
        assert_eq!(orders, vec![1, 2, 6, 6, 8]);
        assert_eq!(v.most_symmetric(), 4);
        for f in v.fragments() {
            assert!(validate_attachment_points(f).valid, "{}", f.name);
        }
    }

    #[test]
    fn alternating_hexagon_is_flagged() {
        let edges: Vec<_> = (0..6).map(|i| (i, (i + 1) % 6, 0)).collect();
        let g = LabeledGraph::from_edges(vec![0; 6], &edges).unwrap();
        let f = Fragment::new("hex", g, vec![0, 2, 4], None).unwrap();
        let r = validate_attachment_points(&f);
        assert!(!r.valid);
        assert!(r.offending_pairs.contains(&(0, 1)));
        let single = Fragment::new("hex1", f.graph.clone(), vec![0], None).unwrap();
        assert!(!validate_attachment_points(&single).valid);
    }

    #[test]
    fn one_point_path_is_valid() {
        let g = LabeledGraph::from_edges(vec![0, 1], &[(0, 1, 0)]).unwrap();
        let f = Fragment::new("p", g, vec![0], None).unwrap();
        assert!(validate_attachment_points(&f).valid);
    }

    #[test]
    fn lemma_on_triangle_and_node() {
        let t = LabeledGraph::from_edges(vec![0; 3], &[(0, 1, 0), (1, 2, 0), (0, 2, 0)]).unwrap();
        let node = LabeledGraph::with_labels(vec![1]);
        assert!(lemma_g1_check(&node, &t));
        let asym = LabeledGraph::from_edges(vec![0, 1, 2], &[(0, 1, 0), (1, 2, 0)]).unwrap();
        assert!(lemma_g1_check(&asym, &asym));
        let u = asym.disjoint_union(&asym);
        assert_eq!(symmetry::automorphism_group(&u).order(), 2);
        assert_eq!(symmetry::subgraph_orbit_size(&u, &[3, 4, 5]).unwrap(), 2);
    }

    #[test]
    fn vocabulary_json() {
        let s = r#"[{"name":"hex","n":6,"node_labels":[0,0,0,0,0,0],
            "edges":[[0,1,0],[1,2,0],[2,3,0],[3,4,0],[4,5,0],[5,0,0]],
            "attachment_points":[0,1,2,3,4,5],"approx_N":6},
            {"n":1,"node_labels":[1],"edges":[],"attachment_points":[0]}]"#;
        let v = Vocabulary::from_json(s).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.get(0).unwrap().aut_order(), 12);
        assert_eq!(v.get(0).unwrap().approx_n, Some(6));
        assert!(Vocabulary::from_json(r#"[{"n":1,"node_labels":[0],"edges":[],"bogus":1}]"#).is_err());
        assert!(Vocabulary::from_json(r#"[{"n":1,"node_labels":[0],"edges":[],"attachment_points":[3]}]"#).is_err());
    }
}
