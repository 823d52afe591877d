//! Random-walk positional encodings for approximate orbit detection.

use crate::env::{ActionClass, ClassKind, GraphAction};
use crate::graph::LabeledGraph;

pub const PE_DIM: usize = 8;
const REL_TOL: f64 = 1e-9;

/// Per-node encodings: row `v` holds `[(A D⁻¹)^k c]_v` for `k = 0..8`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeVectors {
    pub nodes: Vec<[f64; PE_DIM]>,
}

/// `c_v = log(t_v + 2)`; isolated nodes get a zero column in `D⁻¹`.
pub fn pe_vectors(g: &LabeledGraph) -> PeVectors {
    let n = g.n();
    let mut cur: Vec<f64> = (0..n).map(|v| (g.label(v) as f64 + 2.0).ln()).collect();
    let mut nodes = vec![[0.0; PE_DIM]; n];
    for k in 0..PE_DIM {
        for v in 0..n {
            nodes[v][k] = cur[v];
        }
        let scaled: Vec<f64> = (0..n)
            .map(|w| if g.degree(w) == 0 { 0.0 } else { cur[w] / g.degree(w) as f64 })
            .collect();
        cur = (0..n).map(|u| g.neighbors(u).map(|(w, _)| scaled[w]).sum()).collect();
    }
    PeVectors { nodes }
}

/// Encoding of an action: type, value, and the summed PE of its targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionPe {
    pub tag: u8,
    pub value: u32,
    pub pe: Option<[f64; PE_DIM]>,
}

impl PeVectors {
    fn sum(&self, vs: &[usize]) -> [f64; PE_DIM] {
        let mut out = [0.0; PE_DIM];
        for &v in vs {
            for (o, x) in out.iter_mut().zip(&self.nodes[v]) {
                *o += x;
            }
        }
        out
    }

    pub fn action(&self, a: &GraphAction) -> ActionPe {
        let (value, targets): (u32, Option<Vec<usize>>) = match a {
            GraphAction::AddNode { anchor, label } => (*label, anchor.map(|u| vec![u])),
            GraphAction::AddEdge { u, v, label } => (*label, Some(vec![*u, *v])),
            GraphAction::SetNodeAttribute { u, value } => (*value, Some(vec![*u])),
            GraphAction::SetEdgeAttribute { u, v, value } => (*value, Some(vec![*u, *v])),
            GraphAction::AddFragment { fragment } => (*fragment as u32, None),
            GraphAction::AddFragmentEdge { u, v }
            | GraphAction::RemoveEdge { u, v }
            | GraphAction::UnsetEdgeAttribute { u, v }
            | GraphAction::RemoveFragmentEdge { u, v } => (0, Some(vec![*u, *v])),
            GraphAction::RemoveNode { v } | GraphAction::UnsetNodeAttribute { u: v } => (0, Some(vec![*v])),
            GraphAction::RemoveFragment { nodes } => (0, Some(nodes.clone())),
            GraphAction::Stop | GraphAction::Unstop => (0, None),
        };
        ActionPe {
            tag: a.tag(),
            value,
            pe: targets.map(|t| self.sum(&t)),
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs()) + 1e-300
}

pub fn pe_match(a: &ActionPe, b: &ActionPe) -> bool {
    a.tag == b.tag
        && a.value == b.value
        && match (&a.pe, &b.pe) {
            (None, None) => true,
            (Some(x), Some(y)) => x.iter().zip(y).all(|(p, q)| close(*p, *q)),
            _ => false,
        }
}

/// Groups actions whose encodings match the first member of a class.
pub fn pe_group(g: &LabeledGraph, actions: &[GraphAction]) -> Vec<ActionClass> {
    let pe = pe_vectors(g);
    let enc: Vec<ActionPe> = actions.iter().map(|a| pe.action(a)).collect();
    let mut classes: Vec<(usize, ActionClass)> = Vec::new();
    for (i, a) in actions.iter().enumerate() {
        match classes.iter_mut().find(|(r, _)| pe_match(&enc[*r], &enc[i])) {
            Some((_, c)) => {
                c.members.push(a.clone());
                c.multiplicity += 1;
            }
            None => classes.push((
                i,
                ActionClass {
                    representative: a.clone(),
                    members: vec![a.clone()],
                    multiplicity: 1,
                    kind: ClassKind::Orbit,
                },
            )),
        }
    }
    classes.into_iter().map(|(_, c)| c).collect()
}

/// Number of actions in `actions` whose encoding matches `target`.
pub fn pe_count(encodings: &[ActionPe], target: &ActionPe) -> usize {
    encodings.iter().filter(|e| pe_match(e, target)).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolated_nodes() {
        let pe = pe_vectors(&LabeledGraph::empty(2));
        assert_eq!(pe.nodes[0], pe.nodes[1]);
        assert!((pe.nodes[0][0] - 2f64.ln()).abs() < 1e-15);
        assert!(pe.nodes[0][1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn star_leaves_match() {
        let g = LabeledGraph::from_edges(vec![0; 3], &[(0, 1, 0), (0, 2, 0)]).unwrap();
        let pe = pe_vectors(&g);
        assert_eq!(pe.nodes[1], pe.nodes[2]);
        assert_ne!(pe.nodes[0], pe.nodes[1]);
        let acts = vec![
            GraphAction::AddNode { anchor: Some(0), label: 0 },
            GraphAction::AddNode { anchor: Some(1), label: 0 },
            GraphAction::AddNode { anchor: Some(2), label: 0 },
        ];
        let classes = pe_group(&g, &acts);
        assert_eq!(classes.len(), 2);
        assert_eq!(classes[1].multiplicity, 2);
    }

    #[test]
    fn first_powers_by_hand() {
        // path 0-1-2, c = log 2: k=1 gives A D⁻¹ c
        let g = LabeledGraph::from_edges(vec![0; 3], &[(0, 1, 0), (1, 2, 0)]).unwrap();
        let pe = pe_vectors(&g);
        let c = 2f64.ln();
        assert!((pe.nodes[0][1] - c / 2.0).abs() < 1e-15);
        assert!((pe.nodes[1][1] - 2.0 * c).abs() < 1e-15);
    }
}
