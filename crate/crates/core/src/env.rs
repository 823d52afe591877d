//! Graph-building environments and their action catalog.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fragments::{self, Vocabulary, INTER_EDGE, STEM_FREE, STEM_USED};
use crate::graph::{LabeledGraph, TERMINATED};
use crate::symmetry::{self, AutomorphismGroup};

/// Graph attribute set while a freshly added fragment awaits its edge.
pub const PENDING: &str = "pending";

/// Concrete forward and backward graph actions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum GraphAction {
    AddNode { anchor: Option<usize>, label: u32 },
    AddEdge { u: usize, v: usize, label: u32 },
    SetNodeAttribute { u: usize, value: u32 },
    SetEdgeAttribute { u: usize, v: usize, value: u32 },
    Stop,
    AddFragment { fragment: usize },
    AddFragmentEdge { u: usize, v: usize },
    RemoveNode { v: usize },
    RemoveEdge { u: usize, v: usize },
    UnsetNodeAttribute { u: usize },
    UnsetEdgeAttribute { u: usize, v: usize },
    Unstop,
    RemoveFragment { nodes: Vec<usize> },
    RemoveFragmentEdge { u: usize, v: usize },
}

impl GraphAction {
    pub fn is_forward(&self) -> bool {
        matches!(
            self,
            GraphAction::AddNode { .. }
                | GraphAction::AddEdge { .. }
                | GraphAction::SetNodeAttribute { .. }
                | GraphAction::SetEdgeAttribute { .. }
                | GraphAction::Stop
                | GraphAction::AddFragment { .. }
                | GraphAction::AddFragmentEdge { .. }
        )
    }

    pub fn tag(&self) -> u8 {
        match self {
            GraphAction::AddNode { .. } => 0,
            GraphAction::AddEdge { .. } => 1,
            GraphAction::SetNodeAttribute { .. } => 2,
            GraphAction::SetEdgeAttribute { .. } => 3,
            GraphAction::Stop => 4,
            GraphAction::AddFragment { .. } => 5,
            GraphAction::AddFragmentEdge { .. } => 6,
            GraphAction::RemoveNode { .. } => 7,
            GraphAction::RemoveEdge { .. } => 8,
            GraphAction::UnsetNodeAttribute { .. } => 9,
            GraphAction::UnsetEdgeAttribute { .. } => 10,
            GraphAction::Unstop => 11,
            GraphAction::RemoveFragment { .. } => 12,
            GraphAction::RemoveFragmentEdge { .. } => 13,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GraphAction::AddNode { .. } => "AddNode",
            GraphAction::AddEdge { .. } => "AddEdge",
            GraphAction::SetNodeAttribute { .. } => "SetNodeAttribute",
            GraphAction::SetEdgeAttribute { .. } => "SetEdgeAttribute",
            GraphAction::Stop => "Stop",
            GraphAction::AddFragment { .. } => "AddFragment",
            GraphAction::AddFragmentEdge { .. } => "AddFragmentEdge",
            GraphAction::RemoveNode { .. } => "RemoveNode",
            GraphAction::RemoveEdge { .. } => "RemoveEdge",
            GraphAction::UnsetNodeAttribute { .. } => "UnsetNodeAttribute",
            GraphAction::UnsetEdgeAttribute { .. } => "UnsetEdgeAttribute",
            GraphAction::Unstop => "Unstop",
            GraphAction::RemoveFragment { .. } => "RemoveFragment",
            GraphAction::RemoveFragmentEdge { .. } => "RemoveFragmentEdge",
        }
    }

    /// Same action with vertex indices mapped through `p`.
    pub fn relabel(&self, p: &[usize]) -> GraphAction {
        let pair = |u: usize, v: usize| {
            let (a, b) = (p[u], p[v]);
            if a < b {
                (a, b)
            } else {
                (b, a)
            }
        };
        match self {
            GraphAction::AddNode { anchor, label } => GraphAction::AddNode {
                anchor: anchor.map(|a| p[a]),
                label: *label,
            },
            GraphAction::AddEdge { u, v, label } => {
                let (u, v) = pair(*u, *v);
                GraphAction::AddEdge { u, v, label: *label }
            }
            GraphAction::SetNodeAttribute { u, value } => GraphAction::SetNodeAttribute { u: p[*u], value: *value },
            GraphAction::SetEdgeAttribute { u, v, value } => {
                let (u, v) = pair(*u, *v);
                GraphAction::SetEdgeAttribute { u, v, value: *value }
            }
            GraphAction::AddFragmentEdge { u, v } => {
                let (u, v) = pair(*u, *v);
                GraphAction::AddFragmentEdge { u, v }
            }
            GraphAction::RemoveNode { v } => GraphAction::RemoveNode { v: p[*v] },
            GraphAction::RemoveEdge { u, v } => {
                let (u, v) = pair(*u, *v);
                GraphAction::RemoveEdge { u, v }
            }
            GraphAction::UnsetNodeAttribute { u } => GraphAction::UnsetNodeAttribute { u: p[*u] },
            GraphAction::UnsetEdgeAttribute { u, v } => {
                let (u, v) = pair(*u, *v);
                GraphAction::UnsetEdgeAttribute { u, v }
            }
            GraphAction::RemoveFragment { nodes } => {
                let mut nodes: Vec<usize> = nodes.iter().map(|&v| p[v]).collect();
                nodes.sort_unstable();
                GraphAction::RemoveFragment { nodes }
            }
            GraphAction::RemoveFragmentEdge { u, v } => {
                let (u, v) = pair(*u, *v);
                GraphAction::RemoveFragmentEdge { u, v }
            }
            a @ (GraphAction::Stop | GraphAction::Unstop | GraphAction::AddFragment { .. }) => a.clone(),
        }
    }
}

impl fmt::Display for GraphAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphAction::AddNode { anchor: Some(a), label } => write!(f, "AddNode({a},{label})"),
            GraphAction::AddNode { anchor: None, label } => write!(f, "AddNode(-,{label})"),
            GraphAction::AddEdge { u, v, label } => write!(f, "AddEdge({u},{v},{label})"),
            GraphAction::SetNodeAttribute { u, value } => write!(f, "SetNodeAttribute({u},{value})"),
            GraphAction::SetEdgeAttribute { u, v, value } => write!(f, "SetEdgeAttribute({u},{v},{value})"),
            GraphAction::AddFragment { fragment } => write!(f, "AddFragment({fragment})"),
            GraphAction::AddFragmentEdge { u, v } => write!(f, "AddFragmentEdge({u},{v})"),
            GraphAction::RemoveNode { v } => write!(f, "RemoveNode({v})"),
            GraphAction::RemoveEdge { u, v } => write!(f, "RemoveEdge({u},{v})"),
            GraphAction::UnsetNodeAttribute { u } => write!(f, "UnsetNodeAttribute({u})"),
            GraphAction::UnsetEdgeAttribute { u, v } => write!(f, "UnsetEdgeAttribute({u},{v})"),
            GraphAction::RemoveFragment { nodes } => write!(f, "RemoveFragment({nodes:?})"),
            GraphAction::RemoveFragmentEdge { u, v } => write!(f, "RemoveFragmentEdge({u},{v})"),
            GraphAction::Stop | GraphAction::Unstop => f.write_str(self.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Illustrative,
    Clique,
    Cycle,
    Fragment,
    Catalog,
}

impl std::str::FromStr for EnvKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown env {s}")))
    }
}

/// How graphs grow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    /// Fixed node set; only edges are added.
    EdgesOnly,
    /// Connected growth by attaching nodes and closing edges.
    NodeByNode,
    /// Fragment tree assembly.
    Fragments,
}

/// Legality limits.
#[derive(Debug, Clone, PartialEq)]
pub struct Rules {
    pub style: Style,
    pub max_nodes: usize,
    pub max_edges: usize,
    pub max_degree: usize,
    pub node_types: u32,
    /// Values `1..=attribute_values` for attribute setting; 0 disables it.
    pub attribute_values: u32,
    pub max_fragments: usize,
}

/// Terminal reward definitions.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardFn {
    Constant(f64),
    /// `floor + weight * #(4-cliques with at least three nodes of one type)`.
    Cliques { floor: f64, weight: f64 },
    /// `base + cyclomatic number`.
    Cycles { base: f64 },
    /// `base + per_fragment * #fragments`.
    Fragments { base: f64, per_fragment: f64 },
    /// `base + per_node * n`.
    Size { base: f64, per_node: f64 },
}

/// Structured environment configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    /// illustrative, clique, cycle, fragment or catalog
    #[arg(long)]
    pub env: Option<EnvKind>,
    #[arg(long)]
    pub max_nodes: Option<usize>,
    #[arg(long)]
    pub max_edges: Option<usize>,
    #[arg(long)]
    pub max_degree: Option<usize>,
    #[arg(long)]
    pub node_types: Option<u32>,
    #[arg(long)]
    pub reward_floor: Option<f64>,
    #[arg(long)]
    pub max_fragments: Option<usize>,
    /// Fragment vocabulary JSON
    #[arg(long)]
    pub vocabulary: Option<PathBuf>,
}

impl EnvConfig {
    /// Fields set in `over` win.
    pub fn merge(self, over: EnvConfig) -> EnvConfig {
        EnvConfig {
            env: over.env.or(self.env),
            max_nodes: over.max_nodes.or(self.max_nodes),
            max_edges: over.max_edges.or(self.max_edges),
            max_degree: over.max_degree.or(self.max_degree),
            node_types: over.node_types.or(self.node_types),
            reward_floor: over.reward_floor.or(self.reward_floor),
            max_fragments: over.max_fragments.or(self.max_fragments),
            vocabulary: over.vocabulary.or(self.vocabulary),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Environment {
    pub name: String,
    pub kind: EnvKind,
    pub initial: LabeledGraph,
    pub rules: Rules,
    pub reward_fn: RewardFn,
    pub vocabulary: Option<Vocabulary>,
}

/// Grouping criterion for action classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassKind {
    Orbit,
    Transition,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionClass {
    pub representative: GraphAction,
    pub members: Vec<GraphAction>,
    pub multiplicity: usize,
    pub kind: ClassKind,
}

fn illegal(a: &GraphAction, rule: &str) -> Error {
    Error::IllegalAction {
        action: a.to_string(),
        rule: rule.to_string(),
    }
}

impl Environment {
    /// Six fixed nodes, AddEdge and Stop, uniform reward.
    pub fn illustrative() -> Self {
        Environment {
            name: "illustrative".into(),
            kind: EnvKind::Illustrative,
            initial: LabeledGraph::empty(6),
            rules: Rules {
                style: Style::EdgesOnly,
                max_nodes: 6,
                max_edges: usize::MAX,
                max_degree: usize::MAX,
                node_types: 1,
                attribute_values: 0,
                max_fragments: 0,
            },
            reward_fn: RewardFn::Constant(1.0),
            vocabulary: None,
        }
    }

    /// Two node types, up to seven nodes; rewards 4-cliques dominated by one type.
    pub fn clique() -> Self {
        Self::clique_with(7, 0.1)
    }

    pub fn clique_with(max_nodes: usize, floor: f64) -> Self {
        Environment {
            name: "clique".into(),
            kind: EnvKind::Clique,
            initial: LabeledGraph::new(),
            rules: Rules {
                style: Style::NodeByNode,
                max_nodes,
                max_edges: usize::MAX,
                max_degree: usize::MAX,
                node_types: 2,
                attribute_values: 0,
                max_fragments: 0,
            },
            reward_fn: RewardFn::Cliques { floor, weight: 1.0 },
            vocabulary: None,
        }
    }

    /// Up to ten nodes, ten edges, degree four; rewards cycles.
    pub fn cycle() -> Self {
        Self::cycle_with(10, 10, 4)
    }

    pub fn cycle_with(max_nodes: usize, max_edges: usize, max_degree: usize) -> Self {
        Environment {
            name: "cycle".into(),
            kind: EnvKind::Cycle,
            initial: LabeledGraph::new(),
            rules: Rules {
                style: Style::NodeByNode,
                max_nodes,
                max_edges,
                max_degree,
                node_types: 1,
                attribute_values: 0,
                max_fragments: 0,
            },
            reward_fn: RewardFn::Cycles { base: 1.0 },
            vocabulary: None,
        }
    }

    pub fn fragment(vocabulary: Vocabulary, max_fragments: usize) -> Self {
        Environment {
            name: "fragment".into(),
            kind: EnvKind::Fragment,
            initial: LabeledGraph::new(),
            rules: Rules {
                style: Style::Fragments,
                max_nodes: usize::MAX,
                max_edges: usize::MAX,
                max_degree: usize::MAX,
                node_types: 1,
                attribute_values: 0,
                max_fragments,
            },
            reward_fn: RewardFn::Fragments {
                base: 1.0,
                per_fragment: 1.0,
            },
            vocabulary: Some(vocabulary),
        }
    }

    /// Node-by-node growth with node and edge attribute setting enabled.
    pub fn catalog(max_nodes: usize) -> Self {
        Environment {
            name: "catalog".into(),
            kind: EnvKind::Catalog,
            initial: LabeledGraph::new(),
            rules: Rules {
                style: Style::NodeByNode,
                max_nodes,
                max_edges: usize::MAX,
                max_degree: usize::MAX,
                node_types: 1,
                attribute_values: 2,
                max_fragments: 0,
            },
            reward_fn: RewardFn::Size {
                base: 1.0,
                per_node: 1.0,
            },
            vocabulary: None,
        }
    }

    pub fn from_config(cfg: &EnvConfig) -> Result<Self> {
        let kind = cfg.env.ok_or_else(|| Error::Config("missing env".into()))?;
        let mut env = match kind {
            EnvKind::Illustrative => Self::illustrative(),
            EnvKind::Clique => Self::clique(),
            EnvKind::Cycle => Self::cycle(),
            EnvKind::Catalog => Self::catalog(4),
            EnvKind::Fragment => {
                let vocab = match &cfg.vocabulary {
                    Some(p) => Vocabulary::load(p)?,
                    None => Vocabulary::standard(),
                };
                Self::fragment(vocab, cfg.max_fragments.unwrap_or(3))
            }
        };
        if kind == EnvKind::Illustrative {
            if let Some(n) = cfg.max_nodes {
                env.initial = LabeledGraph::empty(n);
                env.rules.max_nodes = n;
            }
        } else if let Some(n) = cfg.max_nodes {
            env.rules.max_nodes = n;
        }
        if let Some(m) = cfg.max_edges {
            env.rules.max_edges = m;
        }
        if let Some(d) = cfg.max_degree {
            env.rules.max_degree = d;
        }
        if let Some(t) = cfg.node_types {
            if t == 0 {
                return Err(Error::Config("node_types must be positive".into()));
            }
            env.rules.node_types = t;
        }
        if let Some(f) = cfg.max_fragments {
            env.rules.max_fragments = f;
        }
        if let Some(floor) = cfg.reward_floor {
            if floor <= 0.0 {
                return Err(Error::Config("reward_floor must be positive".into()));
            }
            match &mut env.reward_fn {
                RewardFn::Constant(c) => *c = floor,
                RewardFn::Cliques { floor: f, .. } => *f = floor,
                RewardFn::Cycles { base } | RewardFn::Fragments { base, .. } | RewardFn::Size { base, .. } => *base = floor,
            }
        }
        Ok(env)
    }

    pub fn vocab(&self) -> Result<&Vocabulary> {
        self.vocabulary
            .as_ref()
            .ok_or_else(|| Error::Config("environment has no fragment vocabulary".into()))
    }

    fn fragment_count(g: &LabeledGraph) -> usize {
        g.components_where(|l| !fragments::is_inter(l)).len()
    }

    fn free_stems(g: &LabeledGraph) -> impl Iterator<Item = usize> + '_ {
        (0..g.n()).filter(|&v| fragments::stem(g.label(v)) == STEM_FREE)
    }

    /// Legal concrete forward actions in a deterministic sorted order.
    pub fn forward_actions(&self, g: &LabeledGraph) -> Vec<GraphAction> {
        if g.is_terminated() {
            return Vec::new();
        }
        let r = &self.rules;
        let n = g.n();
        let m = g.num_edges();
        let mut out = Vec::new();
        match r.style {
            Style::EdgesOnly => {
                for u in 0..n {
                    for v in u + 1..n {
                        if !g.has_edge(u, v) {
                            out.push(GraphAction::AddEdge { u, v, label: 0 });
                        }
                    }
                }
                if g.is_connected() {
                    out.push(GraphAction::Stop);
                }
            }
            Style::NodeByNode => {
                if n == 0 {
                    for label in 0..r.node_types {
                        out.push(GraphAction::AddNode { anchor: None, label });
                    }
                    return out;
                }
                if n < r.max_nodes && m < r.max_edges {
                    for u in 0..n {
                        if g.degree(u) < r.max_degree {
                            for label in 0..r.node_types {
                                out.push(GraphAction::AddNode { anchor: Some(u), label });
                            }
                        }
                    }
                }
                if m < r.max_edges {
                    for u in 0..n {
                        for v in u + 1..n {
                            if !g.has_edge(u, v) && g.degree(u) < r.max_degree && g.degree(v) < r.max_degree {
                                out.push(GraphAction::AddEdge { u, v, label: 0 });
                            }
                        }
                    }
                }
                if r.attribute_values > 0 {
                    for u in 0..n {
                        if g.label(u) == 0 {
                            for value in 1..=r.attribute_values {
                                out.push(GraphAction::SetNodeAttribute { u, value });
                            }
                        }
                    }
                    for (u, v, l) in g.edges() {
                        if l == 0 {
                            for value in 1..=r.attribute_values {
                                out.push(GraphAction::SetEdgeAttribute { u, v, value });
                            }
                        }
                    }
                }
                out.push(GraphAction::Stop);
            }
            Style::Fragments => {
                let vocab = self.vocabulary.as_ref().expect("fragment env has a vocabulary");
                if g.attr(PENDING) != 0 {
                    let comps = g.components();
                    let mut comp_of = vec![0; n];
                    for (i, c) in comps.iter().enumerate() {
                        for &v in c {
                            comp_of[v] = i;
                        }
                    }
                    let stems: Vec<usize> = Self::free_stems(g).collect();
                    for (i, &u) in stems.iter().enumerate() {
                        for &v in &stems[i + 1..] {
                            if comp_of[u] != comp_of[v] {
                                out.push(GraphAction::AddFragmentEdge { u, v });
                            }
                        }
                    }
                    return out;
                }
                if n == 0 {
                    for fragment in 0..vocab.len() {
                        out.push(GraphAction::AddFragment { fragment });
                    }
                    return out;
                }
                if Self::fragment_count(g) < r.max_fragments && Self::free_stems(g).next().is_some() {
                    for (fragment, f) in vocab.fragments().iter().enumerate() {
                        if f.num_attachment_points() > 0 {
                            out.push(GraphAction::AddFragment { fragment });
                        }
                    }
                }
                out.push(GraphAction::Stop);
            }
        }
        out.sort();
        out
    }

    /// Checks a forward action, naming the violated rule.
    pub fn check_forward(&self, g: &LabeledGraph, a: &GraphAction) -> Result<()> {
        let r = &self.rules;
        let n = g.n();
        if g.is_terminated() {
            return Err(illegal(a, "graph is terminated"));
        }
        let in_range = |v: usize| v < n;
        let pending = g.attr(PENDING) != 0;
        match (r.style, a) {
            (Style::EdgesOnly, GraphAction::AddEdge { u, v, label }) => {
                if !(in_range(*u) && in_range(*v)) || u >= v {
                    return Err(illegal(a, "vertex out of range or unordered pair"));
                }
                if *label != 0 {
                    return Err(illegal(a, "edge label"));
                }
                if g.has_edge(*u, *v) {
                    return Err(illegal(a, "edge already present"));
                }
            }
            (Style::EdgesOnly | Style::NodeByNode, GraphAction::Stop) => {
                if n == 0 {
                    return Err(illegal(a, "empty graph cannot stop"));
                }
                if r.style == Style::EdgesOnly && !g.is_connected() {
                    return Err(illegal(a, "graph must be connected to stop"));
                }
            }
            (Style::NodeByNode, GraphAction::AddNode { anchor, label }) => {
                if *label >= r.node_types {
                    return Err(illegal(a, "node label outside alphabet"));
                }
                match anchor {
                    None if n > 0 => return Err(illegal(a, "new node must attach to an anchor")),
                    None => {}
                    Some(u) => {
                        if !in_range(*u) {
                            return Err(illegal(a, "anchor out of range"));
                        }
                        if n >= r.max_nodes {
                            return Err(illegal(a, "max_nodes"));
                        }
                        if g.num_edges() >= r.max_edges {
                            return Err(illegal(a, "max_edges"));
                        }
                        if g.degree(*u) >= r.max_degree {
                            return Err(illegal(a, "max_degree"));
                        }
                    }
                }
            }
            (Style::NodeByNode, GraphAction::AddEdge { u, v, label }) => {
                if !(in_range(*u) && in_range(*v)) || u >= v {
                    return Err(illegal(a, "vertex out of range or unordered pair"));
                }
                if *label != 0 {
                    return Err(illegal(a, "edge label"));
                }
                if g.has_edge(*u, *v) {
                    return Err(illegal(a, "edge already present"));
                }
                if g.num_edges() >= r.max_edges {
                    return Err(illegal(a, "max_edges"));
                }
                if g.degree(*u) >= r.max_degree || g.degree(*v) >= r.max_degree {
                    return Err(illegal(a, "max_degree"));
                }
            }
            (Style::NodeByNode, GraphAction::SetNodeAttribute { u, value }) => {
                if !in_range(*u) || *value == 0 || *value > r.attribute_values {
                    return Err(illegal(a, "attribute value or vertex out of range"));
                }
                if g.label(*u) != 0 {
                    return Err(illegal(a, "node attribute already set"));
                }
            }
            (Style::NodeByNode, GraphAction::SetEdgeAttribute { u, v, value }) => {
                if !(in_range(*u) && in_range(*v)) || u >= v || *value == 0 || *value > r.attribute_values {
                    return Err(illegal(a, "attribute value or vertex out of range"));
                }
                if g.edge_label(*u, *v) != Some(0) {
                    return Err(illegal(a, "edge missing or attribute already set"));
                }
            }
            (Style::Fragments, GraphAction::AddFragment { fragment }) => {
                let vocab = self.vocab()?;
                let f = vocab.get(*fragment).ok_or_else(|| illegal(a, "unknown fragment"))?;
                if pending {
                    return Err(illegal(a, "pending fragment must be attached first"));
                }
                if n > 0 {
                    if Self::fragment_count(g) >= r.max_fragments {
                        return Err(illegal(a, "max_fragments"));
                    }
                    if Self::free_stems(g).next().is_none() || f.num_attachment_points() == 0 {
                        return Err(illegal(a, "no free attachment point"));
                    }
                }
            }
            (Style::Fragments, GraphAction::AddFragmentEdge { u, v }) => {
                if !pending {
                    return Err(illegal(a, "no pending fragment"));
                }
                if !(in_range(*u) && in_range(*v)) || u >= v {
                    return Err(illegal(a, "vertex out of range or unordered pair"));
                }
                if fragments::stem(g.label(*u)) != STEM_FREE || fragments::stem(g.label(*v)) != STEM_FREE {
                    return Err(illegal(a, "endpoint is not a free attachment point"));
                }
                let comps = g.components();
                if comps.iter().any(|c| c.contains(u) && c.contains(v)) {
                    return Err(illegal(a, "endpoints already connected"));
                }
            }
            (Style::Fragments, GraphAction::Stop) => {
                if n == 0 || pending {
                    return Err(illegal(a, "stop needs a complete assembly"));
                }
            }
            _ => return Err(illegal(a, "action type not available in this environment")),
        }
        Ok(())
    }

    /// Applies a forward action after checking legality.
    pub fn apply(&self, g: &LabeledGraph, a: &GraphAction) -> Result<LabeledGraph> {
        self.check_forward(g, a)?;
        Ok(self.apply_unchecked(g, a))
    }

    pub(crate) fn apply_unchecked(&self, g: &LabeledGraph, a: &GraphAction) -> LabeledGraph {
        let mut h = g.clone();
        match a {
            GraphAction::AddNode { anchor, label } => {
                let w = h.add_node(*label);
                if let Some(u) = anchor {
                    h.add_edge(*u, w, 0).expect("legal");
                }
            }
            GraphAction::AddEdge { u, v, label } => h.add_edge(*u, *v, *label).expect("legal"),
            GraphAction::SetNodeAttribute { u, value } => h.set_label(*u, *value),
            GraphAction::SetEdgeAttribute { u, v, value } => h.set_edge_label(*u, *v, *value),
            GraphAction::Stop => h.set_attr(TERMINATED, 1),
            GraphAction::AddFragment { fragment } => {
                let f = self.vocabulary.as_ref().expect("fragment env").get(*fragment).expect("legal");
                let was_empty = h.n() == 0;
                h = h.disjoint_union(f.encoded());
                if !was_empty {
                    h.set_attr(PENDING, 1);
                }
            }
            GraphAction::AddFragmentEdge { u, v } => {
                h.add_edge(*u, *v, INTER_EDGE).expect("legal");
                h.set_label(*u, fragments::with_stem(h.label(*u), STEM_USED));
                h.set_label(*v, fragments::with_stem(h.label(*v), STEM_USED));
                h.set_attr(PENDING, 0);
            }
            _ => unreachable!("backward action applied forward"),
        }
        h
    }

    /// Legal concrete backward actions in a deterministic sorted order.
    pub fn backward_actions(&self, g: &LabeledGraph) -> Vec<GraphAction> {
        if g.is_terminated() {
            return vec![GraphAction::Unstop];
        }
        let r = &self.rules;
        let n = g.n();
        let mut out = Vec::new();
        match r.style {
            Style::EdgesOnly => {
                for (u, v, _) in g.edges() {
                    out.push(GraphAction::RemoveEdge { u, v });
                }
            }
            Style::NodeByNode => {
                for v in 0..n {
                    if self.check_backward(g, &GraphAction::RemoveNode { v }).is_ok() {
                        out.push(GraphAction::RemoveNode { v });
                    }
                    if r.attribute_values > 0 && g.label(v) != 0 {
                        out.push(GraphAction::UnsetNodeAttribute { u: v });
                    }
                }
                for (u, v, l) in g.edges() {
                    if l == 0 && !g.is_bridge(u, v) {
                        out.push(GraphAction::RemoveEdge { u, v });
                    }
                    if r.attribute_values > 0 && l != 0 {
                        out.push(GraphAction::UnsetEdgeAttribute { u, v });
                    }
                }
            }
            Style::Fragments => {
                if n == 0 {
                    return out;
                }
                if g.attr(PENDING) != 0 {
                    for c in g.components() {
                        let b = GraphAction::RemoveFragment { nodes: c };
                        if self.check_backward(g, &b).is_ok() {
                            out.push(b);
                        }
                    }
                } else if Self::fragment_count(g) == 1 {
                    out.push(GraphAction::RemoveFragment {
                        nodes: (0..n).collect(),
                    });
                } else {
                    for (u, v, l) in g.edges() {
                        if fragments::is_inter(l) {
                            let b = GraphAction::RemoveFragmentEdge { u, v };
                            if self.check_backward(g, &b).is_ok() {
                                out.push(b);
                            }
                        }
                    }
                }
            }
        }
        out.sort();
        out
    }

    /// Checks a backward action: the predecessor must be legal and the
    /// matching forward action must reproduce `g`.
    pub fn check_backward(&self, g: &LabeledGraph, b: &GraphAction) -> Result<()> {
        let r = &self.rules;
        let n = g.n();
        let in_range = |v: usize| v < n;
        if g.is_terminated() {
            return match b {
                GraphAction::Unstop => Ok(()),
                _ => Err(illegal(b, "terminated graph only allows Unstop")),
            };
        }
        match (r.style, b) {
            (Style::EdgesOnly, GraphAction::RemoveEdge { u, v }) => {
                if !(in_range(*u) && in_range(*v)) || u >= v || !g.has_edge(*u, *v) {
                    return Err(illegal(b, "edge not present"));
                }
            }
            (Style::NodeByNode, GraphAction::RemoveNode { v }) => {
                if !in_range(*v) {
                    return Err(illegal(b, "vertex out of range"));
                }
                if g.label(*v) >= r.node_types {
                    return Err(illegal(b, "node label cannot be produced by AddNode"));
                }
                if n > 1 {
                    let mut nb = g.neighbors(*v);
                    match (nb.next(), nb.next()) {
                        (Some((_, 0)), None) => {}
                        _ => return Err(illegal(b, "node must be a leaf joined by an unlabeled edge")),
                    }
                }
            }
            (Style::NodeByNode, GraphAction::RemoveEdge { u, v }) => {
                if !(in_range(*u) && in_range(*v)) || u >= v || g.edge_label(*u, *v) != Some(0) {
                    return Err(illegal(b, "unlabeled edge not present"));
                }
                if g.is_bridge(*u, *v) {
                    return Err(illegal(b, "removal disconnects the graph"));
                }
            }
            (Style::NodeByNode, GraphAction::UnsetNodeAttribute { u }) => {
                if !in_range(*u) || g.label(*u) == 0 || r.attribute_values == 0 {
                    return Err(illegal(b, "node attribute not set"));
                }
            }
            (Style::NodeByNode, GraphAction::UnsetEdgeAttribute { u, v }) => {
                if !(in_range(*u) && in_range(*v)) || u >= v || r.attribute_values == 0 {
                    return Err(illegal(b, "vertex out of range"));
                }
                match g.edge_label(*u, *v) {
                    Some(l) if l != 0 => {}
                    _ => return Err(illegal(b, "edge attribute not set")),
                }
            }
            (Style::Fragments, GraphAction::RemoveFragment { nodes }) => {
                let vocab = self.vocab()?;
                if nodes.is_empty() || nodes.iter().any(|&v| !in_range(v)) || nodes.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(illegal(b, "bad node set"));
                }
                let comps = g.components();
                if !comps.iter().any(|c| c == nodes) {
                    return Err(illegal(b, "node set must be a whole component"));
                }
                let pending = g.attr(PENDING) != 0;
                if !pending && comps.len() != 1 {
                    return Err(illegal(b, "fragment not pending"));
                }
                let sub = g.induced(nodes);
                let id = vocab.identify(&sub).ok_or_else(|| illegal(b, "component is not a pristine fragment"))?;
                if pending {
                    let mut rest = g.clone();
                    rest.remove_nodes(nodes);
                    if Self::free_stems(&rest).next().is_none() || vocab.get(id).unwrap().num_attachment_points() == 0 {
                        return Err(illegal(b, "predecessor could not have attached this fragment"));
                    }
                    if Self::fragment_count(&rest) >= r.max_fragments {
                        return Err(illegal(b, "max_fragments"));
                    }
                }
            }
            (Style::Fragments, GraphAction::RemoveFragmentEdge { u, v }) => {
                if g.attr(PENDING) != 0 {
                    return Err(illegal(b, "pending fragment"));
                }
                if !(in_range(*u) && in_range(*v)) || u >= v {
                    return Err(illegal(b, "vertex out of range"));
                }
                match g.edge_label(*u, *v) {
                    Some(l) if fragments::is_inter(l) => {}
                    _ => return Err(illegal(b, "not an inter-fragment edge")),
                }
                let pred = self.predecessor(g, b);
                if pred.components().len() != 2 {
                    return Err(illegal(b, "fragment graph is not a tree"));
                }
                let removable = pred
                    .components()
                    .into_iter()
                    .any(|c| self.check_backward(&pred, &GraphAction::RemoveFragment { nodes: c }).is_ok());
                if !removable {
                    return Err(illegal(b, "neither side is a single fragment"));
                }
            }
            _ => return Err(illegal(b, "action type not available in this environment")),
        }
        Ok(())
    }

    /// Predecessor obtained by reversing a backward action.
    pub fn apply_backward(&self, g: &LabeledGraph, b: &GraphAction) -> Result<LabeledGraph> {
        self.check_backward(g, b)?;
        Ok(self.predecessor(g, b))
    }

    pub(crate) fn predecessor(&self, g: &LabeledGraph, b: &GraphAction) -> LabeledGraph {
        let mut h = g.clone();
        match b {
            GraphAction::Unstop => h.set_attr(TERMINATED, 0),
            GraphAction::RemoveNode { v } => h.remove_node(*v),
            GraphAction::RemoveEdge { u, v } => {
                h.remove_edge(*u, *v);
            }
            GraphAction::UnsetNodeAttribute { u } => h.set_label(*u, 0),
            GraphAction::UnsetEdgeAttribute { u, v } => h.set_edge_label(*u, *v, 0),
            GraphAction::RemoveFragment { nodes } => {
                h.remove_nodes(nodes);
                h.set_attr(PENDING, 0);
            }
            GraphAction::RemoveFragmentEdge { u, v } => {
                h.remove_edge(*u, *v);
                h.set_label(*u, fragments::with_stem(h.label(*u), STEM_FREE));
                h.set_label(*v, fragments::with_stem(h.label(*v), STEM_FREE));
                h.set_attr(PENDING, 1);
            }
            _ => unreachable!("forward action applied backward"),
        }
        h
    }

    /// Backward action on `next` undoing forward action `a` taken on `g`.
    pub fn reverse_forward(&self, g: &LabeledGraph, a: &GraphAction) -> GraphAction {
        match a {
            GraphAction::AddNode { .. } => GraphAction::RemoveNode { v: g.n() },
            GraphAction::AddEdge { u, v, .. } => GraphAction::RemoveEdge { u: *u, v: *v },
            GraphAction::SetNodeAttribute { u, .. } => GraphAction::UnsetNodeAttribute { u: *u },
            GraphAction::SetEdgeAttribute { u, v, .. } => GraphAction::UnsetEdgeAttribute { u: *u, v: *v },
            GraphAction::Stop => GraphAction::Unstop,
            GraphAction::AddFragment { fragment } => {
                let k = self.vocabulary.as_ref().expect("fragment env").get(*fragment).expect("known").graph.n();
                GraphAction::RemoveFragment {
                    nodes: (g.n()..g.n() + k).collect(),
                }
            }
            GraphAction::AddFragmentEdge { u, v } => GraphAction::RemoveFragmentEdge { u: *u, v: *v },
            _ => unreachable!("not a forward action"),
        }
    }

    /// Forward action on the predecessor that reproduces `g`.
    pub fn reverse_backward(&self, g: &LabeledGraph, b: &GraphAction) -> GraphAction {
        match b {
            GraphAction::Unstop => GraphAction::Stop,
            GraphAction::RemoveNode { v } => {
                let anchor = g.neighbors(*v).next().map(|(w, _)| if w > *v { w - 1 } else { w });
                GraphAction::AddNode {
                    anchor,
                    label: g.label(*v),
                }
            }
            GraphAction::RemoveEdge { u, v } => GraphAction::AddEdge {
                u: *u,
                v: *v,
                label: g.edge_label(*u, *v).unwrap_or(0),
            },
            GraphAction::UnsetNodeAttribute { u } => GraphAction::SetNodeAttribute { u: *u, value: g.label(*u) },
            GraphAction::UnsetEdgeAttribute { u, v } => GraphAction::SetEdgeAttribute {
                u: *u,
                v: *v,
                value: g.edge_label(*u, *v).unwrap_or(0),
            },
            GraphAction::RemoveFragment { nodes } => {
                let sub = g.induced(nodes);
                let fragment = self.vocabulary.as_ref().and_then(|v| v.identify(&sub)).expect("pristine fragment");
                GraphAction::AddFragment { fragment }
            }
            GraphAction::RemoveFragmentEdge { u, v } => GraphAction::AddFragmentEdge { u: *u, v: *v },
            _ => unreachable!("not a backward action"),
        }
    }

    /// Base reward `R(g)` of a terminal graph.
    pub fn reward(&self, g: &LabeledGraph) -> Result<f64> {
        if !g.is_terminated() {
            return Err(Error::InvalidGraph("reward requested for a non-terminal graph".into()));
        }
        Ok(match &self.reward_fn {
            RewardFn::Constant(c) => *c,
            RewardFn::Cliques { floor, weight } => floor + weight * qualifying_four_cliques(g) as f64,
            RewardFn::Cycles { base } => base + g.cycle_rank() as f64,
            RewardFn::Fragments { base, per_fragment } => base + per_fragment * Self::fragment_count(g) as f64,
            RewardFn::Size { base, per_node } => base + per_node * g.n() as f64,
        })
    }

    /// |Aut(C)| of the fragment added by `a`; 1 for every other action.
    pub fn fragment_aut(&self, a: &GraphAction) -> u128 {
        match (a, &self.vocabulary) {
            (GraphAction::AddFragment { fragment }, Some(v)) => v.get(*fragment).map_or(1, |f| f.aut_order()),
            _ => 1,
        }
    }

    /// Orbit-equivalence key of an action under `group`.
    pub fn orbit_key(&self, group: &AutomorphismGroup, a: &GraphAction) -> (u8, u32, Vec<usize>) {
        let t = a.tag();
        match a {
            GraphAction::AddNode { anchor: Some(u), label } => (t, *label, vec![group.vertex_orbit(*u)]),
            GraphAction::AddNode { anchor: None, label } => (t, *label, vec![]),
            GraphAction::AddEdge { u, v, label } => (t, *label, vec![group.pair_orbit(*u, *v)]),
            GraphAction::SetNodeAttribute { u, value } => (t, *value, vec![group.vertex_orbit(*u)]),
            GraphAction::SetEdgeAttribute { u, v, value } => (t, *value, vec![group.pair_orbit(*u, *v)]),
            GraphAction::AddFragment { fragment } => (t, *fragment as u32, vec![]),
            GraphAction::AddFragmentEdge { u, v }
            | GraphAction::RemoveEdge { u, v }
            | GraphAction::UnsetEdgeAttribute { u, v }
            | GraphAction::RemoveFragmentEdge { u, v } => (t, 0, vec![group.pair_orbit(*u, *v)]),
            GraphAction::RemoveNode { v } | GraphAction::UnsetNodeAttribute { u: v } => {
                (t, 0, vec![group.vertex_orbit(*v)])
            }
            GraphAction::RemoveFragment { nodes } => (t, 0, group.set_orbit_key(nodes)),
            GraphAction::Stop | GraphAction::Unstop => (t, 0, vec![]),
        }
    }

    /// Partition of `actions` into orbit classes, in order of first member.
    pub fn group_by_orbit(&self, g: &LabeledGraph, actions: &[GraphAction]) -> Vec<ActionClass> {
        let group = symmetry::automorphism_group(g);
        self.group_by_orbit_with(&group, actions)
    }

    pub fn group_by_orbit_with(&self, group: &AutomorphismGroup, actions: &[GraphAction]) -> Vec<ActionClass> {
        let keys: Vec<_> = actions.iter().map(|a| self.orbit_key(group, a)).collect();
        collect_classes(actions, &keys, ClassKind::Orbit)
    }

    /// Partition of `actions` by isomorphism class of the resulting graph.
    pub fn group_by_transition(&self, g: &LabeledGraph, actions: &[GraphAction]) -> Vec<ActionClass> {
        let keys: Vec<_> = actions
            .iter()
            .map(|a| {
                let h = if a.is_forward() {
                    self.apply_unchecked(g, a)
                } else {
                    self.predecessor(g, a)
                };
                (a.is_forward(), symmetry::canonical_form(&h))
            })
            .collect();
        collect_classes(actions, &keys, ClassKind::Transition)
    }
}

fn collect_classes<K: Eq + std::hash::Hash + Clone>(actions: &[GraphAction], keys: &[K], kind: ClassKind) -> Vec<ActionClass> {
    let mut index: HashMap<K, usize> = HashMap::new();
    let mut classes: Vec<ActionClass> = Vec::new();
    for (a, k) in actions.iter().zip(keys) {
        match index.get(k) {
            Some(&i) => {
                classes[i].members.push(a.clone());
                classes[i].multiplicity += 1;
            }
            None => {
                index.insert(k.clone(), classes.len());
                classes.push(ActionClass {
                    representative: a.clone(),
                    members: vec![a.clone()],
                    multiplicity: 1,
                    kind,
                });
            }
        }
    }
    classes
}

/// 4-cliques containing at least three nodes of one label.
pub fn qualifying_four_cliques(g: &LabeledGraph) -> usize {
    let n = g.n();
    let mut count = 0;
    for a in 0..n {
        for b in a + 1..n {
            if !g.has_edge(a, b) {
                continue;
            }
            for c in b + 1..n {
                if !(g.has_edge(a, c) && g.has_edge(b, c)) {
                    continue;
                }
                for d in c + 1..n {
                    if g.has_edge(a, d) && g.has_edge(b, d) && g.has_edge(c, d) {
                        let mut counts: HashMap<u32, usize> = HashMap::new();
                        for v in [a, b, c, d] {
                            *counts.entry(g.label(v)).or_default() += 1;
                        }
                        if counts.values().any(|&k| k >= 3) {
                            count += 1;
                        }
                    }
                }
            }
        }
    }
    count
}
