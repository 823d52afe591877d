//! Exhaustive enumeration of canonical states and exact evaluation.

use std::collections::{HashMap, VecDeque};
use std::io::Write;

use serde::Serialize;

use crate::env::{Environment, GraphAction};
use crate::error::{Error, Result};
use crate::graph::LabeledGraph;
use crate::pe::{self, ActionPe};
use crate::perm::Permutation;
use crate::symmetry::{self, AutomorphismGroup, CanonicalForm};

pub type StateId = usize;

pub const DEFAULT_STATE_CAP: usize = 10_000_000;

/// Orbit class of forward actions out of a state.
#[derive(Debug, Clone, Serialize)]
pub struct ForwardClass {
    /// Smallest member, in the coordinates of the state's representative.
    pub action: GraphAction,
    pub multiplicity: u32,
    pub target: StateId,
    /// Index of the matching backward class in the target state.
    pub reverse: usize,
    /// Number of forward actions sharing the representative's encoding.
    pub pe_multiplicity: u32,
    /// |Aut(C)| for fragment additions, 1 otherwise.
    pub fragment_aut: u128,
}

/// Orbit class of backward actions out of a state.
#[derive(Debug, Clone, Serialize)]
pub struct BackwardClass {
    pub action: GraphAction,
    pub multiplicity: u32,
    pub source: StateId,
    /// Index of the matching forward class in the source state.
    pub forward: usize,
    pub pe_multiplicity: u32,
}

#[derive(Debug, Clone)]
pub struct StateNode {
    /// Canonical representative.
    pub graph: LabeledGraph,
    pub form: CanonicalForm,
    pub generators: Vec<Permutation>,
    pub aut_order: u128,
    pub terminal: bool,
    /// Base reward for terminal states, 0 otherwise.
    pub reward: f64,
    pub forward: Vec<ForwardClass>,
    pub backward: Vec<BackwardClass>,
    pub n_forward: u32,
    pub n_backward: u32,
}

impl StateNode {
    pub fn group(&self) -> AutomorphismGroup {
        AutomorphismGroup::from_generators(self.graph.n(), self.aut_order, self.generators.clone())
    }
}

/// Canonical state DAG reachable from the initial graph.
#[derive(Debug, Clone)]
pub struct StateDag {
    pub states: Vec<StateNode>,
    index: HashMap<CanonicalForm, StateId>,
    pub initial: StateId,
    pub terminals: Vec<StateId>,
    topo: Vec<StateId>,
    terminal_pos: Vec<Option<usize>>,
}

type OrbitKey = (u8, u32, Vec<usize>);

struct Pending {
    target: StateId,
    key: OrbitKey,
    source: StateId,
    class: usize,
}

pub fn enumerate(env: &Environment) -> Result<StateDag> {
    enumerate_with_cap(env, DEFAULT_STATE_CAP)
}

pub fn enumerate_with_cap(env: &Environment, cap: usize) -> Result<StateDag> {
    let mut states: Vec<StateNode> = Vec::new();
    let mut index: HashMap<CanonicalForm, StateId> = HashMap::new();
    let mut back_keys: Vec<Vec<OrbitKey>> = Vec::new();
    let mut pending: Vec<Pending> = Vec::new();

    let c0 = symmetry::canonicalize(&env.initial);
    let g0 = c0.canonical_group();
    index.insert(c0.form.clone(), 0);
    states.push(new_node(env, c0.graph, c0.form, g0)?);

    let mut next = 0;
    while next < states.len() {
        let s = next;
        next += 1;
        let rep = states[s].graph.clone();
        let group = states[s].group();
        let pev = pe::pe_vectors(&rep);

        let fwd = env.forward_actions(&rep);
        let fwd_pe: Vec<ActionPe> = fwd.iter().map(|a| pev.action(a)).collect();
        let mut fclasses = Vec::new();
        for class in env.group_by_orbit_with(&group, &fwd) {
            let a = class.representative;
            let succ = env.apply_unchecked(&rep, &a);
            let b = env.reverse_forward(&rep, &a);
            let c = symmetry::canonicalize(&succ);
            let b = b.relabel(c.labeling.as_slice());
            let tgroup = c.canonical_group();
            let key = env.orbit_key(&tgroup, &b);
            let target = match index.get(&c.form) {
                Some(&t) => t,
                None => {
                    let t = states.len();
                    if t >= cap {
                        return Err(Error::StateLimit(cap));
                    }
                    index.insert(c.form.clone(), t);
                    states.push(new_node(env, c.graph, c.form, tgroup)?);
                    t
                }
            };
            pending.push(Pending {
                target,
                key,
                source: s,
                class: fclasses.len(),
            });
            let me = pev.action(&a);
            fclasses.push(ForwardClass {
                pe_multiplicity: pe::pe_count(&fwd_pe, &me) as u32,
                fragment_aut: env.fragment_aut(&a),
                action: a,
                multiplicity: class.multiplicity as u32,
                target,
                reverse: usize::MAX,
            });
        }

        let bwd = env.backward_actions(&rep);
        let bwd_pe: Vec<ActionPe> = bwd.iter().map(|a| pev.action(a)).collect();
        let mut bclasses = Vec::new();
        let mut keys = Vec::new();
        for class in env.group_by_orbit_with(&group, &bwd) {
            let a = class.representative;
            keys.push(env.orbit_key(&group, &a));
            let me = pev.action(&a);
            bclasses.push(BackwardClass {
                pe_multiplicity: pe::pe_count(&bwd_pe, &me) as u32,
                action: a,
                multiplicity: class.multiplicity as u32,
                source: usize::MAX,
                forward: usize::MAX,
            });
        }
        let node = &mut states[s];
        node.n_forward = fwd.len() as u32;
        node.n_backward = bwd.len() as u32;
        node.forward = fclasses;
        node.backward = bclasses;
        if back_keys.len() <= s {
            back_keys.resize(s + 1, Vec::new());
        }
        back_keys[s] = keys;
    }

    for p in pending {
        let k = back_keys[p.target]
            .iter()
            .position(|k| *k == p.key)
            .ok_or_else(|| Error::InvalidTrajectory(format!("transition into state {} has no backward class", p.target)))?;
        let bc = &mut states[p.target].backward[k];
        if bc.source != usize::MAX {
            return Err(Error::InvalidTrajectory(format!(
                "backward class {k} of state {} matched twice",
                p.target
            )));
        }
        bc.source = p.source;
        bc.forward = p.class;
        states[p.source].forward[p.class].reverse = k;
    }
    for (s, node) in states.iter().enumerate() {
        if node.backward.iter().any(|b| b.source == usize::MAX) {
            return Err(Error::InvalidTrajectory(format!("state {s} has an unreachable backward class")));
        }
        if !node.terminal && node.forward.is_empty() {
            return Err(Error::InvalidTrajectory(format!("state {s} is a dead end")));
        }
    }

    let topo = topological_order(&states)?;
    let terminals: Vec<StateId> = (0..states.len()).filter(|&s| states[s].terminal).collect();
    let mut terminal_pos = vec![None; states.len()];
    for (i, &t) in terminals.iter().enumerate() {
        terminal_pos[t] = Some(i);
    }
    Ok(StateDag {
        states,
        index,
        initial: 0,
        terminals,
        topo,
        terminal_pos,
    })
}

fn new_node(env: &Environment, graph: LabeledGraph, form: CanonicalForm, group: AutomorphismGroup) -> Result<StateNode> {
    let terminal = graph.is_terminated();
    let reward = if terminal { env.reward(&graph)? } else { 0.0 };
    if terminal && reward <= 0.0 {
        return Err(Error::Config(format!("non-positive reward {reward}")));
    }
    Ok(StateNode {
        graph,
        form,
        aut_order: group.order(),
        generators: group.generators().to_vec(),
        terminal,
        reward,
        forward: Vec::new(),
        backward: Vec::new(),
        n_forward: 0,
        n_backward: 0,
    })
}

fn topological_order(states: &[StateNode]) -> Result<Vec<StateId>> {
    let mut indeg = vec![0usize; states.len()];
    for s in states {
        for f in &s.forward {
            indeg[f.target] += 1;
        }
    }
    let mut queue: VecDeque<StateId> = (0..states.len()).filter(|&s| indeg[s] == 0).collect();
    let mut order = Vec::with_capacity(states.len());
    while let Some(s) = queue.pop_front() {
        order.push(s);
        for f in &states[s].forward {
            indeg[f.target] -= 1;
            if indeg[f.target] == 0 {
                queue.push_back(f.target);
            }
        }
    }
    if order.len() != states.len() {
        return Err(Error::InvalidTrajectory("state graph has a cycle".into()));
    }
    Ok(order)
}

impl StateDag {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, s: StateId) -> &StateNode {
        &self.states[s]
    }

    pub fn topological_order(&self) -> &[StateId] {
        &self.topo
    }

    pub fn lookup(&self, form: &CanonicalForm) -> Option<StateId> {
        self.index.get(form).copied()
    }

    /// Position of a terminal state within `terminals`.
    pub fn terminal_index(&self, s: StateId) -> Option<usize> {
        self.terminal_pos[s]
    }

    /// State of a concrete graph and the map from its vertices to the representative's.
    pub fn locate(&self, g: &LabeledGraph) -> Result<(StateId, Permutation)> {
        let c = symmetry::canonicalize(g);
        let s = self.lookup(&c.form).ok_or(Error::UnknownState)?;
        // the representative is the canonical graph itself
        Ok((s, c.labeling))
    }

    /// Forward class of a concrete action on a graph located at `s` via `map`.
    pub fn forward_class_of(&self, env: &Environment, s: StateId, map: &Permutation, a: &GraphAction) -> Result<usize> {
        let node = &self.states[s];
        let a = a.relabel(map.as_slice());
        env.check_forward(&node.graph, &a)?;
        let group = node.group();
        let key = env.orbit_key(&group, &a);
        node.forward
            .iter()
            .position(|f| env.orbit_key(&group, &f.action) == key)
            .ok_or(Error::UnknownState)
    }

    pub fn backward_class_of(&self, env: &Environment, s: StateId, map: &Permutation, b: &GraphAction) -> Result<usize> {
        let node = &self.states[s];
        let b = b.relabel(map.as_slice());
        env.check_backward(&node.graph, &b)?;
        let group = node.group();
        let key = env.orbit_key(&group, &b);
        node.backward
            .iter()
            .position(|c| env.orbit_key(&group, &c.action) == key)
            .ok_or(Error::UnknownState)
    }

    /// Forward dynamic programming: `class_probs(s)` gives the class
    /// probabilities of state `s`, aligned with `forward`.
    pub fn terminating_distribution<F>(&self, mut class_probs: F) -> ExactDistribution
    where
        F: FnMut(StateId) -> Vec<f64>,
    {
        let mut p = vec![0.0; self.states.len()];
        p[self.initial] = 1.0;
        for &s in &self.topo {
            let node = &self.states[s];
            if node.forward.is_empty() || p[s] == 0.0 {
                continue;
            }
            let probs = class_probs(s);
            for (f, q) in node.forward.iter().zip(probs) {
                p[f.target] += p[s] * q;
            }
        }
        let raw: Vec<f64> = self.terminals.iter().map(|&t| p[t]).collect();
        ExactDistribution::from_weights(raw)
    }

    /// `p(x) = R(x)^β · w(x) / Z` with `w` an optional per-terminal weight.
    pub fn target_distribution(&self) -> ExactDistribution {
        ExactDistribution::from_weights(self.terminals.iter().map(|&t| self.states[t].reward).collect())
    }

    pub fn target_with<F: Fn(&StateNode) -> f64>(&self, weight: F) -> ExactDistribution {
        ExactDistribution::from_weights(self.terminals.iter().map(|&t| weight(&self.states[t])).collect())
    }

    /// Number of labeled graphs in the class of state `s` on its own vertex set.
    pub fn class_size(&self, s: StateId) -> f64 {
        let n = self.states[s].graph.n();
        (1..=n).map(|k| k as f64).product::<f64>() / self.states[s].aut_order as f64
    }

    /// Writes one JSON object per state.
    pub fn export_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Succ<'a> {
            target: String,
            action: &'a GraphAction,
            multiplicity: u32,
        }
        #[derive(Serialize)]
        struct Line<'a> {
            id: StateId,
            hash: String,
            terminal: bool,
            reward: Option<f64>,
            aut: String,
            graph: &'a LabeledGraph,
            successors: Vec<Succ<'a>>,
        }
        for (id, s) in self.states.iter().enumerate() {
            let line = Line {
                id,
                hash: s.form.hash_hex(),
                terminal: s.terminal,
                reward: s.terminal.then_some(s.reward),
                aut: s.aut_order.to_string(),
                graph: &s.graph,
                successors: s
                    .forward
                    .iter()
                    .map(|f| Succ {
                        target: self.states[f.target].form.hash_hex(),
                        action: &f.action,
                        multiplicity: f.multiplicity,
                    })
                    .collect(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Probabilities over the terminal states of a DAG.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDistribution {
    pub probs: Vec<f64>,
    /// Total mass before normalization.
    pub normalizer: f64,
}

impl ExactDistribution {
    pub fn from_weights(w: Vec<f64>) -> Self {
        let total: f64 = w.iter().sum();
        let probs = if total > 0.0 { w.iter().map(|x| x / total).collect() } else { w };
        ExactDistribution { probs, normalizer: total }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// `Σ |p(x) - q(x)|`.
pub fn l1_error(p: &ExactDistribution, q: &ExactDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Config(format!("support sizes differ: {} vs {}", p.len(), q.len())));
    }
    Ok(p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum())
}
