//! Tabular orbit-equivariant policies over an enumerated state space.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, GraphAction};
use crate::error::{Error, Result};
use crate::graph::LabeledGraph;
use crate::state_space::{ExactDistribution, StateDag, StateId};

/// One logit per (state, forward orbit class), plus `log Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub logits: Vec<Vec<f64>>,
    pub log_z: f64,
    /// Uniform mixing over classes, in `[0, 1]`.
    pub epsilon: f64,
}

/// Learned log state flows for detailed balance.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTable {
    pub log_flow: Vec<f64>,
}

impl FlowTable {
    pub fn zeros(dag: &StateDag) -> Self {
        FlowTable {
            log_flow: vec![0.0; dag.len()],
        }
    }
}

/// Log edge flows per (state, forward class), one concrete action's worth.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFlowTable {
    pub log_flow: Vec<Vec<f64>>,
}

impl EdgeFlowTable {
    pub fn zeros(dag: &StateDag) -> Self {
        EdgeFlowTable {
            log_flow: dag.states.iter().map(|s| vec![0.0; s.forward.len()]).collect(),
        }
    }

    /// Forward policy implied by the edge flows.
    pub fn to_policy(&self, dag: &StateDag, log_z: f64) -> PolicyTable {
        let logits = dag
            .states
            .iter()
            .zip(&self.log_flow)
            .map(|(s, f)| {
                s.forward
                    .iter()
                    .zip(f)
                    .map(|(c, x)| x + (c.multiplicity as f64).ln())
                    .collect()
            })
            .collect();
        PolicyTable {
            logits,
            log_z,
            epsilon: 0.0,
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// State-level trajectory: `states[t] --classes[t]--> states[t + 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<StateId>,
    pub classes: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn terminal(&self) -> StateId {
        *self.states.last().expect("trajectory has a state")
    }

    pub fn validate(&self, dag: &StateDag) -> Result<()> {
        if self.states.len() != self.classes.len() + 1 || self.states[0] != dag.initial {
            return Err(Error::InvalidTrajectory("malformed trajectory".into()));
        }
        for (t, &c) in self.classes.iter().enumerate() {
            let node = dag.state(self.states[t]);
            match node.forward.get(c) {
                Some(f) if f.target == self.states[t + 1] => {}
                _ => return Err(Error::InvalidTrajectory(format!("step {t} does not follow the DAG"))),
            }
        }
        if !dag.state(self.terminal()).terminal {
            return Err(Error::InvalidTrajectory("trajectory does not end in a terminal state".into()));
        }
        Ok(())
    }
}

/// Trajectory over concrete graphs, with the class multiplicity of each action.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcreteTrajectory {
    pub graphs: Vec<LabeledGraph>,
    pub actions: Vec<GraphAction>,
    pub multiplicities: Vec<u32>,
}

fn pick<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

impl PolicyTable {
    pub fn uniform(dag: &StateDag) -> Self {
        PolicyTable {
            logits: dag.states.iter().map(|s| vec![0.0; s.forward.len()]).collect(),
            log_z: 0.0,
            epsilon: 0.0,
        }
    }

    /// Class probabilities `p_Ā` at `s`, mixing in `epsilon` uniformly over classes.
    pub fn class_probs_with(&self, s: StateId, epsilon: f64) -> Vec<f64> {
        let p = softmax(&self.logits[s]);
        if epsilon == 0.0 {
            return p;
        }
        let k = p.len() as f64;
        p.into_iter().map(|x| (1.0 - epsilon) * x + epsilon / k).collect()
    }

    pub fn class_probs(&self, s: StateId) -> Vec<f64> {
        self.class_probs_with(s, self.epsilon)
    }

    /// Concrete forward actions of `g` with their probabilities `p_E`.
    pub fn forward_probabilities(&self, env: &Environment, dag: &StateDag, g: &LabeledGraph) -> Result<Vec<(GraphAction, f64)>> {
        let (s, map) = dag.locate(g)?;
        let node = dag.state(s);
        let probs = self.class_probs(s);
        let group = node.group();
        let inv = map.inverse();
        let mut out = Vec::new();
        for a in env.forward_actions(&node.graph) {
            let key = env.orbit_key(&group, &a);
            let c = node
                .forward
                .iter()
                .position(|f| env.orbit_key(&group, &f.action) == key)
                .ok_or(Error::UnknownState)?;
            out.push((a.relabel(inv.as_slice()), probs[c] / node.forward[c].multiplicity as f64));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }

    pub fn sample_trajectory<R: Rng + ?Sized>(&self, dag: &StateDag, epsilon: f64, rng: &mut R) -> Trajectory {
        sample_with(dag, epsilon, rng, |s| self.logits[s].clone())
    }

    /// Writes a checkpoint keyed by state hash and class representative.
    pub fn to_checkpoint(&self, dag: &StateDag) -> Checkpoint {
        let mut logits = BTreeMap::new();
        for (s, node) in dag.states.iter().enumerate() {
            if node.forward.is_empty() {
                continue;
            }
            let row: BTreeMap<String, f64> = node
                .forward
                .iter()
                .zip(&self.logits[s])
                .map(|(f, l)| (f.action.to_string(), *l))
                .collect();
            logits.insert(node.form.hash_hex(), row);
        }
        Checkpoint {
            log_z: self.log_z,
            epsilon: self.epsilon,
            logits,
        }
    }

    /// Missing entries default to zero logits.
    pub fn from_checkpoint(dag: &StateDag, ck: &Checkpoint) -> Result<Self> {
        let mut p = PolicyTable::uniform(dag);
        p.log_z = ck.log_z;
        p.epsilon = ck.epsilon;
        let mut known = 0;
        for (s, node) in dag.states.iter().enumerate() {
            if let Some(row) = ck.logits.get(&node.form.hash_hex()) {
                known += 1;
                for (c, f) in node.forward.iter().enumerate() {
                    if let Some(l) = row.get(&f.action.to_string()) {
                        p.logits[s][c] = *l;
                    }
                }
            }
        }
        if known != ck.logits.len() {
            return Err(Error::Config("checkpoint does not match the environment".into()));
        }
        Ok(p)
    }
}

/// Samples a forward trajectory from per-state logits.
pub fn sample_with<R: Rng + ?Sized, F: Fn(StateId) -> Vec<f64>>(dag: &StateDag, epsilon: f64, rng: &mut R, logits: F) -> Trajectory {
    let mut s = dag.initial;
    let mut states = vec![s];
    let mut classes = Vec::new();
    while !dag.state(s).terminal {
        let mut p = softmax(&logits(s));
        if epsilon > 0.0 {
            let k = p.len() as f64;
            p.iter_mut().for_each(|x| *x = (1.0 - epsilon) * *x + epsilon / k);
        }
        let c = pick(&p, rng);
        classes.push(c);
        s = dag.state(s).forward[c].target;
        states.push(s);
    }
    Trajectory { states, classes }
}

/// Backward concrete actions of `g` with uniform probabilities `q_E`.
pub fn backward_probabilities(env: &Environment, g: &LabeledGraph) -> Result<Vec<(GraphAction, f64)>> {
    let acts = env.backward_actions(g);
    if acts.is_empty() {
        return Err(Error::InvalidTrajectory("initial graph has no backward actions".into()));
    }
    let q = 1.0 / acts.len() as f64;
    Ok(acts.into_iter().map(|a| (a, q)).collect())
}

/// Samples a backward trajectory from `x` to the initial state under the uniform backward policy.
pub fn sample_backward<R: Rng + ?Sized>(dag: &StateDag, x: StateId, rng: &mut R) -> Result<Trajectory> {
    let mut s = x;
    let mut states = vec![s];
    let mut classes = Vec::new();
    while s != dag.initial {
        let node = dag.state(s);
        if node.backward.is_empty() {
            return Err(Error::InvalidTrajectory(format!("backward dead end at state {s}")));
        }
        let w: Vec<f64> = node
            .backward
            .iter()
            .map(|b| b.multiplicity as f64 / node.n_backward as f64)
            .collect();
        let b = &node.backward[pick(&w, rng)];
        classes.push(b.forward);
        s = b.source;
        states.push(s);
    }
    states.reverse();
    classes.reverse();
    Ok(Trajectory { states, classes })
}

/// Realizes a state-level trajectory as concrete graphs, choosing uniformly
/// among the concrete actions of each orbit class.
pub fn materialize<R: Rng + ?Sized>(env: &Environment, dag: &StateDag, traj: &Trajectory, rng: &mut R) -> Result<ConcreteTrajectory> {
    let mut g = env.initial.clone();
    let mut graphs = vec![g.clone()];
    let mut actions = Vec::new();
    let mut multiplicities = Vec::new();
    for (t, &c) in traj.classes.iter().enumerate() {
        let (s, map) = dag.locate(&g)?;
        if s != traj.states[t] {
            return Err(Error::InvalidTrajectory(format!("step {t} left the state sequence")));
        }
        let node = dag.state(s);
        let group = node.group();
        let key = env.orbit_key(&group, &node.forward[c].action);
        let members: Vec<GraphAction> = env
            .forward_actions(&node.graph)
            .into_iter()
            .filter(|a| env.orbit_key(&group, a) == key)
            .collect();
        let a = members[rng.gen_range(0..members.len())].relabel(map.inverse().as_slice());
        g = env.apply(&g, &a)?;
        graphs.push(g.clone());
        actions.push(a);
        multiplicities.push(node.forward[c].multiplicity);
    }
    Ok(ConcreteTrajectory {
        graphs,
        actions,
        multiplicities,
    })
}

pub fn exact_terminating_distribution(dag: &StateDag, policy: &PolicyTable) -> ExactDistribution {
    dag.terminating_distribution(|s| policy.class_probs(s))
}

/// JSON checkpoint: state hash → class key → logit, plus `log_Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    #[serde(rename = "log_Z")]
    pub log_z: f64,
    #[serde(default)]
    pub epsilon: f64,
    pub logits: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_normalizes() {
        let p = softmax(&[0.0, 1.0, -2.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let lp = log_softmax(&[0.0, 1.0, -2.0]);
        for (a, b) in p.iter().zip(lp) {
            assert!((a.ln() - b).abs() < 1e-12);
        }
    }
}
