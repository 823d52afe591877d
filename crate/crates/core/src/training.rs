//! Balance objectives, symmetry corrections, the training loop and the
//! likelihood estimator.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, Style};
use crate::error::{Error, Result};
use crate::policy::{self, log_softmax, softmax, EdgeFlowTable, FlowTable, PolicyTable, Trajectory};
use crate::state_space::{l1_error, ExactDistribution, StateDag, StateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionMode {
    Vanilla,
    TransitionCorrection,
    PositionalEncoding,
    RewardScaling,
    FlowScaling,
}

impl CorrectionMode {
    pub const ALL: [CorrectionMode; 5] = [
        CorrectionMode::Vanilla,
        CorrectionMode::TransitionCorrection,
        CorrectionMode::PositionalEncoding,
        CorrectionMode::RewardScaling,
        CorrectionMode::FlowScaling,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CorrectionMode::Vanilla => "vanilla",
            CorrectionMode::TransitionCorrection => "transition-correction",
            CorrectionMode::PositionalEncoding => "positional-encoding",
            CorrectionMode::RewardScaling => "reward-scaling",
            CorrectionMode::FlowScaling => "flow-scaling",
        }
    }
}

impl fmt::Display for CorrectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorrectionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CorrectionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Tb,
    Db,
    Fm,
}

impl FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tb" => Ok(Objective::Tb),
            "db" => Ok(Objective::Db),
            "fm" => Ok(Objective::Fm),
            _ => Err(Error::Config(format!("unknown objective {s}"))),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Tb => "tb",
            Objective::Db => "db",
            Objective::Fm => "fm",
        })
    }
}

/// Trainable parameter address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    Logit(StateId, usize),
    LogZ,
    Flow(StateId),
    EdgeFlow(StateId, usize),
}

/// Sparse gradient: repeated entries accumulate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradient {
    pub entries: Vec<(Param, f64)>,
}

impl Gradient {
    fn push(&mut self, p: Param, g: f64) {
        if g != 0.0 {
            self.entries.push((p, g));
        }
    }

    /// Total derivative with respect to one parameter.
    pub fn get(&self, p: Param) -> f64 {
        self.entries.iter().filter(|(q, _)| *q == p).map(|(_, g)| g).sum()
    }
}

/// Per-state symmetry quantities shared by all losses.
#[derive(Debug, Clone)]
pub struct Context<'a> {
    pub dag: &'a StateDag,
    pub ln_aut: Vec<f64>,
    /// `Σ ln |Aut(C_i)|` over fragments placed on the way to each state.
    pub ln_frag: Vec<f64>,
    pub beta: f64,
    pub fragment_env: bool,
}

impl<'a> Context<'a> {
    pub fn new(env: &Environment, dag: &'a StateDag, beta: f64) -> Result<Self> {
        let ln_aut: Vec<f64> = dag.states.iter().map(|s| (s.aut_order as f64).ln()).collect();
        let mut ln_frag = vec![f64::NAN; dag.len()];
        ln_frag[dag.initial] = 0.0;
        for &s in dag.topological_order() {
            for f in &dag.state(s).forward {
                let v = ln_frag[s] + (f.fragment_aut as f64).ln();
                let t = &mut ln_frag[f.target];
                if t.is_nan() {
                    *t = v;
                } else if (*t - v).abs() > 1e-9 {
                    return Err(Error::InvalidTrajectory("fragment product depends on the path".into()));
                }
            }
        }
        Ok(Context {
            dag,
            ln_aut,
            ln_frag,
            beta,
            fragment_env: env.rules.style == Style::Fragments,
        })
    }

    /// `ln R(x)^β` plus the mode's terminal correction.
    pub fn log_reward(&self, x: StateId, mode: CorrectionMode) -> f64 {
        let base = self.beta * self.dag.state(x).reward.ln();
        match mode {
            CorrectionMode::RewardScaling => base + self.log_scaling(x),
            _ => base,
        }
    }

    /// `ln(|Aut(x)| / (|Aut(G_0)| Π |Aut(C_i)|))`.
    pub fn log_scaling(&self, x: StateId) -> f64 {
        self.ln_aut[x] - self.ln_aut[self.dag.initial] - self.ln_frag[x]
    }

    /// Forward log probability of a step and its derivative w.r.t. the state's logits.
    fn log_pf(&self, s: StateId, c: usize, mode: CorrectionMode, logits: &[f64]) -> (f64, Vec<f64>) {
        let node = self.dag.state(s);
        let fc = &node.forward[c];
        let p = softmax(logits);
        match mode {
            CorrectionMode::TransitionCorrection => {
                let mask: Vec<bool> = node.forward.iter().map(|f| f.target == fc.target).collect();
                let pt: f64 = p.iter().zip(&mask).filter(|(_, m)| **m).map(|(x, _)| x).sum();
                let d = p
                    .iter()
                    .zip(&mask)
                    .map(|(pk, m)| if *m { pk / pt - pk } else { -pk })
                    .collect();
                (pt.ln(), d)
            }
            _ => {
                let lp = log_softmax(logits)[c];
                let mut d: Vec<f64> = p.iter().map(|x| -x).collect();
                d[c] += 1.0;
                let mut v = lp - (fc.multiplicity as f64).ln();
                if mode == CorrectionMode::PositionalEncoding {
                    v += (fc.pe_multiplicity as f64).ln();
                }
                (v, d)
            }
        }
    }

    /// Backward log probability of a step (parameter free).
    fn log_pb(&self, s: StateId, c: usize, mode: CorrectionMode) -> f64 {
        let fc = &self.dag.state(s).forward[c];
        let t = self.dag.state(fc.target);
        let log_qe = -(t.n_backward as f64).ln();
        match mode {
            CorrectionMode::Vanilla | CorrectionMode::RewardScaling => log_qe,
            CorrectionMode::FlowScaling => {
                log_qe + self.ln_aut[fc.target] - self.ln_aut[s] - (fc.fragment_aut as f64).ln()
            }
            CorrectionMode::TransitionCorrection => {
                let m: u32 = t.backward.iter().filter(|b| b.source == s).map(|b| b.multiplicity).sum();
                (m as f64).ln() + log_qe
            }
            CorrectionMode::PositionalEncoding => log_qe + (t.backward[fc.reverse].pe_multiplicity as f64).ln(),
        }
    }
}

/// `(log Z + Σ log p_F − log R̃ − Σ log p_B)²`.
pub fn tb_loss(ctx: &Context, traj: &Trajectory, mode: CorrectionMode, policy: &PolicyTable) -> Result<(f64, Gradient)> {
    let x = traj.terminal();
    if ctx.dag.state(x).reward <= 0.0 {
        return Err(Error::Config("zero reward".into()));
    }
    let mut delta = policy.log_z - ctx.log_reward(x, mode);
    let mut dlogits = Vec::with_capacity(traj.len());
    for (t, &c) in traj.classes.iter().enumerate() {
        let s = traj.states[t];
        let (lp, d) = ctx.log_pf(s, c, mode, &policy.logits[s]);
        delta += lp - ctx.log_pb(s, c, mode);
        dlogits.push((s, d));
    }
    let mut g = Gradient::default();
    g.push(Param::LogZ, 2.0 * delta);
    for (s, d) in dlogits {
        for (k, dk) in d.into_iter().enumerate() {
            g.push(Param::Logit(s, k), 2.0 * delta * dk);
        }
    }
    Ok((delta * delta, g))
}

fn log_state_flow(ctx: &Context, s: StateId, mode: CorrectionMode, policy: &PolicyTable, flows: &FlowTable) -> (f64, Option<Param>) {
    if s == ctx.dag.initial {
        (policy.log_z, Some(Param::LogZ))
    } else if ctx.dag.state(s).terminal {
        (ctx.log_reward(s, mode), None)
    } else {
        (flows.log_flow[s], Some(Param::Flow(s)))
    }
}

/// `(log F(s) + log p_F − log F(s') − log p_B)²` for the transition `(s, c)`.
pub fn db_loss(
    ctx: &Context,
    s: StateId,
    c: usize,
    mode: CorrectionMode,
    policy: &PolicyTable,
    flows: &FlowTable,
) -> (f64, Gradient) {
    let target = ctx.dag.state(s).forward[c].target;
    let (fs, ps) = log_state_flow(ctx, s, mode, policy, flows);
    let (ft, pt) = log_state_flow(ctx, target, mode, policy, flows);
    let (lp, d) = ctx.log_pf(s, c, mode, &policy.logits[s]);
    let delta = fs + lp - ft - ctx.log_pb(s, c, mode);
    let mut g = Gradient::default();
    if let Some(p) = ps {
        g.push(p, 2.0 * delta);
    }
    if let Some(p) = pt {
        g.push(p, -2.0 * delta);
    }
    for (k, dk) in d.into_iter().enumerate() {
        g.push(Param::Logit(s, k), 2.0 * delta * dk);
    }
    (delta * delta, g)
}

fn logsumexp_weighted(terms: &[(f64, f64)]) -> (f64, Vec<f64>) {
    // terms: (ln weight, log flow); returns log Σ w e^f and softmax weights
    let m = terms.iter().map(|(w, f)| w + f).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = terms.iter().map(|(w, f)| (w + f - m).exp()).collect();
    let s: f64 = e.iter().sum();
    (m + s.ln(), e.into_iter().map(|x| x / s).collect())
}

/// Flow-matching residual at one state.
pub fn fm_loss(ctx: &Context, s: StateId, mode: CorrectionMode, edges: &EdgeFlowTable, log_z: f64) -> Result<(f64, Gradient)> {
    if ctx.fragment_env {
        return Err(Error::UnsupportedMode("flow matching in the fragment environment".into()));
    }
    let dag = ctx.dag;
    let node = dag.state(s);
    let mut g = Gradient::default();
    let out = if node.terminal {
        None
    } else {
        let terms: Vec<(f64, f64)> = node
            .forward
            .iter()
            .zip(&edges.log_flow[s])
            .map(|(f, x)| ((f.multiplicity as f64).ln(), *x))
            .collect();
        Some(logsumexp_weighted(&terms))
    };
    let inflow = if s == dag.initial {
        None
    } else {
        let mut params = Vec::new();
        let terms: Vec<(f64, f64)> = node
            .backward
            .iter()
            .map(|b| {
                let src = dag.state(b.source);
                let fc = &src.forward[b.forward];
                let w = match mode {
                    CorrectionMode::Vanilla | CorrectionMode::RewardScaling => (b.multiplicity as f64).ln(),
                    CorrectionMode::FlowScaling | CorrectionMode::TransitionCorrection => (fc.multiplicity as f64).ln(),
                    CorrectionMode::PositionalEncoding => {
                        (b.multiplicity as f64 * fc.pe_multiplicity as f64 / b.pe_multiplicity as f64).ln()
                    }
                };
                params.push(Param::EdgeFlow(b.source, b.forward));
                (w, edges.log_flow[b.source][b.forward])
            })
            .collect();
        let (v, wts) = logsumexp_weighted(&terms);
        Some((v, wts, params))
    };
    let (lhs, rhs) = match (&inflow, &out) {
        (None, Some((o, _))) => (log_z, *o),
        (Some((i, _, _)), None) => (*i, ctx.log_reward(s, mode)),
        (Some((i, _, _)), Some((o, _))) => (*i, *o),
        (None, None) => return Ok((0.0, g)),
    };
    let delta = lhs - rhs;
    match &inflow {
        None => g.push(Param::LogZ, 2.0 * delta),
        Some((_, wts, params)) => {
            for (p, w) in params.iter().zip(wts) {
                g.push(*p, 2.0 * delta * w);
            }
        }
    }
    if let Some((_, wts)) = &out {
        for (k, w) in wts.iter().enumerate() {
            g.push(Param::EdgeFlow(s, k), -2.0 * delta * w);
        }
    }
    Ok((delta * delta, g))
}

/// Optimization schedule and sampling settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub steps: usize,
    pub batch_online: usize,
    pub batch_buffer: usize,
    pub buffer_size: usize,
    pub epsilon: f64,
    pub beta: f64,
    pub lr_logits: f64,
    pub lr_flow: f64,
    /// Final learning rate as a fraction of the initial one (cosine decay); 1 keeps rates constant.
    pub lr_min_ratio: f64,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            steps: 20_000,
            batch_online: 16,
            batch_buffer: 16,
            buffer_size: 10_000,
            epsilon: 0.1,
            beta: 1.0,
            lr_logits: 0.01,
            lr_flow: 0.05,
            lr_min_ratio: 0.01,
            eval_every: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: usize,
    pub l1_error: f64,
    #[serde(rename = "log_Z")]
    pub log_z: f64,
    pub loss_mean: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub policy: PolicyTable,
    pub flows: Option<FlowTable>,
    pub edge_flows: Option<EdgeFlowTable>,
    pub metrics: Vec<MetricRow>,
}

/// Lazy Adam over a flat parameter vector; only touched entries move.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: Vec<u32>,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: vec![0; n],
        }
    }

    fn step(&mut self, i: usize, g: f64, lr: f64, x: &mut f64) {
        self.t[i] += 1;
        let t = self.t[i] as i32;
        self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
        self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
        let mh = self.m[i] / (1.0 - Self::B1.powi(t));
        let vh = self.v[i] / (1.0 - Self::B2.powi(t));
        *x -= lr * mh / (vh.sqrt() + Self::EPS);
    }
}

struct Layout {
    offsets: Vec<usize>,
    flows: usize,
    log_z: usize,
    total: usize,
}

impl Layout {
    fn new(dag: &StateDag) -> Self {
        let mut offsets = Vec::with_capacity(dag.len() + 1);
        let mut k = 0;
        for s in &dag.states {
            offsets.push(k);
            k += s.forward.len();
        }
        offsets.push(k);
        Layout {
            offsets,
            flows: k,
            log_z: k + dag.len(),
            total: k + dag.len() + 1,
        }
    }

    fn index(&self, p: Param) -> usize {
        match p {
            Param::Logit(s, c) | Param::EdgeFlow(s, c) => self.offsets[s] + c,
            Param::Flow(s) => self.flows + s,
            Param::LogZ => self.log_z,
        }
    }
}

fn slot<'a>(
    layout: &Layout,
    objective: Objective,
    schedule: &Schedule,
    i: usize,
    policy: &'a mut PolicyTable,
    flows: &'a mut FlowTable,
    edges: &'a mut EdgeFlowTable,
) -> (&'a mut f64, f64) {
    if i == layout.log_z {
        (&mut policy.log_z, schedule.lr_flow)
    } else if i >= layout.flows {
        (&mut flows.log_flow[i - layout.flows], schedule.lr_flow)
    } else {
        let s = layout.offsets.partition_point(|&o| o <= i) - 1;
        let c = i - layout.offsets[s];
        match objective {
            Objective::Fm => (&mut edges.log_flow[s][c], schedule.lr_flow),
            _ => (&mut policy.logits[s][c], schedule.lr_logits),
        }
    }
}

/// Trains a tabular model and reports exact L1 error against `R^β / Z`.
pub fn train(env: &Environment, dag: &StateDag, objective: Objective, mode: CorrectionMode, schedule: &Schedule) -> Result<TrainResult> {
    train_with(env, dag, objective, mode, schedule, |_| {})
}

/// As [`train`], invoking `on_eval` for each metrics row.
pub fn train_with<F: FnMut(&MetricRow)>(
    env: &Environment,
    dag: &StateDag,
    objective: Objective,
    mode: CorrectionMode,
    schedule: &Schedule,
    mut on_eval: F,
) -> Result<TrainResult> {
    if !(0.0..=1.0).contains(&schedule.epsilon) {
        return Err(Error::Config("epsilon must lie in [0, 1]".into()));
    }
    if !(0.0..=1.0).contains(&schedule.lr_min_ratio) {
        return Err(Error::Config("lr_min_ratio must lie in [0, 1]".into()));
    }
    let ctx = Context::new(env, dag, schedule.beta)?;
    if objective == Objective::Fm && ctx.fragment_env {
        return Err(Error::UnsupportedMode("flow matching in the fragment environment".into()));
    }
    let target = ExactDistribution::from_weights(dag.terminals.iter().map(|&t| ctx.beta * dag.state(t).reward.ln()).map(f64::exp).collect());
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let layout = Layout::new(dag);
    let mut adam = Adam::new(layout.total);
    let mut policy = PolicyTable::uniform(dag);
    let mut flows = FlowTable::zeros(dag);
    let mut edges = EdgeFlowTable::zeros(dag);
    let mut buffer: VecDeque<Trajectory> = VecDeque::with_capacity(schedule.buffer_size);
    let mut grad = vec![0.0; layout.total];
    let mut touched: Vec<usize> = Vec::new();
    let mut metrics = Vec::new();
    let mut loss_acc = 0.0;
    let mut loss_n = 0usize;

    let evaluate = |policy: &PolicyTable, edges: &EdgeFlowTable| -> Result<(f64, f64)> {
        let model = if objective == Objective::Fm {
            edges.to_policy(dag, policy.log_z)
        } else {
            policy.clone()
        };
        let dist = policy::exact_terminating_distribution(dag, &model);
        Ok((l1_error(&dist, &target)?, policy.log_z))
    };

    for step in 0..=schedule.steps {
        if schedule.eval_every > 0 && (step % schedule.eval_every == 0 || step == schedule.steps) {
            let (l1, lz) = evaluate(&policy, &edges)?;
            let row = MetricRow {
                step,
                l1_error: l1,
                log_z: lz,
                loss_mean: if loss_n > 0 { loss_acc / loss_n as f64 } else { f64::NAN },
            };
            on_eval(&row);
            metrics.push(row);
            loss_acc = 0.0;
            loss_n = 0;
        }
        if step == schedule.steps {
            break;
        }
        let mut batch: Vec<Trajectory> = (0..schedule.batch_online)
            .map(|_| match objective {
                Objective::Fm => policy::sample_with(dag, schedule.epsilon, &mut rng, |s| {
                    dag.state(s)
                        .forward
                        .iter()
                        .zip(&edges.log_flow[s])
                        .map(|(c, x)| x + (c.multiplicity as f64).ln())
                        .collect()
                }),
                _ => policy.sample_trajectory(dag, schedule.epsilon, &mut rng),
            })
            .collect();
        if !buffer.is_empty() {
            for _ in 0..schedule.batch_buffer {
                batch.push(buffer[rng.gen_range(0..buffer.len())].clone());
            }
        }
        for t in batch.iter().take(schedule.batch_online) {
            if schedule.buffer_size > 0 {
                if buffer.len() == schedule.buffer_size {
                    buffer.pop_front();
                }
                buffer.push_back(t.clone());
            }
        }

        let mut items = 0usize;
        let add = |g: Gradient, grad: &mut Vec<f64>, touched: &mut Vec<usize>| {
            for (p, v) in g.entries {
                let i = layout.index(p);
                if grad[i] == 0.0 {
                    touched.push(i);
                }
                grad[i] += v;
                if grad[i] == 0.0 {
                    grad[i] = f64::MIN_POSITIVE;
                }
            }
        };
        match objective {
            Objective::Tb => {
                for t in &batch {
                    let (l, g) = tb_loss(&ctx, t, mode, &policy)?;
                    loss_acc += l;
                    items += 1;
                    add(g, &mut grad, &mut touched);
                }
            }
            Objective::Db => {
                for t in &batch {
                    for (k, &c) in t.classes.iter().enumerate() {
                        let (l, g) = db_loss(&ctx, t.states[k], c, mode, &policy, &flows);
                        loss_acc += l;
                        items += 1;
                        add(g, &mut grad, &mut touched);
                    }
                }
            }
            Objective::Fm => {
                for t in &batch {
                    for &s in &t.states {
                        let (l, g) = fm_loss(&ctx, s, mode, &edges, policy.log_z)?;
                        loss_acc += l;
                        items += 1;
                        add(g, &mut grad, &mut touched);
                    }
                }
            }
        }
        loss_n += items;
        let scale = 1.0 / items.max(1) as f64;
        let r = schedule.lr_min_ratio;
        let decay = r + (1.0 - r) * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / schedule.steps as f64).cos());
        for &i in &touched {
            let g = grad[i] * scale;
            grad[i] = 0.0;
            if !g.is_finite() {
                return Err(Error::Config(format!("non-finite gradient at step {step}")));
            }
            let (x, lr) = slot(&layout, objective, schedule, i, &mut policy, &mut flows, &mut edges);
            adam.step(i, g, lr * decay, x);
        }
        touched.clear();
        if loss_acc.is_nan() {
            return Err(Error::Config(format!("loss diverged at step {step}")));
        }
    }

    let (flows, edge_flows) = match objective {
        Objective::Tb => (None, None),
        Objective::Db => (Some(flows), None),
        Objective::Fm => {
            policy = edges.to_policy(dag, policy.log_z);
            (None, Some(edges))
        }
    };
    Ok(TrainResult {
        policy,
        flows,
        edge_flows,
        metrics,
    })
}

/// Importance-sampled estimate of a terminal probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LikelihoodEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// `(|Aut(G_0)| Π|Aut(C_i)| / |Aut(x)|) · mean p_E(τ) / q_E(τ | x)` over
/// backward trajectories drawn from the uniform backward policy.
pub fn estimate_likelihood<R: Rng + ?Sized>(ctx: &Context, policy: &PolicyTable, x: StateId, m: usize, rng: &mut R) -> Result<LikelihoodEstimate> {
    let dag = ctx.dag;
    if !dag.state(x).terminal {
        return Err(Error::InvalidTrajectory("likelihood requested for a non-terminal state".into()));
    }
    if m == 0 {
        return Err(Error::Config("sample count must be positive".into()));
    }
    let corr = -ctx.log_scaling(x);
    let mut ws = Vec::with_capacity(m);
    for _ in 0..m {
        let t = policy::sample_backward(dag, x, rng)?;
        let mut lw = corr;
        for (k, &c) in t.classes.iter().enumerate() {
            let s = t.states[k];
            let node = dag.state(s);
            let p = policy.class_probs(s)[c] / node.forward[c].multiplicity as f64;
            let q = 1.0 / dag.state(t.states[k + 1]).n_backward as f64;
            lw += p.ln() - q.ln();
        }
        ws.push(lw.exp());
    }
    let mean = ws.iter().sum::<f64>() / m as f64;
    let std_error = if m > 1 {
        let var = ws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        (var / m as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(LikelihoodEstimate {
        estimate: mean,
        std_error,
        samples: m,
    })
}
