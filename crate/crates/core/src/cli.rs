//! Command-line front end: `train`, `eval`, `likelihood`, `symcheck`, `enumerate`.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Environment};
use crate::error::{Error, Result};
use crate::graph::LabeledGraph;
use crate::policy::{self, Checkpoint, PolicyTable};
use crate::state_space::{enumerate, StateDag};
use crate::symmetry::automorphism_group;
use crate::training::{self, Context, CorrectionMode, Objective, Schedule};

pub const SEED_VAR: &str = "SAGFN_SEED";

#[derive(Debug, Parser)]
#[command(name = "sagfn", version, about = "Symmetry-aware tabular GFlowNets over graph spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a tabular policy; writes metrics.csv and checkpoint.json
    Train(TrainArgs),
    /// Exact terminating probabilities of a checkpoint
    Eval(EvalArgs),
    /// Importance-sampled likelihoods of terminal graphs
    Likelihood(LikelihoodArgs),
    /// Automorphism orders and orbit counts of a graph corpus
    Symcheck(SymcheckArgs),
    /// Enumerate the state space and report its size
    Enumerate(EnumerateArgs),
}

/// Run configuration. Every field doubles as a flag; flags override the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[command(flatten)]
    pub env: EnvConfig,
    /// tb, db or fm
    #[arg(long)]
    pub objective: Option<Objective>,
    #[arg(long)]
    pub mode: Option<CorrectionMode>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_online: Option<usize>,
    #[arg(long)]
    pub batch_buffer: Option<usize>,
    #[arg(long)]
    pub buffer_size: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lr_logits: Option<f64>,
    #[arg(long)]
    pub lr_flow: Option<f64>,
    #[arg(long)]
    pub lr_min_ratio: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Accepted for compatibility; sampling is single-threaded
    #[arg(long)]
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn merge(self, over: RunConfig) -> RunConfig {
        RunConfig {
            env: self.env.merge(over.env),
            objective: over.objective.or(self.objective),
            mode: over.mode.or(self.mode),
            steps: over.steps.or(self.steps),
            batch_online: over.batch_online.or(self.batch_online),
            batch_buffer: over.batch_buffer.or(self.batch_buffer),
            buffer_size: over.buffer_size.or(self.buffer_size),
            epsilon: over.epsilon.or(self.epsilon),
            beta: over.beta.or(self.beta),
            lr_logits: over.lr_logits.or(self.lr_logits),
            lr_flow: over.lr_flow.or(self.lr_flow),
            lr_min_ratio: over.lr_min_ratio.or(self.lr_min_ratio),
            eval_every: over.eval_every.or(self.eval_every),
            seed: over.seed.or(self.seed),
            output_dir: over.output_dir.or(self.output_dir),
            workers: over.workers.or(self.workers),
        }
    }

    /// Reads the file (if any) and applies flag overrides and the seed fallback.
    pub fn resolve(file: Option<&Path>, flags: RunConfig) -> Result<Self> {
        let base = match file {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let mut cfg = base.merge(flags);
        if cfg.seed.is_none() {
            if let Ok(s) = std::env::var(SEED_VAR) {
                cfg.seed = Some(s.parse().map_err(|_| Error::Config(format!("{SEED_VAR} is not an integer")))?);
            }
        }
        Ok(cfg)
    }

    pub fn schedule(&self) -> Result<Schedule> {
        let d = Schedule::default();
        let s = Schedule {
            steps: self.steps.unwrap_or(d.steps),
            batch_online: self.batch_online.unwrap_or(d.batch_online),
            batch_buffer: self.batch_buffer.unwrap_or(d.batch_buffer),
            buffer_size: self.buffer_size.unwrap_or(d.buffer_size),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            beta: self.beta.unwrap_or(d.beta),
            lr_logits: self.lr_logits.unwrap_or(d.lr_logits),
            lr_flow: self.lr_flow.unwrap_or(d.lr_flow),
            lr_min_ratio: self.lr_min_ratio.unwrap_or(d.lr_min_ratio),
            eval_every: self.eval_every.unwrap_or(d.eval_every),
            seed: self.seed.unwrap_or(d.seed),
        };
        if !(0.0..=1.0).contains(&s.epsilon) {
            return Err(Error::Config("epsilon must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&s.lr_min_ratio) {
            return Err(Error::Config("lr_min_ratio must lie in [0, 1]".into()));
        }
        if s.batch_online == 0 {
            return Err(Error::Config("batch_online must be positive".into()));
        }
        if !(s.beta > 0.0) || !(s.lr_logits > 0.0) || !(s.lr_flow > 0.0) {
            return Err(Error::Config("beta and learning rates must be positive".into()));
        }
        Ok(s)
    }

    pub fn environment(&self) -> Result<Environment> {
        let mut env = self.env.clone();
        if env.env.is_none() {
            env.env = Some(crate::env::EnvKind::Illustrative);
        }
        Environment::from_config(&env)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunConfig,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint JSON; omitted means the uniform policy
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunConfig,
    /// Output CSV (stdout when omitted)
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LikelihoodArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// One graph JSON object per line
    #[arg(long)]
    pub terminals: PathBuf,
    /// Sample counts to evaluate
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 10, 100, 1000])]
    pub samples: Vec<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunConfig,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SymcheckArgs {
    /// One graph JSON object per line
    #[arg(long)]
    pub graphs: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunConfig,
    /// Write every state as JSON lines
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Box::new(io::BufWriter::new(File::create(p)?))
        }
        None => Box::new(io::BufWriter::new(io::stdout())),
    })
}

fn load_policy(dag: &StateDag, checkpoint: Option<&Path>) -> Result<PolicyTable> {
    match checkpoint {
        Some(p) => PolicyTable::from_checkpoint(dag, &Checkpoint::load(p)?),
        None => Ok(PolicyTable::uniform(dag)),
    }
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = RunConfig::resolve(args.config.as_deref(), args.run)?;
    let schedule = cfg.schedule()?;
    let env = cfg.environment()?;
    let objective = cfg.objective.unwrap_or(Objective::Tb);
    let mode = cfg.mode.unwrap_or(CorrectionMode::Vanilla);
    let out = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("runs"));
    let dag = enumerate(&env)?;
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
    let mut metrics = csv::Writer::from_path(out.join("metrics.csv"))?;
    let mut failure = None;
    let result = training::train_with(&env, &dag, objective, mode, &schedule, |row| {
        if failure.is_none() {
            if let Err(e) = metrics.serialize(row).and_then(|_| metrics.flush().map_err(Into::into)) {
                failure = Some(e);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    let mut policy = result.policy;
    policy.epsilon = schedule.epsilon;
    policy.to_checkpoint(&dag).save(&out.join("checkpoint.json"))?;
    if let Some(last) = result.metrics.last() {
        eprintln!("step {} l1_error {:.6} log_Z {:.6}", last.step, last.l1_error, last.log_z);
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalRow {
    hash: String,
    aut: String,
    class_size: f64,
    reward: f64,
    p_model: f64,
    p_target: f64,
}

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    let cfg = RunConfig::resolve(args.config.as_deref(), args.run)?;
    let schedule = cfg.schedule()?;
    let env = cfg.environment()?;
    let dag = enumerate(&env)?;
    let mut policy = load_policy(&dag, args.checkpoint.as_deref())?;
    policy.epsilon = 0.0;
    let model = policy::exact_terminating_distribution(&dag, &policy);
    let target = dag.target_with(|s| s.reward.powf(schedule.beta));
    let mut w = csv::Writer::from_writer(sink(args.output.as_deref())?);
    for (i, &x) in dag.terminals.iter().enumerate() {
        let s = dag.state(x);
        w.serialize(EvalRow {
            hash: s.form.hash_hex(),
            aut: s.aut_order.to_string(),
            class_size: dag.class_size(x),
            reward: s.reward,
            p_model: model.probs[i],
            p_target: target.probs[i],
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct LikelihoodRow {
    terminal: usize,
    hash: String,
    samples: usize,
    estimate: Option<f64>,
    exact: Option<f64>,
    abs_error: Option<f64>,
    std_error: Option<f64>,
    error: String,
}

pub fn cmd_likelihood(args: LikelihoodArgs) -> Result<()> {
    let cfg = RunConfig::resolve(args.config.as_deref(), args.run)?;
    let schedule = cfg.schedule()?;
    let env = cfg.environment()?;
    let dag = enumerate(&env)?;
    let policy = load_policy(&dag, args.checkpoint.as_deref())?;
    let exact = policy::exact_terminating_distribution(&dag, &policy);
    let ctx = Context::new(&env, &dag, schedule.beta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    if args.samples.contains(&0) {
        return Err(Error::Config("sample counts must be positive".into()));
    }
    let reader = BufReader::new(File::open(&args.terminals)?);
    let mut w = csv::Writer::from_writer(sink(args.output.as_deref())?);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let found = LabeledGraph::from_json(&line).and_then(|g| {
            let (s, _) = dag.locate(&g)?;
            match dag.terminal_index(s) {
                Some(k) => Ok((s, k)),
                None => Err(Error::InvalidTrajectory("not a terminal state".into())),
            }
        });
        for &m in &args.samples {
            let row = match &found {
                Ok((s, k)) => {
                    let est = training::estimate_likelihood(&ctx, &policy, *s, m, &mut rng)?;
                    LikelihoodRow {
                        terminal: i,
                        hash: dag.state(*s).form.hash_hex(),
                        samples: m,
                        estimate: Some(est.estimate),
                        exact: Some(exact.probs[*k]),
                        abs_error: Some((est.estimate - exact.probs[*k]).abs()),
                        std_error: est.std_error.is_finite().then_some(est.std_error),
                        error: String::new(),
                    }
                }
                Err(e) => LikelihoodRow {
                    terminal: i,
                    hash: String::new(),
                    samples: m,
                    estimate: None,
                    exact: None,
                    abs_error: None,
                    std_error: None,
                    error: e.to_string(),
                },
            };
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SymRow {
    id: usize,
    n: Option<usize>,
    aut: String,
    node_orbits: Option<usize>,
    micros: Option<u128>,
    error: String,
}

pub fn cmd_symcheck(args: SymcheckArgs) -> Result<()> {
    let reader = BufReader::new(File::open(&args.graphs)?);
    let mut w = csv::Writer::from_writer(sink(args.output.as_deref())?);
    for (id, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = match LabeledGraph::from_json(&line) {
            Ok(g) => {
                let t = Instant::now();
                let group = automorphism_group(&g);
                let micros = t.elapsed().as_micros();
                let orbits = group.node_orbits();
                SymRow {
                    id,
                    n: Some(g.n()),
                    aut: group.order().to_string(),
                    node_orbits: Some(orbits.len()),
                    micros: Some(micros),
                    error: String::new(),
                }
            }
            Err(e) => SymRow {
                id,
                n: None,
                aut: String::new(),
                node_orbits: None,
                micros: None,
                error: e.to_string(),
            },
        };
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_enumerate(args: EnumerateArgs) -> Result<()> {
    let cfg = RunConfig::resolve(args.config.as_deref(), args.run)?;
    let env = cfg.environment()?;
    let t = Instant::now();
    let dag = enumerate(&env)?;
    println!("env {}", env.name);
    println!("states {}", dag.len());
    println!("terminals {}", dag.terminals.len());
    println!("seconds {:.3}", t.elapsed().as_secs_f64());
    if let Some(p) = &args.output {
        let mut w = sink(Some(p))?;
        dag.export_jsonl(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// Exit code for an error: 1 for configuration problems, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidVocabulary(_) | Error::UnsupportedMode(_) | Error::Json(_) => 1,
        _ => 2,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Likelihood(a) => cmd_likelihood(a),
        Command::Symcheck(a) => cmd_symcheck(a),
        Command::Enumerate(a) => cmd_enumerate(a),
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
