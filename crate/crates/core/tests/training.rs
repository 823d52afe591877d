mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sagfn::env::{EnvConfig, EnvKind, Environment};
use sagfn::fragments::Vocabulary;
use sagfn::policy::{exact_terminating_distribution, Checkpoint, EdgeFlowTable, PolicyTable};
use sagfn::state_space::{enumerate, StateDag};
use common::{check_gradient, Point};
use sagfn::training::{
    db_loss, estimate_likelihood, fm_loss, tb_loss, train, Context, CorrectionMode, Objective, Param,
    Schedule,
};
use sagfn::Error;

fn gradient_envs() -> Vec<(Environment, StateDag)> {
    [
        Environment::illustrative(),
        Environment::cycle_with(6, 7, 4),
        Environment::fragment(Vocabulary::standard(), 3),
    ]
    .into_iter()
    .map(|e| {
        let d = enumerate(&e).unwrap();
        (e, d)
    })
    .collect()
}

#[test]
fn tb_gradient() {
    let envs = gradient_envs();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..100 {
        let (env, dag) = &envs[i % envs.len()];
        let ctx = Context::new(env, dag, 1.0).unwrap();
        let mode = CorrectionMode::ALL[i % 5];
        let mut pt = Point::random(dag, &mut rng);
        let traj = pt.policy.sample_trajectory(dag, 0.0, &mut rng);
        let mut params = vec![Param::LogZ];
        for &s in &traj.states[..traj.len()] {
            params.extend((0..dag.state(s).forward.len()).map(|c| Param::Logit(s, c)));
        }
        check_gradient(&mut pt, &params, |p| tb_loss(&ctx, &traj, mode, &p.policy).unwrap());
    }
}

#[test]
fn db_gradient() {
    let envs = gradient_envs();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..100 {
        let (env, dag) = &envs[i % envs.len()];
        let ctx = Context::new(env, dag, 1.0).unwrap();
        let mode = CorrectionMode::ALL[i % 5];
        let mut pt = Point::random(dag, &mut rng);
        let traj = pt.policy.sample_trajectory(dag, 0.0, &mut rng);
        let k = rng.gen_range(0..traj.len());
        let (s, c) = (traj.states[k], traj.classes[k]);
        let t = traj.states[k + 1];
        let mut params = vec![Param::LogZ, Param::Flow(s), Param::Flow(t)];
        params.extend((0..dag.state(s).forward.len()).map(|c| Param::Logit(s, c)));
        check_gradient(&mut pt, &params, |p| db_loss(&ctx, s, c, mode, &p.policy, &p.flows));
    }
}

#[test]
fn fm_gradient() {
    let envs = gradient_envs();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..100 {
        let (env, dag) = &envs[i % 2];
        let ctx = Context::new(env, dag, 1.0).unwrap();
        let mode = CorrectionMode::ALL[i % 5];
        let mut pt = Point::random(dag, &mut rng);
        let s = rng.gen_range(0..dag.len());
        let node = dag.state(s);
        let mut params = vec![Param::LogZ];
        params.extend((0..node.forward.len()).map(|c| Param::EdgeFlow(s, c)));
        params.extend(node.backward.iter().map(|b| Param::EdgeFlow(b.source, b.forward)));
        check_gradient(&mut pt, &params, |p| fm_loss(&ctx, s, mode, &p.edges, p.policy.log_z).unwrap());
    }
}

#[test]
fn fm_rejects_fragment_env() {
    let env = Environment::fragment(Vocabulary::standard(), 2);
    let dag = enumerate(&env).unwrap();
    let ctx = Context::new(&env, &dag, 1.0).unwrap();
    let edges = EdgeFlowTable::zeros(&dag);
    assert!(matches!(
        fm_loss(&ctx, dag.initial, CorrectionMode::FlowScaling, &edges, 0.0),
        Err(Error::UnsupportedMode(_))
    ));
    let s = Schedule { steps: 5, ..Schedule::default() };
    assert!(matches!(
        train(&env, &dag, Objective::Fm, CorrectionMode::Vanilla, &s),
        Err(Error::UnsupportedMode(_))
    ));
}

#[test]
fn reward_and_flow_scaling_agree_under_tb() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (env, dag) in gradient_envs() {
        let ctx = Context::new(&env, &dag, 1.0).unwrap();
        for _ in 0..200 {
            let pt = Point::random(&dag, &mut rng);
            let traj = pt.policy.sample_trajectory(&dag, 0.0, &mut rng);
            let rs = tb_loss(&ctx, &traj, CorrectionMode::RewardScaling, &pt.policy).unwrap().0;
            let fs = tb_loss(&ctx, &traj, CorrectionMode::FlowScaling, &pt.policy).unwrap().0;
            assert!((rs - fs).abs() < 1e-10 * rs.max(1.0), "{} {rs} {fs}", env.name);
        }
    }
}

#[test]
fn zero_steps_returns_initial_policy() {
    let env = Environment::illustrative();
    let dag = enumerate(&env).unwrap();
    for obj in [Objective::Tb, Objective::Db, Objective::Fm] {
        let s = Schedule { steps: 0, ..Schedule::default() };
        let res = train(&env, &dag, obj, CorrectionMode::RewardScaling, &s).unwrap();
        let start = match obj {
            Objective::Fm => EdgeFlowTable::zeros(&dag).to_policy(&dag, 0.0),
            _ => PolicyTable::uniform(&dag),
        };
        assert_eq!(res.policy.logits, start.logits);
        assert_eq!(res.metrics.len(), 1);
        assert_eq!(res.metrics[0].step, 0);
    }
}

#[test]
fn training_is_deterministic_and_checkpoints_roundtrip() {
    let env = Environment::illustrative();
    let dag = enumerate(&env).unwrap();
    let s = Schedule { steps: 300, eval_every: 100, seed: 9, ..Schedule::default() };
    let a = train(&env, &dag, Objective::Tb, CorrectionMode::TransitionCorrection, &s).unwrap();
    let b = train(&env, &dag, Objective::Tb, CorrectionMode::TransitionCorrection, &s).unwrap();
    let key = |r: &sagfn::training::MetricRow| (r.step, r.l1_error.to_bits(), r.log_z.to_bits(), r.loss_mean.to_bits());
    assert_eq!(a.metrics.iter().map(key).collect::<Vec<_>>(), b.metrics.iter().map(key).collect::<Vec<_>>());
    assert_eq!(a.policy.logits, b.policy.logits);
    assert_eq!(a.metrics.iter().map(|m| m.step).collect::<Vec<_>>(), vec![0, 100, 200, 300]);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    a.policy.to_checkpoint(&dag).save(&path).unwrap();
    let back = PolicyTable::from_checkpoint(&dag, &Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(back.logits, a.policy.logits);
    assert_eq!(back.log_z, a.policy.log_z);
}

#[test]
fn single_path_estimate_is_exact() {
    let cfg = EnvConfig { env: Some(EnvKind::Illustrative), max_nodes: Some(3), ..EnvConfig::default() };
    let env = Environment::from_config(&cfg).unwrap();
    let dag = enumerate(&env).unwrap();
    let ctx = Context::new(&env, &dag, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pt = Point::random(&dag, &mut rng);
    let exact = exact_terminating_distribution(&dag, &pt.policy);
    assert_eq!(dag.terminals.len(), 2);
    for (k, &x) in dag.terminals.iter().enumerate() {
        let e = estimate_likelihood(&ctx, &pt.policy, x, 1, &mut rng).unwrap();
        assert!((e.estimate - exact.probs[k]).abs() < 1e-12);
        assert!(e.std_error.is_nan());
    }
    let inner = dag.state(dag.initial).forward[0].target;
    assert!(matches!(estimate_likelihood(&ctx, &pt.policy, inner, 1, &mut rng), Err(Error::InvalidTrajectory(_))));
}

#[test]
fn estimator_is_unbiased() {
    let env = Environment::illustrative();
    let dag = enumerate(&env).unwrap();
    let ctx = Context::new(&env, &dag, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pt = Point::random(&dag, &mut rng);
    let exact = exact_terminating_distribution(&dag, &pt.policy);
    for k in [0, 37, 111] {
        let x = dag.terminals[k];
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| estimate_likelihood(&ctx, &pt.policy, x, 1, &mut rng).unwrap().estimate)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let z = (mean - exact.probs[k]).abs() / (sd / (n as f64).sqrt());
        assert!(z < 4.0, "terminal {k}: mean {mean} exact {} z {z}", exact.probs[k]);
    }
}

#[test]
fn clique_estimates_within_three_standard_errors() {
    let env = Environment::clique_with(5, 0.1);
    let dag = enumerate(&env).unwrap();
    let ctx = Context::new(&env, &dag, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pt = Point::random(&dag, &mut rng);
    let exact = exact_terminating_distribution(&dag, &pt.policy);
    let mut outside = 0;
    for _ in 0..10 {
        let k = rng.gen_range(0..dag.terminals.len());
        let e = estimate_likelihood(&ctx, &pt.policy, dag.terminals[k], 10_000, &mut rng).unwrap();
        if (e.estimate - exact.probs[k]).abs() > 3.0 * e.std_error {
            outside += 1;
        }
    }
    assert!(outside <= 1, "{outside} of 10 outside 3 standard errors");
}
