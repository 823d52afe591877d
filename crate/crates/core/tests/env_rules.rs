mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sagfn::env::{ClassKind, EnvConfig, Environment, GraphAction};
use sagfn::pe::{pe_group, pe_vectors};
use sagfn::state_space::enumerate;
use sagfn::symmetry::{are_isomorphic, automorphism_group};
use sagfn::{Error, LabeledGraph, Permutation};

fn graph(n: usize, edges: &[(usize, usize)]) -> LabeledGraph {
    let e: Vec<_> = edges.iter().map(|&(u, v)| (u, v, 0)).collect();
    LabeledGraph::from_edges(vec![0; n], &e).unwrap()
}

fn add_node(anchor: usize) -> GraphAction {
    GraphAction::AddNode {
        anchor: Some(anchor),
        label: 0,
    }
}

fn add_edge(u: usize, v: usize) -> GraphAction {
    GraphAction::AddEdge { u, v, label: 0 }
}

// path 1-0-2
fn intro_g1() -> LabeledGraph {
    graph(3, &[(0, 1), (0, 2)])
}

// spider with legs 0-1-2, 0-3-4 and a short leg 0-5
fn chain_g1() -> LabeledGraph {
    graph(6, &[(0, 1), (1, 2), (0, 3), (3, 4), (0, 5)])
}

fn appendix_graph() -> LabeledGraph {
    graph(6, &[(0, 5), (0, 4), (1, 3), (1, 4), (1, 5), (2, 4), (4, 5)])
}

fn chorded_hexagon() -> LabeledGraph {
    graph(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (2, 5)])
}

#[test]
fn illustrative_initial_actions() {
    let env = Environment::illustrative();
    let acts = env.forward_actions(&env.initial);
    assert_eq!(acts.len(), 15);
    assert!(acts.iter().all(|a| matches!(a, GraphAction::AddEdge { .. })));
    assert!(env.check_forward(&env.initial, &GraphAction::Stop).is_err());
    assert!(env.backward_actions(&env.initial).is_empty());
}

#[test]
fn single_edge_has_one_backward_action() {
    let env = Environment::illustrative();
    let g = env.apply(&env.initial, &add_edge(0, 3)).unwrap();
    assert_eq!(env.backward_actions(&g), vec![GraphAction::RemoveEdge { u: 0, v: 3 }]);
}

#[test]
fn terminated_graphs() {
    let env = Environment::illustrative();
    let mut g = env.initial.clone();
    for v in 1..6 {
        g = env.apply(&g, &add_edge(0, v)).unwrap();
    }
    let x = env.apply(&g, &GraphAction::Stop).unwrap();
    assert!(x.is_terminated());
    assert!(env.forward_actions(&x).is_empty());
    assert_eq!(env.backward_actions(&x), vec![GraphAction::Unstop]);
    assert_eq!(env.reward(&x).unwrap(), 1.0);
    assert!(env.reward(&g).is_err());
}

#[test]
fn illegal_action_names_rule() {
    let env = Environment::illustrative();
    let g = env.apply(&env.initial, &add_edge(0, 1)).unwrap();
    match env.check_forward(&g, &add_edge(0, 1)) {
        Err(Error::IllegalAction { action, rule }) => {
            assert_eq!(action, "AddEdge(0,1,0)");
            assert!(!rule.is_empty());
        }
        other => panic!("{other:?}"),
    }
    assert!(env.apply(&g, &add_node(0)).is_err());
}

#[test]
fn intro_anchors() {
    let env = Environment::cycle();
    let g1 = intro_g1();
    let a = env.apply(&g1, &add_node(1)).unwrap();
    let b = env.apply(&g1, &add_node(2)).unwrap();
    let c = env.apply(&g1, &add_node(0)).unwrap();
    assert!(are_isomorphic(&a, &b));
    assert!(!are_isomorphic(&a, &c));

    let classes = env.group_by_orbit(&g1, &[add_node(1), add_node(2)]);
    assert_eq!(classes.len(), 1);
    assert_eq!(classes[0].multiplicity, 2);
    assert_eq!(classes[0].kind, ClassKind::Orbit);

    let t = env.group_by_transition(&g1, &[add_node(0), add_node(1)]);
    assert_eq!(t.len(), 2);
    assert_eq!(env.group_by_orbit(&g1, &[add_node(0)])[0].multiplicity, 1);
}

#[test]
fn chain_transitions() {
    let env = Environment::cycle();
    let g1 = chain_g1();
    let g2 = env.apply(&g1, &add_node(5)).unwrap();
    let g3 = env.apply(&g2, &add_edge(2, 4)).unwrap();
    let orders: Vec<u128> = [&g1, &g2, &g3].iter().map(|g| automorphism_group(g).order()).collect();
    assert_eq!(orders, vec![2, 6, 2]);
    let c5_tail = graph(7, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 5), (5, 6)]);
    assert!(are_isomorphic(&g3, &c5_tail));

    // one forward orbit into g2, three backward
    let fwd: Vec<_> = env
        .forward_actions(&g1)
        .into_iter()
        .filter(|a| are_isomorphic(&env.apply(&g1, a).unwrap(), &g2))
        .collect();
    assert_eq!(fwd.len(), 1);
    let bwd = env.backward_actions(&g2);
    assert_eq!(bwd.len(), 3);
    let classes = env.group_by_orbit(&g2, &bwd);
    assert_eq!(classes.len(), 1);
    assert_eq!(classes[0].multiplicity, 3);

    // three forward orbit-equivalent edges into g3, one backward
    let closing: Vec<_> = env
        .forward_actions(&g2)
        .into_iter()
        .filter(|a| are_isomorphic(&env.apply(&g2, a).unwrap(), &g3))
        .collect();
    assert_eq!(closing.len(), 3);
    assert_eq!(env.group_by_orbit(&g2, &closing).len(), 1);
    let back: Vec<_> = env
        .backward_actions(&g3)
        .into_iter()
        .filter(|b| are_isomorphic(&env.apply_backward(&g3, b).unwrap(), &g2))
        .collect();
    assert_eq!(back.len(), 1);
}

#[test]
fn cycle_edges_removable_iff_not_bridge() {
    let env = Environment::cycle();
    let g3 = graph(7, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 5), (5, 6)]);
    let bwd = env.backward_actions(&g3);
    for (u, v, _) in g3.edges() {
        let mut h = g3.clone();
        h.remove_edge(u, v);
        let listed = bwd.contains(&GraphAction::RemoveEdge { u, v });
        assert_eq!(listed, h.is_connected(), "edge {u}-{v}");
    }
}

#[test]
fn tree_forward_pairs() {
    let env = Environment::illustrative();
    let g = chain_g1();
    let adds: Vec<_> = env
        .forward_actions(&g)
        .into_iter()
        .filter(|a| matches!(a, GraphAction::AddEdge { .. }))
        .collect();
    let mut expect = Vec::new();
    for u in 0..6 {
        for v in u + 1..6 {
            if !g.has_edge(u, v) {
                expect.push(add_edge(u, v));
            }
        }
    }
    assert_eq!(adds, expect);
}

#[test]
fn transition_equivalent_but_not_orbit_equivalent() {
    let env = Environment::illustrative();
    let g = appendix_graph();
    let acts = [add_edge(1, 2), add_edge(3, 5)];
    let by_transition = env.group_by_transition(&g, &acts);
    let by_orbit = env.group_by_orbit(&g, &acts);
    assert_eq!(by_transition.len(), 1);
    assert_eq!(by_transition[0].multiplicity, 2);
    assert_eq!(by_transition[0].kind, ClassKind::Transition);
    assert_eq!(by_orbit.len(), 2);

    // the stated witness 1→4, 2→5, 3→1, 4→3, 5→6, 6→2
    let a = env.apply(&g, &acts[0]).unwrap();
    let b = env.apply(&g, &acts[1]).unwrap();
    let p = Permutation::new(vec![3, 4, 0, 2, 5, 1]).unwrap();
    assert_eq!(a.apply_permutation(&p).unwrap(), b);

    // the backward actions split as well
    let ra = env.group_by_orbit(&a, &[GraphAction::RemoveEdge { u: 1, v: 2 }, GraphAction::RemoveEdge { u: 3, v: 5 }]);
    assert_eq!(ra.len(), 2);
}

#[test]
fn chorded_hexagon_edges_stay_distinct() {
    let env = Environment::cycle();
    let g = chorded_hexagon();
    let group = automorphism_group(&g);
    assert_eq!(group.vertex_orbit(1), group.vertex_orbit(3));
    assert_eq!(group.vertex_orbit(1), group.vertex_orbit(4));
    assert_ne!(group.pair_orbit(1, 3), group.pair_orbit(1, 4));

    let dag = enumerate(&env).unwrap();
    let (s, map) = dag.locate(&g).unwrap();
    let c13 = dag.forward_class_of(&env, s, &map, &add_edge(1, 3)).unwrap();
    let c14 = dag.forward_class_of(&env, s, &map, &add_edge(1, 4)).unwrap();
    assert_ne!(c13, c14);
    let t13 = dag.state(s).forward[c13].target;
    let t14 = dag.state(s).forward[c14].target;
    assert_ne!(t13, t14);

    // node-sum encodings cannot separate them
    let pe = pe_vectors(&g);
    assert!(pe.nodes[3].iter().zip(&pe.nodes[4]).all(|(a, b)| (a - b).abs() < 1e-12));
    let merged = pe_group(&g, &[add_edge(1, 3), add_edge(1, 4)]);
    assert_eq!(merged.len(), 1);
}

#[test]
fn apply_and_check_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for env in common::all_envs() {
        for _ in 0..20 {
            for g in common::random_walk(&env, &mut rng) {
                let legal = env.forward_actions(&g);
                let mut sorted = legal.clone();
                sorted.sort();
                sorted.dedup();
                assert_eq!(sorted, legal, "{}", env.name);
                for a in &legal {
                    env.check_forward(&g, a).unwrap();
                }
                let n = g.n().max(1);
                for _ in 0..10 {
                    let (u, v) = (rng.gen_range(0..n + 1), rng.gen_range(0..n + 1));
                    let cand = [
                        GraphAction::AddEdge { u: u.min(v), v: u.max(v), label: rng.gen_range(0..3) },
                        GraphAction::AddNode { anchor: Some(u), label: rng.gen_range(0..3) },
                        GraphAction::SetNodeAttribute { u, value: rng.gen_range(0..3) },
                        GraphAction::AddFragment { fragment: rng.gen_range(0..6) },
                        GraphAction::AddFragmentEdge { u: u.min(v), v: u.max(v) },
                        GraphAction::Stop,
                    ];
                    for a in &cand {
                        assert_eq!(env.check_forward(&g, a).is_ok(), legal.contains(a), "{} {a}", env.name);
                    }
                }
                let back = env.backward_actions(&g);
                for b in &back {
                    env.check_backward(&g, b).unwrap();
                }
                for v in 0..g.n() {
                    let b = GraphAction::RemoveNode { v };
                    assert_eq!(env.check_backward(&g, &b).is_ok(), back.contains(&b));
                }
            }
        }
    }
}

#[test]
fn actions_reverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for env in common::all_envs() {
        for _ in 0..10 {
            for g in common::random_walk(&env, &mut rng) {
                for a in env.forward_actions(&g) {
                    let next = env.apply(&g, &a).unwrap();
                    let b = env.reverse_forward(&g, &a);
                    assert!(env.backward_actions(&next).contains(&b), "{} {a} -> {b}", env.name);
                    assert_eq!(env.apply_backward(&next, &b).unwrap(), g);
                }
                for b in env.backward_actions(&g) {
                    let prev = env.apply_backward(&g, &b).unwrap();
                    let a = env.reverse_backward(&g, &b);
                    assert!(env.forward_actions(&prev).contains(&a), "{} {b} -> {a}", env.name);
                    assert!(are_isomorphic(&env.apply(&prev, &a).unwrap(), &g));
                }
            }
        }
    }
}

#[test]
fn actions_are_structured() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for env in common::all_envs() {
        for _ in 0..10 {
            for g in common::random_walk(&env, &mut rng) {
                let p = common::random_perm(&mut rng, g.n());
                let h = g.apply_permutation(&p).unwrap();
                let mut mapped: Vec<_> = env.forward_actions(&g).iter().map(|a| a.relabel(p.as_slice())).collect();
                mapped.sort();
                assert_eq!(mapped, env.forward_actions(&h), "{}", env.name);
                let mut back: Vec<_> = env.backward_actions(&g).iter().map(|a| a.relabel(p.as_slice())).collect();
                back.sort();
                let mut expect = env.backward_actions(&h);
                expect.sort();
                assert_eq!(back, expect, "{}", env.name);
            }
        }
    }
}

#[test]
fn orbit_classes_refine_transition_classes() {
    let envs = [
        Environment::illustrative(),
        Environment::clique_with(5, 0.1),
        Environment::cycle_with(7, 10, 4),
        Environment::fragment(sagfn::fragments::Vocabulary::standard(), 3),
        Environment::catalog(4),
    ];
    for env in envs {
        let dag = enumerate(&env).unwrap();
        for node in &dag.states {
            let g = &node.graph;
            for acts in [env.forward_actions(g), env.backward_actions(g)] {
                let orbit = env.group_by_orbit(g, &acts);
                let trans = env.group_by_transition(g, &acts);
                assert!(orbit.len() >= trans.len());
                assert_eq!(orbit.iter().map(|c| c.multiplicity).sum::<usize>(), acts.len());
                for c in &orbit {
                    let owners = trans
                        .iter()
                        .filter(|t| c.members.iter().any(|m| t.members.contains(m)))
                        .count();
                    assert_eq!(owners, 1, "{}", env.name);
                    let t = trans.iter().find(|t| t.members.contains(&c.representative)).unwrap();
                    assert!(c.members.iter().all(|m| t.members.contains(m)));
                }
            }
        }
    }
}

#[test]
fn rewards() {
    let clique = Environment::clique();
    let mut k4 = graph(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
    k4.set_attr(sagfn::graph::TERMINATED, 1);
    assert!((clique.reward(&k4).unwrap() - 1.1).abs() < 1e-12);
    k4.set_label(0, 1);
    assert!((clique.reward(&k4).unwrap() - 1.1).abs() < 1e-12);
    k4.set_label(1, 1);
    assert!((clique.reward(&k4).unwrap() - 0.1).abs() < 1e-12);

    let cycle = Environment::cycle();
    let mut tree = chain_g1();
    tree.set_attr(sagfn::graph::TERMINATED, 1);
    assert_eq!(cycle.reward(&tree).unwrap(), 1.0);
    let mut c = chorded_hexagon();
    c.set_attr(sagfn::graph::TERMINATED, 1);
    assert_eq!(cycle.reward(&c).unwrap(), 3.0);
}

#[test]
fn reward_brute_force_cliques() {
    let env = Environment::clique();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let mut g = common::random_graph(&mut rng, 7, 0.7, 2, 1);
        g.set_attr(sagfn::graph::TERMINATED, 1);
        let mut count = 0;
        for mask in 0u32..128 {
            if mask.count_ones() != 4 {
                continue;
            }
            let vs: Vec<usize> = (0..7).filter(|v| mask >> v & 1 == 1).collect();
            let complete = vs.iter().all(|&a| vs.iter().all(|&b| a == b || g.has_edge(a, b)));
            let ones = vs.iter().filter(|&&v| g.label(v) == 1).count();
            if complete && (ones >= 3 || ones <= 1) {
                count += 1;
            }
        }
        assert!((env.reward(&g).unwrap() - (0.1 + count as f64)).abs() < 1e-9);
    }
}

#[test]
fn env_config() {
    let cfg: EnvConfig = serde_json::from_str(r#"{"env": "cycle", "max_nodes": 6, "reward_floor": 2.0}"#).unwrap();
    let env = Environment::from_config(&cfg).unwrap();
    assert_eq!(env.rules.max_nodes, 6);
    assert!(serde_json::from_str::<EnvConfig>(r#"{"env": "cycle", "colour": 1}"#).is_err());
    assert!(Environment::from_config(&EnvConfig::default()).is_err());
}
