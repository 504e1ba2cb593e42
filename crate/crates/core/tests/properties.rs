mod common;

use proptest::prelude::*;

use detdec::bestresponse::{build_br_detpomdp, build_init_detpomdp};
use detdec::detpomdp::{self, belief_successors, DetPomdp};
use detdec::envs::BenchmarkSpec;
use detdec::eval;
use detdec::idpp::{self, IdppParams, RunStatus};
use detdec::mdp;
use detdec::rng;
use detdec::{DetDecPomdp, Fsc, JointPolicy};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn br_value_matches_joint_value(seed in any::<u64>()) {
        let (_, m) = common::small_instances(1, seed).pop().unwrap();
        let obs = common::seen_observations(&m);
        let policy = common::random_policy(&m, &obs, &mut rng::stream(seed, "policy"));
        let joint = eval::exact_value(&m, &policy).unwrap();
        for i in 0..m.agent_count() {
            let br = build_br_detpomdp(&m, &policy, i).unwrap();
            let v = detpomdp::fsc_value(&br, &policy.agents[i], &br.initial_ext_belief()).unwrap();
            prop_assert!((v - joint).abs() <= 1e-9, "agent {i}: {v} vs {joint}");
        }
    }

    #[test]
    fn successors_partition_and_shrink(seed in any::<u64>(), actions in proptest::collection::vec(0u32..5, 1..30)) {
        let (_, m) = common::small_instances(1, seed).pop().unwrap();
        let obs = common::seen_observations(&m);
        let policy = common::random_policy(&m, &obs, &mut rng::stream(seed, "policy"));
        let br = build_br_detpomdp(&m, &policy, 0).unwrap();
        let mut b = br.initial_ext_belief();
        for a in actions {
            let succ = belief_successors(&br, &b, a).unwrap();
            let mass: f64 = succ.branches.iter().map(|s| s.probability).sum();
            prop_assert!((mass - 1.0).abs() <= 1e-9);
            let total: usize = succ.branches.iter().map(|s| s.posterior.len()).sum();
            prop_assert!(total <= b.len());
            let mut prev = None;
            for s in &succ.branches {
                prop_assert!(s.posterior.is_canonical());
                prop_assert!(prev < Some(s.observation));
                prev = Some(s.observation);
            }
            b = succ.branches[0].posterior.clone();
        }
    }

    #[test]
    fn truncation_bound_holds(seed in any::<u64>(), horizon in 1usize..60) {
        let (_, m) = common::small_instances(1, seed).pop().unwrap();
        let obs = common::seen_observations(&m);
        let policy = common::random_policy(&m, &obs, &mut rng::stream(seed, "policy"));
        let (lo, hi) = m.reward_range();
        let bound = m.discount().powi(horizon as i32) * lo.abs().max(hi.abs()) / (1.0 - m.discount());
        for &(s, _) in m.initial_belief().atoms() {
            let exact = eval::trajectory_return(&m, &policy, s).unwrap();
            let truncated = eval::truncated_return(&m, &policy, s, horizon).unwrap();
            prop_assert!((exact - truncated).abs() <= bound + 1e-9);
        }
    }

    #[test]
    fn monte_carlo_is_seed_deterministic(seed in any::<u64>(), episodes in 1usize..500) {
        let (_, m) = common::small_instances(1, seed).pop().unwrap();
        let obs = common::seen_observations(&m);
        let policy = common::random_policy(&m, &obs, &mut rng::stream(seed, "policy"));
        let a = eval::mc_value(&m, &policy, episodes, 50, seed).unwrap();
        prop_assert_eq!(a, eval::mc_value(&m, &policy, episodes, 50, seed).unwrap());
        prop_assert!(a.std_error >= 0.0);
    }

    #[test]
    fn solver_bounds_bracket_controller(seed in any::<u64>()) {
        let (_, m) = common::small_instances(1, seed).pop().unwrap();
        let obs = common::seen_observations(&m);
        let policy = common::random_policy(&m, &obs, &mut rng::stream(seed, "policy"));
        let table = mdp::value_iteration(&m, 1e-9, &m.initial_belief(), 1_000_000).unwrap();
        let br = build_br_detpomdp(&m, &policy, 0).unwrap().with_upper_bounds(&table);
        let b0 = br.initial_ext_belief();
        let out = detpomdp::solve(&br, &b0, &Default::default()).unwrap();
        let incumbent = detpomdp::fsc_value(&br, &policy.agents[0], &b0).unwrap();
        prop_assert!(out.lower <= out.upper);
        prop_assert!(out.upper + 1e-9 >= incumbent);
        prop_assert!(out.upper <= detpomdp::upper_bound(&br, &b0) + 1e-9);
        prop_assert!(out.lower + 1e-9 >= detpomdp::lower_bound(&br, &b0).unwrap().0);
    }
}

#[test]
fn single_agent_init_model_equals_br_model() {
    let m = BenchmarkSpec::Mactp { n: 3, agents: 1, edges: 3 }.generate(4, 0.95).unwrap().build().unwrap();
    let table = mdp::value_iteration(&m, 1e-9, &m.initial_belief(), 1_000_000).unwrap();
    let pi = mdp::default_policy(&table, &m).unwrap();
    let init = build_init_detpomdp(&m, 0, &pi).unwrap();
    let policy = JointPolicy::new(vec![Fsc::constant(0)]);
    let br = build_br_detpomdp(&m, &policy, 0).unwrap();
    assert_eq!(init.initial_ext_belief(), br.initial_ext_belief());
    let mut frontier: Vec<u128> = br.initial_ext_belief().support().collect();
    for _ in 0..6 {
        let mut next = Vec::new();
        for &e in &frontier {
            for a in 0..5 {
                let x = br.step(e, a).unwrap();
                assert_eq!(x, init.step(e, a).unwrap());
                next.push(x.next);
            }
        }
        next.sort();
        next.dedup();
        frontier = next;
    }
}

#[test]
fn perturbed_equilibrium_has_positive_gap() {
    let params = IdppParams::default();
    let m = BenchmarkSpec::Mactp { n: 3, agents: 2, edges: 5 }.generate(2, 0.95).unwrap().build().unwrap();
    let out = idpp::run(&m, &params).unwrap();
    assert_eq!(out.status, RunStatus::Converged);
    let gaps = idpp::nash_check(&m, &out.policy, &params).unwrap();
    assert!(gaps.iter().all(|&g| g <= params.convergence_tolerance + params.solver.epsilon));

    // flip the first on-path action of agent 0 to one that loses value
    let mut perturbed = None;
    for a in 0..5 {
        let mut fsc = out.policy.agents[0].clone();
        let start = fsc.initial as usize;
        if fsc.nodes[start].action == a {
            continue;
        }
        fsc.nodes[start].action = a;
        let candidate = out.policy.with_agent(0, fsc);
        if eval::exact_value(&m, &candidate).unwrap() < out.value - 1e-3 {
            perturbed = Some(candidate);
            break;
        }
    }
    let perturbed = perturbed.expect("some action change must lose value");
    let gaps = idpp::nash_check(&m, &perturbed, &params).unwrap();
    assert!(gaps.iter().any(|&g| g > params.convergence_tolerance), "{gaps:?}");
}

#[test]
fn heuristic_init_is_reproducible() {
    let m = BenchmarkSpec::Collecting { h: 4, w: 3, agents: 2, boxes: 2 }.generate(3, 0.95).unwrap().build().unwrap();
    let params = IdppParams::default();
    let a = idpp::heuristic_init(&m, &params).unwrap();
    let b = idpp::heuristic_init(&m, &params).unwrap();
    assert_eq!(a.policy, b.policy);
}
