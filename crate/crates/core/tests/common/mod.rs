#![allow(dead_code)]

use std::collections::BTreeSet;

use detdec::envs::{BenchmarkSpec, Instance};
use detdec::mdp;
use detdec::rng::{self, SplitMix64};
use detdec::{DetDecPomdp, Fsc, JointPolicy, Observation};

/// Small random instances: MACTP with side at most 3 and at most 4
/// stochastic edges, Collecting on at most 3x3 with one box.
pub fn small_instances(count: usize, seed: u64) -> Vec<(String, Instance)> {
    let mut r = rng::stream(seed, "small-instances");
    let mut out = Vec::with_capacity(count);
    let mut k = 0u64;
    while out.len() < count {
        k += 1;
        let spec = if out.len() % 3 == 2 {
            let (h, w) = [(3, 3), (2, 3), (3, 2)][rng::below(&mut r, 3)];
            BenchmarkSpec::Collecting { h, w, agents: 1 + rng::below(&mut r, 2), boxes: 1 }
        } else {
            let n = 2 + rng::below(&mut r, 2);
            BenchmarkSpec::Mactp { n, agents: 1 + rng::below(&mut r, 2), edges: 1 + rng::below(&mut r, 4) }
        };
        let inst_seed = seed.wrapping_mul(1000).wrapping_add(k);
        if let Ok(desc) = spec.generate(inst_seed, 0.95) {
            out.push((format!("{} seed {inst_seed}", spec.label()), desc.build().unwrap()));
        }
    }
    out
}

/// Observations each agent can receive from any reachable state.
pub fn seen_observations(model: &dyn DetDecPomdp) -> Vec<Vec<Observation>> {
    let states = mdp::reachable_states(model, &model.initial_belief(), 1_000_000).unwrap();
    let mut seen = vec![BTreeSet::new(); model.agent_count()];
    for s in states {
        for j in 0..model.joint_action_count() {
            let t = model.step(s, &model.joint_action(j)).unwrap();
            for (i, set) in seen.iter_mut().enumerate() {
                set.insert(t.observation.agent(i));
            }
        }
    }
    seen.into_iter().map(|s| s.into_iter().collect()).collect()
}

pub fn random_policy(model: &dyn DetDecPomdp, observations: &[Vec<Observation>], r: &mut SplitMix64) -> JointPolicy {
    JointPolicy::new(
        (0..model.agent_count())
            .map(|i| {
                let nodes = 1 + rng::below(r, 4);
                Fsc::random(r, nodes, model.action_count(i), &observations[i])
            })
            .collect(),
    )
}
