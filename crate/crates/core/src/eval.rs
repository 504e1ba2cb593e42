//! Exact and Monte Carlo evaluation of joint controllers.
//!
//! From a fixed initial state the joint system (environment state plus every
//! agent's controller node) evolves deterministically over a finite space, so
//! each trajectory ends in an absorbing state or a cycle and its discounted
//! return has a closed form.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::fsc::{JointPolicy, NodeId};
use crate::model::{DetDecPomdp, JointAction, StateId};
use crate::rng;

/// Default Monte Carlo horizon.
pub const DEFAULT_HORIZON: usize = 100;
pub const DEFAULT_EPISODES: usize = 100_000;

type SystemState = (StateId, SmallVec<[NodeId; 4]>);

fn joint_step(model: &dyn DetDecPomdp, policy: &JointPolicy, x: &SystemState) -> Result<(f64, SystemState)> {
    let actions: SmallVec<[u32; 4]> = policy.agents.iter().zip(&x.1).map(|(f, &n)| f.act(n)).collect::<Result<_>>()?;
    let t = model.step(x.0, &JointAction(actions))?;
    let nodes = policy
        .agents
        .iter()
        .zip(&x.1)
        .enumerate()
        .map(|(i, (f, &n))| f.advance(n, t.observation.agent(i)))
        .collect::<Result<_>>()?;
    Ok((t.reward, (t.next, nodes)))
}

/// Exact discounted return of the trajectory from `s0` with every controller
/// at its initial node.
pub fn trajectory_return(model: &dyn DetDecPomdp, policy: &JointPolicy, s0: StateId) -> Result<f64> {
    let gamma = model.discount();
    let mut seen: HashMap<SystemState, usize> = HashMap::new();
    let mut rewards: Vec<f64> = Vec::new();
    let mut x: SystemState = (s0, policy.agents.iter().map(|f| f.initial).collect());
    let (k, cycle_len) = loop {
        if model.is_terminal(x.0) {
            break (rewards.len(), 0);
        }
        if let Some(&k) = seen.get(&x) {
            break (k, rewards.len() - k);
        }
        seen.insert(x.clone(), rewards.len());
        let (r, next) = joint_step(model, policy, &x)?;
        rewards.push(r);
        x = next;
    };
    let mut prefix = 0.0;
    let mut disc = 1.0;
    for &r in &rewards[..k] {
        prefix += disc * r;
        disc *= gamma;
    }
    if cycle_len == 0 {
        return Ok(prefix);
    }
    let mut cycle = 0.0;
    let mut cdisc = 1.0;
    for &r in &rewards[k..] {
        cycle += cdisc * r;
        cdisc *= gamma;
    }
    Ok(prefix + disc * cycle / (1.0 - cdisc))
}

/// Exact expected discounted return over the initial belief.
pub fn exact_value(model: &dyn DetDecPomdp, policy: &JointPolicy) -> Result<f64> {
    ExactEvaluator::new(model, policy)?.value()
}

/// Exact evaluator that memoizes per-initial-state returns.
pub struct ExactEvaluator<'a> {
    model: &'a dyn DetDecPomdp,
    policy: &'a JointPolicy,
    returns: HashMap<StateId, f64>,
}

impl<'a> ExactEvaluator<'a> {
    pub fn new(model: &'a dyn DetDecPomdp, policy: &'a JointPolicy) -> Result<Self> {
        policy.check_against(model)?;
        Ok(ExactEvaluator { model, policy, returns: HashMap::new() })
    }

    pub fn state_return(&mut self, s0: StateId) -> Result<f64> {
        if let Some(&g) = self.returns.get(&s0) {
            return Ok(g);
        }
        let g = trajectory_return(self.model, self.policy, s0)?;
        self.returns.insert(s0, g);
        Ok(g)
    }

    pub fn value(&mut self) -> Result<f64> {
        let b0 = self.model.initial_belief();
        let mut v = 0.0;
        for &(s, w) in b0.atoms() {
            v += w * self.state_return(s)?;
        }
        Ok(v)
    }
}

/// Discounted return of the first `horizon` steps from `s0`.
pub fn truncated_return(model: &dyn DetDecPomdp, policy: &JointPolicy, s0: StateId, horizon: usize) -> Result<f64> {
    let gamma = model.discount();
    let mut x: SystemState = (s0, policy.agents.iter().map(|f| f.initial).collect());
    let mut g = 0.0;
    let mut disc = 1.0;
    for _ in 0..horizon {
        if model.is_terminal(x.0) {
            break;
        }
        let (r, next) = joint_step(model, policy, &x)?;
        g += disc * r;
        disc *= gamma;
        x = next;
    }
    Ok(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Set when a single episode makes the standard error meaningless.
    pub degenerate: bool,
}

/// Monte Carlo estimate: `episodes` initial states drawn from the initial
/// belief, each rolled out for `horizon` steps or until termination. Episode
/// `k` draws from its own stream, so the estimate depends only on
/// `(seed, episodes, horizon)`.
pub fn mc_value(
    model: &dyn DetDecPomdp,
    policy: &JointPolicy,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<McEstimate> {
    if episodes == 0 || horizon == 0 {
        return Err(Error::invalid("episodes and horizon must be positive"));
    }
    policy.check_against(model)?;
    let b0 = model.initial_belief();
    let mut cumulative = Vec::with_capacity(b0.len());
    let mut acc = 0.0;
    for &(_, w) in b0.atoms() {
        acc += w;
        cumulative.push(acc);
    }
    // the rollout from a given initial state is deterministic
    let mut returns: Vec<Option<f64>> = vec![None; b0.len()];
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 0..episodes {
        let u = rng::unit(&mut rng::indexed_stream(seed, "evaluation", k as u64)) * acc;
        let idx = cumulative.partition_point(|&c| c <= u).min(b0.len() - 1);
        let g = match returns[idx] {
            Some(g) => g,
            None => {
                let g = truncated_return(model, policy, b0.atoms()[idx].0, horizon)?;
                returns[idx] = Some(g);
                g
            }
        };
        let n = (k + 1) as f64;
        let delta = g - mean;
        mean += delta / n;
        m2 += delta * (g - mean);
    }
    let degenerate = episodes == 1;
    if degenerate {
        log::warn!("a single Monte Carlo episode gives no standard error");
    }
    let std_error =
        if degenerate { 0.0 } else { (m2 / (episodes - 1) as f64).max(0.0).sqrt() / (episodes as f64).sqrt() };
    Ok(McEstimate { mean, std_error, degenerate })
}

/// Evaluation summary written next to a policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub exact_value: Option<f64>,
    pub mc_mean: f64,
    pub mc_std_error: f64,
    pub episodes: usize,
    pub horizon: usize,
    pub seed: u64,
    #[serde(default)]
    pub degenerate: bool,
}

impl EvalReport {
    pub fn run(
        model: &dyn DetDecPomdp,
        policy: &JointPolicy,
        exact: bool,
        episodes: usize,
        horizon: usize,
        seed: u64,
    ) -> Result<Self> {
        let exact_value = if exact { Some(exact_value(model, policy)?) } else { None };
        let mc = mc_value(model, policy, episodes, horizon, seed)?;
        Ok(EvalReport {
            exact_value,
            mc_mean: mc.mean,
            mc_std_error: mc.std_error,
            episodes,
            horizon,
            seed,
            degenerate: mc.degenerate,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}
