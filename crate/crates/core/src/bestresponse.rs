//! Single-agent views of a multi-agent model.
//!
//! With every other agent's behavior frozen, agent `i` faces a deterministic
//! POMDP over extended states: the environment state, the other agents'
//! controller nodes, and agent `i`'s latest observation. Since the joint
//! observation is a function of the state and joint action, the other agents'
//! node updates are deterministic too.

use smallvec::SmallVec;

use crate::detpomdp::{DetPomdp, DetStep};
use crate::error::{Error, Result};
use crate::fsc::{JointPolicy, NodeId};
use crate::mdp::{MdpPolicy, MdpValueTable};
use crate::model::{Action, DetDecPomdp, JointAction, Observation, StateId, SupportBelief};

/// Packed extended state.
pub type ExtId = u128;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExtState {
    pub env: StateId,
    /// Node of every agent other than the planning one, in agent order.
    pub other_nodes: SmallVec<[NodeId; 4]>,
    /// Planning agent's latest observation, or the start symbol at t = 0.
    pub last_obs: Observation,
}

/// How the other agents choose actions.
#[derive(Clone, Copy, Debug)]
pub enum Others<'a> {
    Controllers(&'a JointPolicy),
    /// Components of the centralized greedy joint action.
    Centralized(&'a MdpPolicy),
}

pub struct BrDetPomdp<'a> {
    model: &'a dyn DetDecPomdp,
    agent: usize,
    others: Others<'a>,
    /// Agents other than `agent`, ascending.
    other_agents: Vec<usize>,
    node_radix: Vec<u128>,
    node_span: u128,
    obs_radix: u128,
    values: Option<&'a MdpValueTable>,
}

/// Best-response model of agent `i` against the other controllers in `policy`.
pub fn build_br_detpomdp<'a>(model: &'a dyn DetDecPomdp, policy: &'a JointPolicy, i: usize) -> Result<BrDetPomdp<'a>> {
    if policy.agent_count() != model.agent_count() {
        return Err(Error::invalid(format!(
            "policy has {} controllers, model has {} agents",
            policy.agent_count(),
            model.agent_count()
        )));
    }
    policy.check_against(model).map_err(|e| Error::invalid(e.to_string()))?;
    BrDetPomdp::new(model, i, Others::Controllers(policy))
}

/// Initialization model of agent `i`: the others follow their components of
/// the centralized greedy policy.
pub fn build_init_detpomdp<'a>(model: &'a dyn DetDecPomdp, i: usize, pi_mdp: &'a MdpPolicy) -> Result<BrDetPomdp<'a>> {
    BrDetPomdp::new(model, i, Others::Centralized(pi_mdp))
}

impl<'a> BrDetPomdp<'a> {
    fn new(model: &'a dyn DetDecPomdp, agent: usize, others: Others<'a>) -> Result<Self> {
        let n = model.agent_count();
        if agent >= n {
            return Err(Error::invalid(format!("agent {agent} out of range for {n} agents")));
        }
        let other_agents: Vec<usize> = (0..n).filter(|&j| j != agent).collect();
        let node_radix: Vec<u128> = match others {
            Others::Controllers(p) => other_agents.iter().map(|&j| p.agents[j].size() as u128).collect(),
            Others::Centralized(_) => vec![1; other_agents.len()],
        };
        let overflow = || Error::invalid("extended state space does not fit in 128 bits");
        let node_span = node_radix.iter().try_fold(1u128, |acc, &r| acc.checked_mul(r)).ok_or_else(overflow)?;
        let obs_radix = model.observation_count(agent) as u128 + 1;
        u128::from(model.state_count())
            .checked_mul(node_span)
            .and_then(|x| x.checked_mul(obs_radix))
            .ok_or_else(overflow)?;
        Ok(BrDetPomdp { model, agent, others, other_agents, node_radix, node_span, obs_radix, values: None })
    }

    /// Uses centralized values as the per-state upper bound.
    pub fn with_upper_bounds(mut self, values: &'a MdpValueTable) -> Self {
        self.values = Some(values);
        self
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    /// Observation index seeding the first extended state.
    pub fn start_symbol(&self) -> Observation {
        self.model.observation_count(self.agent) as Observation
    }

    pub fn pack(&self, e: &ExtState) -> ExtId {
        let mut nodes = 0u128;
        for (k, &n) in e.other_nodes.iter().enumerate().rev() {
            nodes = nodes * self.node_radix[k] + u128::from(n);
        }
        (u128::from(e.env) * self.node_span + nodes) * self.obs_radix + u128::from(e.last_obs)
    }

    pub fn unpack(&self, id: ExtId) -> ExtState {
        let last_obs = (id % self.obs_radix) as Observation;
        let rest = id / self.obs_radix;
        let mut nodes = rest % self.node_span;
        let env = (rest / self.node_span) as StateId;
        let other_nodes = self
            .node_radix
            .iter()
            .map(|&r| {
                let n = (nodes % r) as NodeId;
                nodes /= r;
                n
            })
            .collect();
        ExtState { env, other_nodes, last_obs }
    }

    /// Lift of the model's initial belief: others at their initial nodes,
    /// last observation set to the start symbol.
    pub fn initial_ext_belief(&self) -> SupportBelief<ExtId> {
        let nodes: SmallVec<[NodeId; 4]> = match self.others {
            Others::Controllers(p) => self.other_agents.iter().map(|&j| p.agents[j].initial).collect(),
            Others::Centralized(_) => SmallVec::from_elem(0, self.other_agents.len()),
        };
        let start = self.start_symbol();
        let atoms: Vec<(ExtId, f64)> = self
            .model
            .initial_belief()
            .atoms()
            .iter()
            .map(|&(s, w)| {
                let e = ExtState { env: s, other_nodes: nodes.clone(), last_obs: start };
                (self.pack(&e), w)
            })
            .collect();
        // packing is monotone in the environment state, so atoms stay sorted
        SupportBelief::from_sorted_unnormalized(atoms)
    }

    /// Joint action with the planning agent's component set to `a`.
    fn joint_action(&self, e: &ExtState, a: Action) -> Result<JointAction> {
        let mut joint = match self.others {
            Others::Controllers(p) => {
                let mut joint = JointAction(SmallVec::from_elem(0, self.model.agent_count()));
                for (k, &j) in self.other_agents.iter().enumerate() {
                    joint.0[j] = p.agents[j].act(e.other_nodes[k])?;
                }
                joint
            }
            Others::Centralized(pi) => pi.action(e.env)?.clone(),
        };
        joint.0[self.agent] = a;
        Ok(joint)
    }

    pub fn step_ext(&self, e: &ExtState, a: Action) -> Result<(ExtState, f64)> {
        if a as usize >= self.model.action_count(self.agent) {
            return Err(Error::invalid(format!("action {a} out of range for agent {}", self.agent)));
        }
        let joint = self.joint_action(e, a)?;
        let t = self.model.step(e.env, &joint)?;
        let other_nodes = match self.others {
            Others::Controllers(p) => self
                .other_agents
                .iter()
                .zip(&e.other_nodes)
                .map(|(&j, &n)| p.agents[j].advance(n, t.observation.agent(j)))
                .collect::<Result<_>>()?,
            Others::Centralized(_) => e.other_nodes.clone(),
        };
        let next = ExtState { env: t.next, other_nodes, last_obs: t.observation.agent(self.agent) };
        Ok((next, t.reward))
    }
}

impl DetPomdp for BrDetPomdp<'_> {
    type State = ExtId;

    fn action_count(&self) -> usize {
        self.model.action_count(self.agent)
    }

    fn discount(&self) -> f64 {
        self.model.discount()
    }

    fn initial_belief(&self) -> SupportBelief<ExtId> {
        self.initial_ext_belief()
    }

    fn step(&self, s: ExtId, a: Action) -> Result<DetStep<ExtId>> {
        let (next, reward) = self.step_ext(&self.unpack(s), a)?;
        Ok(DetStep { next: self.pack(&next), observation: next.last_obs, reward })
    }

    fn reward_range(&self) -> (f64, f64) {
        self.model.reward_range()
    }

    fn is_terminal(&self, s: ExtId) -> bool {
        let env = ((s / self.obs_radix) / self.node_span) as StateId;
        self.model.is_terminal(env)
    }

    fn value_upper_bound(&self, s: ExtId) -> f64 {
        let env = ((s / self.obs_radix) / self.node_span) as StateId;
        let fallback = self.reward_range().1.max(0.0) / (1.0 - self.discount());
        match self.values.and_then(|t| t.value(env)) {
            Some(v) => v + self.values.map_or(0.0, MdpValueTable::error_bound),
            None => fallback,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{BenchmarkSpec, Instance};
    use crate::fsc::Fsc;
    use crate::mdp;
    use crate::rng;

    fn mactp(n: usize, agents: usize, edges: usize, seed: u64) -> Instance {
        BenchmarkSpec::Mactp { n, agents, edges }.generate(seed, 0.95).unwrap().build().unwrap()
    }

    fn random_policy(m: &Instance, seed: u64) -> JointPolicy {
        let mut r = rng::stream(seed, "test-policy");
        let agents = (0..m.agent_count())
            .map(|i| {
                let obs: Vec<Observation> = (0..m.observation_count(i).min(64) as Observation).collect();
                Fsc::random(&mut r, 3, m.action_count(i), &obs)
            })
            .collect();
        JointPolicy::new(agents)
    }

    #[test]
    fn packing_is_bijective() {
        let m = mactp(3, 3, 2, 5);
        let p = random_policy(&m, 1);
        let br = build_br_detpomdp(&m, &p, 1).unwrap();
        for env in [0, 1, 77, m.state_count() - 1] {
            for a in 0..3 {
                for b in 0..3 {
                    for o in [0, 5, br.start_symbol()] {
                        let e = ExtState { env, other_nodes: SmallVec::from_slice(&[a, b]), last_obs: o };
                        assert_eq!(br.unpack(br.pack(&e)), e);
                    }
                }
            }
        }
    }

    #[test]
    fn initial_belief_lifts_one_to_one() {
        let m = mactp(4, 2, 8, 3);
        let p = random_policy(&m, 2);
        let br = build_br_detpomdp(&m, &p, 0).unwrap();
        let b = br.initial_ext_belief();
        assert_eq!(b.len(), 256);
        assert!(b.is_canonical());
        for e in b.support() {
            let x = br.unpack(e);
            assert_eq!(x.last_obs, br.start_symbol());
            assert_eq!(x.other_nodes[0], p.agents[1].initial);
        }
    }

    #[test]
    fn step_is_deterministic_and_emits_last_obs() {
        let m = mactp(3, 2, 4, 9);
        let p = random_policy(&m, 3);
        let br = build_br_detpomdp(&m, &p, 1).unwrap();
        let mut r = rng::stream(4, "walk");
        let mut cur = br.initial_ext_belief().atoms()[0].0;
        for _ in 0..1000 {
            let a = rng::below(&mut r, 5) as Action;
            let x = br.step(cur, a).unwrap();
            assert_eq!(x, br.step(cur, a).unwrap());
            assert_eq!(br.unpack(x.next).last_obs, x.observation);
            assert_ne!(x.observation, br.start_symbol());
            cur = x.next;
        }
    }

    #[test]
    fn mismatched_policy_is_rejected() {
        let m = mactp(3, 2, 2, 1);
        let p = JointPolicy::new(vec![Fsc::constant(0)]);
        assert!(matches!(build_br_detpomdp(&m, &p, 0), Err(Error::InvalidArgument(_))));
        let p = JointPolicy::new(vec![Fsc::constant(0), Fsc::constant(0)]);
        assert!(build_br_detpomdp(&m, &p, 2).is_err());
    }

    #[test]
    fn init_model_uses_centralized_actions_of_others() {
        let m = mactp(3, 2, 3, 8);
        let table = mdp::value_iteration(&m, 1e-6, &m.initial_belief(), 1_000_000).unwrap();
        let pi = mdp::default_policy(&table, &m).unwrap();
        let init = build_init_detpomdp(&m, 0, &pi).unwrap().with_upper_bounds(&table);
        for &(e, _) in init.initial_ext_belief().atoms() {
            let x = init.unpack(e);
            for a in 0..5 {
                let (next, reward) = init.step_ext(&x, a).unwrap();
                let mut joint = pi.action(x.env).unwrap().clone();
                joint.0[0] = a;
                let t = m.step(x.env, &joint).unwrap();
                assert_eq!(next.env, t.next);
                assert_eq!(reward, t.reward);
                assert!(init.value_upper_bound(e) >= table.get(x.env).unwrap());
            }
        }
    }

    /// Against a frozen waiting partner, agent 0's model on a 2x2 grid is a
    /// plain single-agent walk: positions are enumerated by hand.
    #[test]
    fn waiting_partner_matches_hand_model() {
        use crate::envs::mactp::{EdgeDesc, MactpDescriptor, WAIT};
        let desc = MactpDescriptor {
            n: 2,
            agents: 2,
            seed: 0,
            discount: 0.95,
            edges: vec![
                EdgeDesc { u: 1, v: 2, weight: 3 },
                EdgeDesc { u: 1, v: 3, weight: 4 },
                EdgeDesc { u: 2, v: 4, weight: 2 },
                EdgeDesc { u: 3, v: 4, weight: 5 },
            ],
            stochastic: vec![],
            goals: vec![4, 4],
            starts: vec![1, 1],
        };
        let m = Instance::Mactp(crate::envs::Mactp::new(desc).unwrap());
        let p = JointPolicy::new(vec![Fsc::constant(0), Fsc::constant(WAIT as Action)]);
        let br = build_br_detpomdp(&m, &p, 0).unwrap();
        // vertices 1..4 at (row, col): 1=(0,0) 2=(0,1) 3=(1,0) 4=(1,1); actions up/right/down/left/wait
        let hand = |v: usize, a: Action| -> (usize, f64) {
            match (v, a) {
                (1, 1) => (2, -3.0),
                (1, 2) => (3, -4.0),
                (2, 3) => (1, -3.0),
                (2, 2) => (4, -2.0 + 500.0),
                (3, 0) => (1, -4.0),
                (3, 1) => (4, -5.0 + 500.0),
                (v, _) => (v, 0.0),
            }
        };
        for path in [[1, 2, 3, 0], [2, 1, 4, 4], [2, 3, 1, 2], [1, 1, 1, 1]] {
            let mut e = br.unpack(br.initial_ext_belief().atoms()[0].0);
            let mut v = 1;
            for a in path {
                let (next, r) = br.step_ext(&e, a).unwrap();
                let (hv, hr) = hand(v, a);
                if v == 4 {
                    break;
                }
                assert_eq!(r, hr, "vertex {v} action {a}");
                if let Instance::Mactp(mm) = &m {
                    assert_eq!(mm.unpack(next.env).0[0] as usize + 1, hv);
                }
                v = hv;
                e = next;
            }
        }
    }
}
