//! Deterministic finite-state controllers and joint policies.
//!
//! JSON layout of a joint policy:
//!
//! ```json
//! {"agents": [{"initial": 0,
//!              "nodes": [{"action": 4, "fallback": 0, "transitions": {"17": 1}}]}]}
//! ```
//!
//! Observation keys are stringified integers. An observation missing from a
//! node's map sends the controller to that node's `fallback`.

use std::collections::BTreeMap;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Action, DetDecPomdp, Observation};
use crate::rng;

/// Index of a controller node.
pub type NodeId = u32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FscNode {
    pub action: Action,
    pub fallback: NodeId,
    #[serde(default)]
    pub transitions: BTreeMap<Observation, NodeId>,
}

impl FscNode {
    /// Node with an action and a self-loop on every observation.
    pub fn constant(action: Action, me: NodeId) -> Self {
        FscNode { action, fallback: me, transitions: BTreeMap::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fsc {
    pub initial: NodeId,
    pub nodes: Vec<FscNode>,
}

impl Fsc {
    /// Checks that node references are in range, returning the offending field.
    pub fn new(initial: NodeId, nodes: Vec<FscNode>) -> Result<Self> {
        let fsc = Fsc { initial, nodes };
        fsc.check_structure("")?;
        Ok(fsc)
    }

    /// Single node repeating `action` forever.
    pub fn constant(action: Action) -> Self {
        Fsc { initial: 0, nodes: vec![FscNode::constant(action, 0)] }
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn act(&self, node: NodeId) -> Result<Action> {
        self.nodes
            .get(node as usize)
            .map(|n| n.action)
            .ok_or_else(|| Error::invalid(format!("node {node} out of range ({} nodes)", self.nodes.len())))
    }

    pub fn advance(&self, node: NodeId, obs: Observation) -> Result<NodeId> {
        let n = self
            .nodes
            .get(node as usize)
            .ok_or_else(|| Error::invalid(format!("node {node} out of range ({} nodes)", self.nodes.len())))?;
        Ok(n.transitions.get(&obs).copied().unwrap_or(n.fallback))
    }

    fn check_structure(&self, path: &str) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(Error::parse(format!("{path}nodes"), "controller has no nodes"));
        }
        if self.initial as usize >= n {
            return Err(Error::parse(
                format!("{path}initial"),
                format!("node {} out of range ({n} nodes)", self.initial),
            ));
        }
        for (k, node) in self.nodes.iter().enumerate() {
            if node.fallback as usize >= n {
                return Err(Error::parse(
                    format!("{path}nodes[{k}].fallback"),
                    format!("node {} out of range ({n} nodes)", node.fallback),
                ));
            }
            for (obs, &target) in &node.transitions {
                if target as usize >= n {
                    return Err(Error::parse(
                        format!("{path}nodes[{k}].transitions[\"{obs}\"]"),
                        format!("node {target} out of range ({n} nodes)"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Random controller for tests and policy-evaluation studies. Each node
    /// gets a random action and fallback and maps a random subset of
    /// `observations` to random successors.
    pub fn random(rng: &mut impl RngCore, nodes: usize, action_count: usize, observations: &[Observation]) -> Self {
        assert!(nodes > 0 && action_count > 0);
        let nodes = (0..nodes)
            .map(|_| {
                let mut transitions = BTreeMap::new();
                for &o in observations {
                    if rng::below(rng, 2) == 0 {
                        transitions.insert(o, rng::below(rng, nodes) as NodeId);
                    }
                }
                FscNode {
                    action: rng::below(rng, action_count) as Action,
                    fallback: rng::below(rng, nodes) as NodeId,
                    transitions,
                }
            })
            .collect::<Vec<_>>();
        let initial = rng::below(rng, nodes.len()) as NodeId;
        Fsc { initial, nodes }
    }
}

/// One controller per agent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointPolicy {
    pub agents: Vec<Fsc>,
}

impl JointPolicy {
    pub fn new(agents: Vec<Fsc>) -> Self {
        JointPolicy { agents }
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn initial_nodes(&self) -> Vec<NodeId> {
        self.agents.iter().map(|f| f.initial).collect()
    }

    /// Replaces agent `i`'s controller.
    pub fn with_agent(&self, i: usize, fsc: Fsc) -> Self {
        let mut agents = self.agents.clone();
        agents[i] = fsc;
        JointPolicy { agents }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let policy: JointPolicy = serde_json::from_str(text).map_err(|e| Error::parse("policy", e.to_string()))?;
        if policy.agents.is_empty() {
            return Err(Error::parse("agents", "policy has no agents"));
        }
        for (i, fsc) in policy.agents.iter().enumerate() {
            fsc.check_structure(&format!("agents[{i}]."))?;
        }
        Ok(policy)
    }

    /// Checks agent count and per-agent action/observation ranges.
    pub fn check_against(&self, model: &dyn DetDecPomdp) -> Result<()> {
        if self.agents.len() != model.agent_count() {
            return Err(Error::Schema(format!(
                "policy has {} controllers, model has {} agents",
                self.agents.len(),
                model.agent_count()
            )));
        }
        for (i, fsc) in self.agents.iter().enumerate() {
            fsc.check_structure(&format!("agents[{i}].")).map_err(|e| Error::Schema(e.to_string()))?;
            let (na, no) = (model.action_count(i), model.observation_count(i));
            for (k, node) in fsc.nodes.iter().enumerate() {
                if node.action as usize >= na {
                    return Err(Error::Schema(format!(
                        "agents[{i}].nodes[{k}].action {} exceeds {na} actions",
                        node.action
                    )));
                }
                match node.transitions.keys().next_back() {
                    Some(&o) if o as usize >= no => {
                        return Err(Error::Schema(format!(
                            "agents[{i}].nodes[{k}] observation {o} exceeds {no} observations"
                        )));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}
