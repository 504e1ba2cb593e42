//! Seeded benchmark generators and their JSON instance descriptors.

pub mod collecting;
pub mod mactp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp;
use crate::model::{DetDecPomdp, JointAction, StateId, SupportBelief, Transition};

pub use collecting::{Collecting, CollectingDescriptor, CollectingSpec};
pub use mactp::{Mactp, MactpDescriptor, MactpSpec};

/// Discount used when a spec does not name one.
pub const DEFAULT_DISCOUNT: f64 = 0.95;

pub(crate) fn default_discount() -> f64 {
    DEFAULT_DISCOUNT
}

/// Benchmark family and structural parameters, without the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BenchmarkSpec {
    Mactp { n: usize, agents: usize, edges: usize },
    Collecting { h: usize, w: usize, agents: usize, boxes: usize },
}

impl BenchmarkSpec {
    pub fn generate(&self, seed: u64, discount: f64) -> Result<InstanceDescriptor> {
        Ok(match *self {
            BenchmarkSpec::Mactp { n, agents, edges } => InstanceDescriptor::Mactp(mactp::generate(&MactpSpec {
                n,
                agents,
                stochastic_edges: edges,
                seed,
                discount,
            })?),
            BenchmarkSpec::Collecting { h, w, agents, boxes } => {
                InstanceDescriptor::Collecting(collecting::generate(&CollectingSpec {
                    h,
                    w,
                    agents,
                    boxes,
                    seed,
                    discount,
                })?)
            }
        })
    }

    pub fn label(&self) -> String {
        match self {
            BenchmarkSpec::Mactp { n, agents, edges } => format!("mactp<{n},{agents},{edges}>"),
            BenchmarkSpec::Collecting { h, w, agents, boxes } => format!("collecting<{h},{w},{agents},{boxes}>"),
        }
    }
}

/// Instance descriptor file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InstanceDescriptor {
    Mactp(MactpDescriptor),
    Collecting(CollectingDescriptor),
}

impl InstanceDescriptor {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("instance", e.to_string()))
    }

    pub fn build(&self) -> Result<Instance> {
        Ok(match self {
            InstanceDescriptor::Mactp(d) => Instance::Mactp(Mactp::new(d.clone())?),
            InstanceDescriptor::Collecting(d) => Instance::Collecting(Collecting::new(d.clone())?),
        })
    }

    pub fn seed(&self) -> u64 {
        match self {
            InstanceDescriptor::Mactp(d) => d.seed,
            InstanceDescriptor::Collecting(d) => d.seed,
        }
    }

    pub fn label(&self) -> String {
        match self {
            InstanceDescriptor::Mactp(d) => format!("mactp<{},{},{}>", d.n, d.agents, d.stochastic.len()),
            InstanceDescriptor::Collecting(d) => format!("collecting<{},{},{},{}>", d.h, d.w, d.agents, d.boxes),
        }
    }
}

/// A built benchmark model.
#[derive(Clone, Debug)]
pub enum Instance {
    Mactp(Mactp),
    Collecting(Collecting),
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            Instance::Mactp($m) => $e,
            Instance::Collecting($m) => $e,
        }
    };
}

impl DetDecPomdp for Instance {
    fn agent_count(&self) -> usize {
        delegate!(self, m => m.agent_count())
    }
    fn action_count(&self, agent: usize) -> usize {
        delegate!(self, m => m.action_count(agent))
    }
    fn observation_count(&self, agent: usize) -> usize {
        delegate!(self, m => m.observation_count(agent))
    }
    fn discount(&self) -> f64 {
        delegate!(self, m => m.discount())
    }
    fn state_count(&self) -> u64 {
        delegate!(self, m => m.state_count())
    }
    fn initial_belief(&self) -> SupportBelief {
        delegate!(self, m => m.initial_belief())
    }
    fn is_terminal(&self, s: StateId) -> bool {
        delegate!(self, m => m.is_terminal(s))
    }
    fn step(&self, s: StateId, a: &JointAction) -> Result<Transition> {
        delegate!(self, m => m.step(s, a))
    }
    fn reward_range(&self) -> (f64, f64) {
        delegate!(self, m => m.reward_range())
    }
}

/// Sizing figures of an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizingReport {
    pub family: String,
    /// Closed-form state count: `(N^2)^{n_a} * 2^{n_e}` for MACTP,
    /// `(2C)^{n_a} * binom(C, n_b)` for Collecting.
    pub formula_states: u128,
    /// Size of the packed state encoding, including bookkeeping flags.
    pub encoded_states: u128,
    /// States reachable from the initial support, when enumerable under the cap.
    pub reachable_states: Option<u64>,
    pub initial_support: usize,
    pub action_counts: Vec<usize>,
    pub observation_counts: Vec<usize>,
}

/// Sizing report. Reachable states are enumerated only when at most
/// `reachable_cap` of them exist.
pub fn describe(instance: &Instance, reachable_cap: usize) -> SizingReport {
    let (family, formula_states) = match instance {
        Instance::Mactp(m) => ("mactp", m.raw_state_count()),
        Instance::Collecting(m) => ("collecting", m.formula_state_count()),
    };
    let agents = instance.agent_count();
    let reachable_states = if reachable_cap == 0 {
        None
    } else {
        mdp::reachable_states(instance, &instance.initial_belief(), reachable_cap).ok().map(|r| r.len() as u64)
    };
    SizingReport {
        family: family.to_string(),
        formula_states,
        encoded_states: u128::from(instance.state_count()),
        reachable_states,
        initial_support: instance.initial_belief().len(),
        action_counts: (0..agents).map(|i| instance.action_count(i)).collect(),
        observation_counts: (0..agents).map(|i| instance.observation_count(i)).collect(),
    }
}
