//! The deterministic decentralized POMDP abstraction.
//!
//! A model is a generative step function: given an environment state and a
//! joint action it returns the unique successor, the unique joint observation
//! and the immediate reward. All uncertainty lives in the initial belief.

use std::collections::BTreeMap;
use std::hash::Hash;

use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Packed environment state.
pub type StateId = u64;
/// Local action index of one agent.
pub type Action = u32;
/// Local observation index of one agent.
pub type Observation = u32;

/// One local action per agent, in agent order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JointAction(pub SmallVec<[Action; 4]>);

/// One local observation per agent, in agent order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JointObservation(pub SmallVec<[Observation; 4]>);

impl JointAction {
    pub fn new(actions: &[Action]) -> Self {
        JointAction(SmallVec::from_slice(actions))
    }

    pub fn agent(&self, i: usize) -> Action {
        self.0[i]
    }
}

impl JointObservation {
    pub fn new(obs: &[Observation]) -> Self {
        JointObservation(SmallVec::from_slice(obs))
    }

    pub fn agent(&self, i: usize) -> Observation {
        self.0[i]
    }
}

/// Result of one deterministic step.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub next: StateId,
    pub observation: JointObservation,
    pub reward: f64,
}

/// Tolerance on the total mass of a belief.
pub const BELIEF_MASS_TOLERANCE: f64 = 1e-9;

/// Scale used to quantize weights in [`SupportBelief::key`].
const KEY_SCALE: f64 = 1e12;

/// A finitely supported distribution with strictly positive weights, kept in
/// ascending key order so equal beliefs have identical representations.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportBelief<K = StateId> {
    atoms: Vec<(K, f64)>,
}

/// Hashable identity of a belief: its support with weights quantized to 1e-12.
pub type BeliefKey<K> = Vec<(K, i64)>;

impl<K: Copy + Ord> SupportBelief<K> {
    /// Builds a belief from unnormalized weights. Duplicate keys are merged,
    /// zero weights dropped and the result normalized.
    pub fn from_weights<I>(weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, f64)>,
    {
        let mut merged: BTreeMap<K, f64> = BTreeMap::new();
        for (k, w) in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::invalid(format!("belief weight {w} is not a finite non-negative number")));
            }
            if w > 0.0 {
                *merged.entry(k).or_insert(0.0) += w;
            }
        }
        let total: f64 = merged.values().sum();
        if merged.is_empty() || total <= 0.0 {
            return Err(Error::invalid("belief has no positive mass"));
        }
        Ok(SupportBelief { atoms: merged.into_iter().map(|(k, w)| (k, w / total)).collect() })
    }

    /// Like [`from_weights`](Self::from_weights) for inputs already sorted by
    /// key with distinct keys and positive weights.
    pub(crate) fn from_sorted_unnormalized(mut atoms: Vec<(K, f64)>) -> Self {
        debug_assert!(atoms.windows(2).all(|w| w[0].0 < w[1].0));
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        for a in &mut atoms {
            a.1 /= total;
        }
        SupportBelief { atoms }
    }

    pub fn point(k: K) -> Self {
        SupportBelief { atoms: vec![(k, 1.0)] }
    }

    pub fn atoms(&self) -> &[(K, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = K> + '_ {
        self.atoms.iter().map(|a| a.0)
    }

    pub fn weight(&self, k: K) -> f64 {
        match self.atoms.binary_search_by(|a| a.0.cmp(&k)) {
            Ok(i) => self.atoms[i].1,
            Err(_) => 0.0,
        }
    }

    pub fn expectation(&self, mut f: impl FnMut(K) -> f64) -> f64 {
        self.atoms.iter().map(|&(k, w)| w * f(k)).sum()
    }

    /// Checks the canonical-form invariants.
    pub fn is_canonical(&self) -> bool {
        let total: f64 = self.atoms.iter().map(|a| a.1).sum();
        !self.atoms.is_empty()
            && self.atoms.iter().all(|a| a.1 > 0.0)
            && self.atoms.windows(2).all(|w| w[0].0 < w[1].0)
            && (total - 1.0).abs() <= BELIEF_MASS_TOLERANCE
    }

    pub fn key(&self) -> BeliefKey<K>
    where
        K: Hash,
    {
        self.atoms.iter().map(|&(k, w)| (k, (w * KEY_SCALE).round() as i64)).collect()
    }
}

/// A deterministic decentralized POMDP exposed through its step function.
///
/// Implementations must be pure: `step(s, a)` always returns the same
/// transition, and terminal states self-loop with zero reward.
pub trait DetDecPomdp: Send + Sync {
    fn agent_count(&self) -> usize;
    fn action_count(&self, agent: usize) -> usize;
    fn observation_count(&self, agent: usize) -> usize;
    fn discount(&self) -> f64;
    /// Exclusive upper bound on packed state ids.
    fn state_count(&self) -> u64;
    fn initial_belief(&self) -> SupportBelief;
    fn is_terminal(&self, s: StateId) -> bool;
    fn step(&self, s: StateId, a: &JointAction) -> Result<Transition>;
    /// Per-step `(min, max)` reward over all states and joint actions.
    fn reward_range(&self) -> (f64, f64);

    fn joint_action_count(&self) -> usize {
        (0..self.agent_count()).map(|i| self.action_count(i)).product()
    }

    /// Mixed-radix decoding with agent 0 as the least significant digit.
    fn joint_action(&self, mut index: usize) -> JointAction {
        let mut actions = SmallVec::new();
        for i in 0..self.agent_count() {
            let n = self.action_count(i);
            actions.push((index % n) as Action);
            index /= n;
        }
        JointAction(actions)
    }

    fn joint_action_index(&self, a: &JointAction) -> usize {
        let mut index = 0;
        let mut radix = 1;
        for (i, &ai) in a.0.iter().enumerate() {
            index += ai as usize * radix;
            radix *= self.action_count(i);
        }
        index
    }

    fn check_state(&self, s: StateId) -> Result<()> {
        if s >= self.state_count() {
            return Err(Error::invalid(format!("state {s} out of range (count {})", self.state_count())));
        }
        Ok(())
    }

    fn check_joint_action(&self, a: &JointAction) -> Result<()> {
        if a.0.len() != self.agent_count() {
            return Err(Error::invalid(format!(
                "joint action has {} components, model has {} agents",
                a.0.len(),
                self.agent_count()
            )));
        }
        for (i, &ai) in a.0.iter().enumerate() {
            if ai as usize >= self.action_count(i) {
                return Err(Error::invalid(format!("action {ai} of agent {i} out of range")));
            }
        }
        Ok(())
    }
}

/// Explicit-table model for small hand-built problems.
#[derive(Clone, Debug)]
pub struct TabularModel {
    action_counts: Vec<usize>,
    observation_counts: Vec<usize>,
    discount: f64,
    /// `table[s][joint_action_index]`
    table: Vec<Vec<Transition>>,
    initial: SupportBelief,
    terminal: Vec<bool>,
}

impl TabularModel {
    /// `table[s][j]` is the transition for state `s` under the joint action
    /// with mixed-radix index `j` (agent 0 least significant).
    pub fn new(
        action_counts: Vec<usize>,
        observation_counts: Vec<usize>,
        discount: f64,
        table: Vec<Vec<Transition>>,
        initial: SupportBelief,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        if action_counts.is_empty() || action_counts.len() != observation_counts.len() {
            return Err(Error::invalid("agent space sizes are empty or inconsistent"));
        }
        if action_counts.iter().chain(&observation_counts).any(|&n| n == 0) {
            return Err(Error::invalid("every agent needs at least one action and observation"));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::invalid(format!("discount {discount} not in (0,1)")));
        }
        if terminal.len() != table.len() {
            return Err(Error::invalid("terminal flags must cover every state"));
        }
        let joint: usize = action_counts.iter().product();
        let n = table.len() as u64;
        for (s, row) in table.iter().enumerate() {
            if row.len() != joint {
                return Err(Error::invalid(format!("state {s} has {} rows, expected {joint}", row.len())));
            }
            for t in row {
                if t.next >= n || !t.reward.is_finite() {
                    return Err(Error::invalid(format!("bad transition from state {s}")));
                }
                if t.observation.0.len() != action_counts.len()
                    || t.observation.0.iter().zip(&observation_counts).any(|(&o, &c)| o as usize >= c)
                {
                    return Err(Error::invalid(format!("bad observation from state {s}")));
                }
                if terminal[s] && (t.next != s as u64 || t.reward != 0.0) {
                    return Err(Error::invalid(format!("terminal state {s} must self-loop with reward 0")));
                }
            }
        }
        if initial.support().any(|s| s >= n) {
            return Err(Error::invalid("initial belief references unknown states"));
        }
        Ok(TabularModel { action_counts, observation_counts, discount, table, initial, terminal })
    }
}

impl DetDecPomdp for TabularModel {
    fn agent_count(&self) -> usize {
        self.action_counts.len()
    }

    fn action_count(&self, agent: usize) -> usize {
        self.action_counts[agent]
    }

    fn observation_count(&self, agent: usize) -> usize {
        self.observation_counts[agent]
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn state_count(&self) -> u64 {
        self.table.len() as u64
    }

    fn initial_belief(&self) -> SupportBelief {
        self.initial.clone()
    }

    fn is_terminal(&self, s: StateId) -> bool {
        self.terminal.get(s as usize).copied().unwrap_or(false)
    }

    fn step(&self, s: StateId, a: &JointAction) -> Result<Transition> {
        self.check_state(s)?;
        self.check_joint_action(a)?;
        Ok(self.table[s as usize][self.joint_action_index(a)].clone())
    }

    fn reward_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in self.table.iter().flatten() {
            lo = lo.min(t.reward);
            hi = hi.max(t.reward);
        }
        (lo, hi)
    }
}
