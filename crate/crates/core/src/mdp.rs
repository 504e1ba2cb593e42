//! Centralized, fully observable relaxation of a model.
//!
//! Value iteration runs over the states reachable from a belief's support
//! under any joint-action sequence. The greedy joint policy stands in for the
//! other agents during heuristic initialization, and the values bound the
//! return of any decentralized policy from above.

use std::collections::{HashMap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DetDecPomdp, JointAction, StateId, SupportBelief};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_STATE_CAP: usize = 4_000_000;
const MAX_SWEEPS: usize = 1_000_000;
const TIE_EPS: f64 = 1e-12;

/// States reachable from `from` in breadth-first discovery order.
pub fn reachable_states(model: &dyn DetDecPomdp, from: &SupportBelief, cap: usize) -> Result<Vec<StateId>> {
    Ok(explore(model, from, cap, false)?.states)
}

struct Explored {
    states: Vec<StateId>,
    index: HashMap<StateId, u32>,
    /// `succ[k * J + j]`, empty unless requested.
    succ: Vec<u32>,
    reward: Vec<f64>,
}

fn explore(model: &dyn DetDecPomdp, from: &SupportBelief, cap: usize, record: bool) -> Result<Explored> {
    let joint = model.joint_action_count();
    let actions: Vec<JointAction> = (0..joint).map(|j| model.joint_action(j)).collect();
    let mut ex = Explored { states: Vec::new(), index: HashMap::new(), succ: Vec::new(), reward: Vec::new() };
    let mut queue = VecDeque::new();
    let intern = |s: StateId, ex: &mut Explored, queue: &mut VecDeque<StateId>| -> Result<u32> {
        if let Some(&k) = ex.index.get(&s) {
            return Ok(k);
        }
        if ex.states.len() >= cap {
            return Err(Error::ResourceLimit { what: "reachable state count", cap });
        }
        let k = ex.states.len() as u32;
        ex.states.push(s);
        ex.index.insert(s, k);
        queue.push_back(s);
        Ok(k)
    };
    for s in from.support() {
        intern(s, &mut ex, &mut queue)?;
    }
    while let Some(s) = queue.pop_front() {
        for a in &actions {
            let t = model.step(s, a)?;
            let k = intern(t.next, &mut ex, &mut queue)?;
            if record {
                ex.succ.push(k);
                ex.reward.push(t.reward);
            }
        }
    }
    Ok(ex)
}

/// Optimal centralized values over a reachable state set.
#[derive(Clone, Debug, Serialize)]
pub struct MdpValueTable {
    states: Vec<StateId>,
    #[serde(skip)]
    index: HashMap<StateId, u32>,
    values: Vec<f64>,
    residual: f64,
    discount: f64,
}

impl MdpValueTable {
    pub fn value(&self, s: StateId) -> Option<f64> {
        self.index.get(&s).map(|&k| self.values[k as usize])
    }

    pub fn get(&self, s: StateId) -> Result<f64> {
        self.value(s).ok_or(Error::MissingState(s))
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[StateId] {
        &self.states
    }

    /// Final Bellman residual `max_s |V(s) - (TV)(s)|`.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Bound on `|V - V*|` implied by the residual.
    pub fn error_bound(&self) -> f64 {
        self.residual / (1.0 - self.discount)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("value table serialization cannot fail")
    }
}

/// In-place value iteration over the states reachable from `reachable_from`.
pub fn value_iteration(
    model: &dyn DetDecPomdp,
    tol: f64,
    reachable_from: &SupportBelief,
    state_cap: usize,
) -> Result<MdpValueTable> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance {tol} must be positive")));
    }
    let ex = explore(model, reachable_from, state_cap, true)?;
    let joint = model.joint_action_count();
    let gamma = model.discount();
    let n = ex.states.len();
    let terminal: Vec<bool> = ex.states.iter().map(|&s| model.is_terminal(s)).collect();
    let mut v = vec![0.0; n];
    let backup = |v: &[f64], k: usize| -> f64 {
        let base = k * joint;
        (0..joint)
            .map(|j| ex.reward[base + j] + gamma * v[ex.succ[base + j] as usize])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut sweeps = 0;
    let residual = loop {
        let mut delta: f64 = 0.0;
        // reverse discovery order propagates values from deep states first
        for k in (0..n).rev() {
            if terminal[k] {
                continue;
            }
            let nv = backup(&v, k);
            delta = delta.max((nv - v[k]).abs());
            v[k] = nv;
        }
        sweeps += 1;
        if delta <= tol {
            let residual = (0..n).filter(|&k| !terminal[k]).map(|k| (backup(&v, k) - v[k]).abs()).fold(0.0, f64::max);
            if residual <= tol {
                break residual;
            }
        }
        if sweeps >= MAX_SWEEPS {
            return Err(Error::ResourceLimit { what: "value iteration sweeps", cap: MAX_SWEEPS });
        }
    };
    log::debug!("value iteration: {n} states, {sweeps} sweeps, residual {residual:e}");
    Ok(MdpValueTable { states: ex.states, index: ex.index, values: v, residual, discount: gamma })
}

/// Greedy joint policy of the centralized relaxation.
#[derive(Clone, Debug)]
pub struct MdpPolicy {
    index: HashMap<StateId, u32>,
    actions: Vec<JointAction>,
}

impl MdpPolicy {
    pub fn action(&self, s: StateId) -> Result<&JointAction> {
        self.index.get(&s).map(|&k| &self.actions[k as usize]).ok_or(Error::MissingState(s))
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Greedy joint action in every tabulated state; ties go to the lowest
/// joint-action index.
pub fn default_policy(table: &MdpValueTable, model: &dyn DetDecPomdp) -> Result<MdpPolicy> {
    let gamma = model.discount();
    let joint = model.joint_action_count();
    let mut actions = Vec::with_capacity(table.len());
    for &s in &table.states {
        let mut best = (0, f64::NEG_INFINITY);
        for j in 0..joint {
            let t = model.step(s, &model.joint_action(j))?;
            let q = t.reward + gamma * table.get(t.next)?;
            if q > best.1 + TIE_EPS {
                best = (j, q);
            }
        }
        actions.push(model.joint_action(best.0));
    }
    Ok(MdpPolicy { index: table.index.clone(), actions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JointObservation, TabularModel, Transition};

    fn t(next: u64, reward: f64) -> Transition {
        Transition { next, observation: JointObservation::new(&[0]), reward }
    }

    fn single_agent(table: Vec<Vec<Transition>>, terminal: Vec<bool>, gamma: f64) -> TabularModel {
        let actions = table[0].len();
        TabularModel::new(vec![actions], vec![1], gamma, table, SupportBelief::point(0), terminal).unwrap()
    }

    #[test]
    fn absorbing_state_has_zero_value() {
        let m = single_agent(vec![vec![t(0, 0.0)]], vec![true], 0.95);
        let table = value_iteration(&m, 1e-9, &m.initial_belief(), 10).unwrap();
        assert_eq!(table.get(0).unwrap(), 0.0);
    }

    #[test]
    fn self_loop_is_a_geometric_series() {
        let m = single_agent(vec![vec![t(0, 1.0)]], vec![false], 0.95);
        let table = value_iteration(&m, 1e-9, &m.initial_belief(), 10).unwrap();
        assert!((table.get(0).unwrap() - 20.0).abs() < 1e-7);
        assert!(table.residual() <= 1e-9);
    }

    /// Line 0 - 1 - 2 with unit move costs and goal reward 500 on entering
    /// vertex 2, which is absorbing. Actions: 0 = left, 1 = right, 2 = wait.
    fn chain() -> TabularModel {
        single_agent(
            vec![
                vec![t(0, 0.0), t(1, -1.0), t(0, 0.0)],
                vec![t(0, -1.0), t(2, 499.0), t(1, 0.0)],
                vec![t(2, 0.0), t(2, 0.0), t(2, 0.0)],
            ],
            vec![false, false, true],
            0.95,
        )
    }

    /// Synchronous Bellman iteration to a fixed point, independent of the
    /// Gauss-Seidel implementation.
    fn brute_force(m: &TabularModel, states: usize) -> Vec<f64> {
        let mut v = vec![0.0; states];
        for _ in 0..5000 {
            let next: Vec<f64> = (0..states as u64)
                .map(|s| {
                    if m.is_terminal(s) {
                        return 0.0;
                    }
                    (0..m.joint_action_count())
                        .map(|j| {
                            let tr = m.step(s, &m.joint_action(j)).unwrap();
                            tr.reward + m.discount() * v[tr.next as usize]
                        })
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            v = next;
        }
        v
    }

    #[test]
    fn chain_matches_hand_backups() {
        let m = chain();
        let oracle = brute_force(&m, 3);
        // V(1) = 499, V(0) = -1 + 0.95 * 499 = 473.05
        assert!((oracle[1] - 499.0).abs() < 1e-9);
        assert!((oracle[0] - 473.05).abs() < 1e-9);
        let table = value_iteration(&m, 1e-9, &m.initial_belief(), 10).unwrap();
        for s in 0..3 {
            assert!((table.get(s).unwrap() - oracle[s as usize]).abs() < 1e-7);
        }
    }

    #[test]
    fn greedy_policy_and_ties() {
        let m = chain();
        let table = value_iteration(&m, 1e-9, &m.initial_belief(), 10).unwrap();
        let pi = default_policy(&table, &m).unwrap();
        assert_eq!(pi.action(0).unwrap(), &JointAction::new(&[1]));
        // all actions tie at the terminal state
        assert_eq!(pi.action(2).unwrap(), &JointAction::new(&[0]));
        assert!(matches!(pi.action(99), Err(Error::MissingState(99))));

        let tie = single_agent(vec![vec![t(1, 5.0), t(1, 5.0)], vec![t(1, 0.0), t(1, 0.0)]], vec![false, true], 0.9);
        let table = value_iteration(&tie, 1e-9, &tie.initial_belief(), 10).unwrap();
        assert_eq!(default_policy(&table, &tie).unwrap().action(0).unwrap(), &JointAction::new(&[0]));
    }

    #[test]
    fn reachability_cap_is_enforced() {
        let m = chain();
        match value_iteration(&m, 1e-6, &m.initial_belief(), 2) {
            Err(Error::ResourceLimit { cap, .. }) => assert_eq!(cap, 2),
            other => panic!("expected resource limit, got {other:?}"),
        }
        assert_eq!(reachable_states(&m, &m.initial_belief(), 10).unwrap(), vec![0, 1, 2]);
        assert!(value_iteration(&m, 0.0, &m.initial_belief(), 10).is_err());
    }
}
