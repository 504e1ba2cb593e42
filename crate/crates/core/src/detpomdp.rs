//! Single-agent deterministic POMDP solver.
//!
//! Beliefs are finite weighted supports. Under deterministic dynamics an
//! action maps every atom to exactly one successor and observation, so the
//! successors of a belief are obtained by grouping atoms by observation, and
//! supports never grow along a branch.
//!
//! [`solve`] runs a bounded AND-OR search over memoized belief nodes. Every
//! node carries an upper bound (the fully observable relaxation supplied by
//! the model) and a lower bound (the best single action repeated forever,
//! evaluated exactly). Trials descend from the root along the action with the
//! best upper bound and the observation with the largest weighted excess gap,
//! then back both bounds up along the visited path. Because each node's lower
//! bound is the value of a realizable policy and backups only raise it, the
//! controller read off the lower bounds is worth at least the root lower
//! bound; the returned certificate is that controller's exact value.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Debug;
use std::hash::Hash;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsc::{Fsc, FscNode, NodeId};
use crate::model::{Action, BeliefKey, Observation, SupportBelief};

/// Deterministic single-agent POMDP.
pub trait DetPomdp {
    type State: Copy + Ord + Hash + Debug;

    fn action_count(&self) -> usize;
    fn discount(&self) -> f64;
    fn initial_belief(&self) -> SupportBelief<Self::State>;
    fn step(&self, s: Self::State, a: Action) -> Result<DetStep<Self::State>>;
    /// Per-step `(min, max)` reward.
    fn reward_range(&self) -> (f64, f64);

    /// Absorbing zero-reward state.
    fn is_terminal(&self, _s: Self::State) -> bool {
        false
    }

    /// Upper bound on the optimal value from `s` under full observability.
    fn value_upper_bound(&self, _s: Self::State) -> f64 {
        self.reward_range().1.max(0.0) / (1.0 - self.discount())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetStep<S> {
    pub next: S,
    pub observation: Observation,
    pub reward: f64,
}

/// One observation branch of a belief update.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefSuccessor<S> {
    pub observation: Observation,
    pub probability: f64,
    pub posterior: SupportBelief<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Successors<S> {
    /// Expected immediate reward `sum_e w(e) r(e, a)`.
    pub reward: f64,
    /// Branches in ascending observation order.
    pub branches: Vec<BeliefSuccessor<S>>,
}

/// Deterministic belief update for action `a`.
pub fn belief_successors<M: DetPomdp>(m: &M, b: &SupportBelief<M::State>, a: Action) -> Result<Successors<M::State>> {
    let mut reward = 0.0;
    let mut groups: BTreeMap<Observation, Vec<(M::State, f64)>> = BTreeMap::new();
    for &(e, w) in b.atoms() {
        let t = m.step(e, a)?;
        reward += w * t.reward;
        groups.entry(t.observation).or_default().push((t.next, w));
    }
    let branches = groups
        .into_iter()
        .map(|(observation, mut atoms)| {
            atoms.sort_by_key(|x| x.0);
            let mut merged: Vec<(M::State, f64)> = Vec::with_capacity(atoms.len());
            for (e, w) in atoms {
                match merged.last_mut() {
                    Some(last) if last.0 == e => last.1 += w,
                    _ => merged.push((e, w)),
                }
            }
            let probability = merged.iter().map(|x| x.1).sum();
            BeliefSuccessor { observation, probability, posterior: SupportBelief::from_sorted_unnormalized(merged) }
        })
        .collect();
    Ok(Successors { reward, branches })
}

/// Discounted return of a deterministic chain that ends in a terminal state
/// or a cycle. `step(k)` yields `None` at terminal keys and `Some((r, next))`
/// otherwise. Values of every key on the chain are memoized in `cache`.
pub(crate) fn chain_return<K, F>(start: K, gamma: f64, cache: &mut HashMap<K, f64>, mut step: F) -> Result<f64>
where
    K: Copy + Eq + Hash,
    F: FnMut(K) -> Result<Option<(f64, K)>>,
{
    if let Some(&v) = cache.get(&start) {
        return Ok(v);
    }
    let mut path: Vec<(K, f64)> = Vec::new();
    let mut position: HashMap<K, usize> = HashMap::new();
    let mut cur = start;
    let mut tail = 0.0;
    loop {
        if let Some(&v) = cache.get(&cur) {
            tail = v;
            break;
        }
        if let Some(&k) = position.get(&cur) {
            // cycle path[k..]
            let len = path.len() - k;
            let mut sum = 0.0;
            let mut disc = 1.0;
            for &(_, r) in &path[k..] {
                sum += disc * r;
                disc *= gamma;
            }
            let head = sum / (1.0 - disc);
            let mut next_value = head;
            for j in (1..len).rev() {
                let (key, r) = path[k + j];
                next_value = r + gamma * next_value;
                cache.insert(key, next_value);
            }
            cache.insert(path[k].0, head);
            tail = head;
            path.truncate(k);
            break;
        }
        match step(cur)? {
            None => {
                cache.insert(cur, 0.0);
                break;
            }
            Some((r, next)) => {
                position.insert(cur, path.len());
                path.push((cur, r));
                cur = next;
            }
        }
    }
    let mut value = tail;
    for &(key, r) in path.iter().rev() {
        value = r + gamma * value;
        cache.insert(key, value);
    }
    Ok(cache[&start])
}

/// Exact value of a controller from a belief: every atom follows one
/// deterministic trajectory of `(state, node)` pairs.
pub fn fsc_value<M: DetPomdp>(m: &M, fsc: &Fsc, b: &SupportBelief<M::State>) -> Result<f64> {
    let gamma = m.discount();
    let mut cache = HashMap::new();
    let mut total = 0.0;
    for &(e, w) in b.atoms() {
        let g = chain_return((e, fsc.initial), gamma, &mut cache, |(s, n)| {
            if m.is_terminal(s) {
                return Ok(None);
            }
            let t = m.step(s, fsc.act(n)?)?;
            Ok(Some((t.reward, (t.next, fsc.advance(n, t.observation)?))))
        })?;
        total += w * g;
    }
    Ok(total)
}

/// Value of repeating action `a` forever from state `s`.
pub fn fixed_action_value<M: DetPomdp>(m: &M, s: M::State, a: Action) -> Result<f64> {
    chain_return(s, m.discount(), &mut HashMap::new(), |e| fixed_step(m, e, a))
}

fn fixed_step<M: DetPomdp>(m: &M, e: M::State, a: Action) -> Result<Option<(f64, M::State)>> {
    if m.is_terminal(e) {
        return Ok(None);
    }
    let t = m.step(e, a)?;
    Ok(Some((t.reward, t.next)))
}

/// Upper bound `sum_e w(e) U(e)` from the model's fully observable relaxation.
pub fn upper_bound<M: DetPomdp>(m: &M, b: &SupportBelief<M::State>) -> f64 {
    let (_, hi) = m.reward_range();
    let cap = hi.max(0.0) / (1.0 - m.discount());
    b.expectation(|e| if m.is_terminal(e) { 0.0 } else { m.value_upper_bound(e).min(cap) })
}

/// Best single action repeated forever, floored at `R_min / (1 - gamma)`.
/// Returns the value and the (lowest-index) action achieving it.
pub fn lower_bound<M: DetPomdp>(m: &M, b: &SupportBelief<M::State>) -> Result<(f64, Action)> {
    let mut caches = vec![HashMap::new(); m.action_count()];
    best_fixed_action(m, b, &mut caches)
}

fn best_fixed_action<M: DetPomdp>(
    m: &M,
    b: &SupportBelief<M::State>,
    caches: &mut [HashMap<M::State, f64>],
) -> Result<(f64, Action)> {
    let gamma = m.discount();
    let floor = m.reward_range().0.min(0.0) / (1.0 - gamma);
    let mut best = (f64::NEG_INFINITY, 0);
    for (a, cache) in caches.iter_mut().enumerate() {
        let mut v = 0.0;
        for &(e, w) in b.atoms() {
            v += w * chain_return(e, gamma, cache, |x| fixed_step(m, x, a as Action))?;
        }
        if v > best.0 {
            best = (v, a as Action);
        }
    }
    Ok((best.0.max(floor), best.1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveParams {
    /// Target gap between the root bounds.
    pub epsilon: f64,
    pub max_depth: usize,
    /// Cap on the number of belief nodes created.
    pub node_budget: usize,
    /// Wall-clock cap in seconds; unset means unlimited.
    pub time_budget_secs: Option<f64>,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams { epsilon: 1e-3, max_depth: 2000, node_budget: 200_000, time_budget_secs: None }
    }
}

impl SolveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon {} must be positive", self.epsilon)));
        }
        if self.max_depth == 0 || self.node_budget == 0 {
            return Err(Error::invalid("depth and node budgets must be positive"));
        }
        if let Some(t) = self.time_budget_secs {
            if !(t > 0.0) {
                return Err(Error::invalid(format!("time budget {t} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Root gap at most epsilon.
    Converged,
    NodeBudget,
    TimeBudget,
    /// Trials stopped making progress, typically at the depth limit.
    Stalled,
}

/// One row of the solver trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub root_lower: f64,
    pub root_upper: f64,
    pub expanded: usize,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub fsc: Fsc,
    /// Exact value of `fsc` from the initial belief.
    pub lower: f64,
    pub upper: f64,
    pub status: SolveStatus,
    pub expanded: usize,
    pub nodes: usize,
    pub trials: usize,
    pub trace: Vec<TraceRow>,
}

impl SolveOutcome {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,root_lower,root_upper,expanded\n");
        for r in &self.trace {
            out.push_str(&format!("{},{},{},{}\n", r.iteration, r.root_lower, r.root_upper, r.expanded));
        }
        out
    }
}

struct Branch {
    reward: f64,
    outcomes: Vec<(Observation, f64, usize)>,
}

struct Node<S> {
    belief: SupportBelief<S>,
    upper: f64,
    lower: f64,
    fixed_action: Action,
    fixed_value: f64,
    branches: Option<Vec<Branch>>,
}

impl<S> Node<S> {
    fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

struct Search<'m, M: DetPomdp> {
    m: &'m M,
    gamma: f64,
    nodes: Vec<Node<M::State>>,
    memo: HashMap<BeliefKey<M::State>, usize>,
    fixed_caches: Vec<HashMap<M::State, f64>>,
    upper_cache: HashMap<M::State, f64>,
    expanded: usize,
}

impl<'m, M: DetPomdp> Search<'m, M> {
    fn node_for(&mut self, belief: SupportBelief<M::State>) -> Result<usize> {
        let key = belief.key();
        if let Some(&id) = self.memo.get(&key) {
            return Ok(id);
        }
        let (fixed_value, fixed_action) = best_fixed_action(self.m, &belief, &mut self.fixed_caches)?;
        let (_, hi) = self.m.reward_range();
        let cap = hi.max(0.0) / (1.0 - self.gamma);
        let m = self.m;
        let cache = &mut self.upper_cache;
        let upper = belief.expectation(|e| {
            *cache.entry(e).or_insert_with(|| if m.is_terminal(e) { 0.0 } else { m.value_upper_bound(e).min(cap) })
        });
        let id = self.nodes.len();
        self.nodes.push(Node {
            belief,
            upper: upper.max(fixed_value),
            lower: fixed_value,
            fixed_action,
            fixed_value,
            branches: None,
        });
        self.memo.insert(key, id);
        Ok(id)
    }

    fn expand(&mut self, id: usize) -> Result<()> {
        let mut branches = Vec::with_capacity(self.m.action_count());
        for a in 0..self.m.action_count() {
            let succ = belief_successors(self.m, &self.nodes[id].belief, a as Action)?;
            let mut outcomes = Vec::with_capacity(succ.branches.len());
            for br in succ.branches {
                let child = self.node_for(br.posterior)?;
                outcomes.push((br.observation, br.probability, child));
            }
            branches.push(Branch { reward: succ.reward, outcomes });
        }
        self.nodes[id].branches = Some(branches);
        self.expanded += 1;
        self.backup(id);
        Ok(())
    }

    fn q_values(&self, br: &Branch) -> (f64, f64) {
        let (mut u, mut l) = (0.0, 0.0);
        for &(_, p, c) in &br.outcomes {
            u += p * self.nodes[c].upper;
            l += p * self.nodes[c].lower;
        }
        (br.reward + self.gamma * u, br.reward + self.gamma * l)
    }

    fn backup(&mut self, id: usize) {
        let Some(branches) = &self.nodes[id].branches else {
            return;
        };
        let (mut best_u, mut best_l) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for br in branches {
            let (u, l) = self.q_values(br);
            best_u = best_u.max(u);
            best_l = best_l.max(l);
        }
        let node = &mut self.nodes[id];
        node.lower = node.lower.max(best_l);
        node.upper = node.upper.min(best_u).max(node.lower);
    }

    /// Action with the best upper Q-value, lowest index on ties.
    fn upper_action(&self, id: usize) -> usize {
        let branches = self.nodes[id].branches.as_ref().expect("expanded");
        let mut best = (0, f64::NEG_INFINITY);
        for (a, br) in branches.iter().enumerate() {
            let (u, _) = self.q_values(br);
            if u > best.1 {
                best = (a, u);
            }
        }
        best.0
    }

    /// Action with the best lower Q-value if it beats the node's fixed action.
    fn lower_action(&self, id: usize) -> Option<Action> {
        let node = &self.nodes[id];
        let branches = node.branches.as_ref()?;
        let mut best = (0, f64::NEG_INFINITY);
        for (a, br) in branches.iter().enumerate() {
            let (_, l) = self.q_values(br);
            if l > best.1 {
                best = (a, l);
            }
        }
        (best.1 >= node.fixed_value).then_some(best.0 as Action)
    }

    /// Controller following the lower-bound policy. Unexpanded nodes, and
    /// nodes whose fixed action is still best, become shared constant nodes.
    fn extract(&self, root: usize) -> Fsc {
        let mut nodes: Vec<FscNode> = Vec::new();
        let mut assigned: HashMap<usize, NodeId> = HashMap::new();
        let mut constants: BTreeMap<Action, NodeId> = BTreeMap::new();
        let mut queue = std::collections::VecDeque::new();
        let mut assign = |id: usize,
                          nodes: &mut Vec<FscNode>,
                          queue: &mut std::collections::VecDeque<(usize, NodeId, Action)>|
         -> NodeId {
            if let Some(&n) = assigned.get(&id) {
                return n;
            }
            let n = match self.lower_action(id) {
                Some(a) => {
                    let n = nodes.len() as NodeId;
                    nodes.push(FscNode::constant(a, n));
                    queue.push_back((id, n, a));
                    n
                }
                None => {
                    let a = self.nodes[id].fixed_action;
                    *constants.entry(a).or_insert_with(|| {
                        let n = nodes.len() as NodeId;
                        nodes.push(FscNode::constant(a, n));
                        n
                    })
                }
            };
            assigned.insert(id, n);
            n
        };
        let initial = assign(root, &mut nodes, &mut queue);
        while let Some((id, n, a)) = queue.pop_front() {
            let branch = &self.nodes[id].branches.as_ref().expect("expanded")[a as usize];
            for &(o, _, child) in &branch.outcomes {
                let target = assign(child, &mut nodes, &mut queue);
                nodes[n as usize].transitions.insert(o, target);
            }
        }
        Fsc { initial, nodes }
    }
}

/// Solves `m` from `b0` to a controller with a certified lower bound.
///
/// The returned controller is always complete: unexpanded beliefs fall back
/// to their best repeated action. `status` reports whether the root gap
/// reached `epsilon` or which budget stopped the search.
pub fn solve<M: DetPomdp>(m: &M, b0: &SupportBelief<M::State>, params: &SolveParams) -> Result<SolveOutcome> {
    params.validate()?;
    let gamma = m.discount();
    let start = Instant::now();
    let deadline = params.time_budget_secs.map(|t| start + Duration::from_secs_f64(t));
    let mut search = Search {
        m,
        gamma,
        nodes: Vec::new(),
        memo: HashMap::new(),
        fixed_caches: vec![HashMap::new(); m.action_count()],
        upper_cache: HashMap::new(),
        expanded: 0,
    };
    let root = search.node_for(b0.clone())?;
    let (lo, hi) = m.reward_range();
    // beyond this depth the remaining value span is below epsilon
    let span = (hi.max(0.0) - lo.min(0.0)) / (1.0 - gamma);
    let tail_depth =
        if span > params.epsilon { ((params.epsilon / span).ln() / gamma.ln()).ceil() as usize + 1 } else { 0 };
    let max_depth = params.max_depth.min(tail_depth.max(1));

    let mut trace = Vec::new();
    let mut trials = 0;
    let mut stale = 0;
    let status = loop {
        let root_node = &search.nodes[root];
        if root_node.gap() <= params.epsilon {
            break SolveStatus::Converged;
        }
        if search.nodes.len() >= params.node_budget {
            break SolveStatus::NodeBudget;
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            break SolveStatus::TimeBudget;
        }
        let before = (root_node.lower, root_node.upper);

        let mut path = Vec::new();
        let mut cur = root;
        let mut depth = 0usize;
        let mut threshold = params.epsilon;
        loop {
            if search.nodes[cur].gap() <= threshold || depth >= max_depth {
                break;
            }
            if search.nodes[cur].branches.is_none() {
                if search.nodes.len() >= params.node_budget {
                    break;
                }
                search.expand(cur)?;
            }
            path.push(cur);
            let a = search.upper_action(cur);
            let next_threshold = threshold / gamma;
            let branch = &search.nodes[cur].branches.as_ref().expect("expanded")[a];
            let mut pick = (branch.outcomes[0].2, f64::NEG_INFINITY);
            for &(_, p, c) in &branch.outcomes {
                let excess = p * (search.nodes[c].gap() - next_threshold);
                if excess > pick.1 {
                    pick = (c, excess);
                }
            }
            cur = pick.0;
            depth += 1;
            threshold = next_threshold;
        }
        for &id in path.iter().rev() {
            search.backup(id);
        }
        trials += 1;
        let root_node = &search.nodes[root];
        trace.push(TraceRow {
            iteration: trials,
            root_lower: root_node.lower,
            root_upper: root_node.upper,
            expanded: search.expanded,
        });
        if (root_node.lower, root_node.upper) == before {
            stale += 1;
            if stale >= 1000 {
                break SolveStatus::Stalled;
            }
        } else {
            stale = 0;
        }
    };

    let fsc = search.extract(root);
    let value = fsc_value(m, &fsc, b0)?;
    let root_node = &search.nodes[root];
    if value + 1e-6 < root_node.lower {
        log::warn!("extracted controller value {value} below root lower bound {}", root_node.lower);
    }
    log::debug!(
        "det-pomdp solve: {:?} after {trials} trials, {} nodes, bounds [{value}, {}]",
        status,
        search.nodes.len(),
        root_node.upper
    );
    Ok(SolveOutcome {
        fsc,
        lower: value,
        upper: root_node.upper.max(value),
        status,
        expanded: search.expanded,
        nodes: search.nodes.len(),
        trials,
        trace,
    })
}

type ActionEdges = (f64, Vec<(f64, usize)>);

/// Optimal value from `b0` by value iteration over the full reachable belief
/// graph. Intended as a test oracle on small problems.
pub fn exact_belief_vi<M: DetPomdp>(m: &M, b0: &SupportBelief<M::State>, tol: f64, cap: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance {tol} must be positive")));
    }
    let gamma = m.discount();
    let mut beliefs = vec![b0.clone()];
    let mut memo: HashMap<BeliefKey<M::State>, usize> = HashMap::from([(b0.key(), 0)]);
    // edges[k][a] = (reward, [(p, child)])
    let mut edges: Vec<Vec<ActionEdges>> = Vec::new();
    let mut k = 0;
    while k < beliefs.len() {
        let mut per_action = Vec::with_capacity(m.action_count());
        for a in 0..m.action_count() {
            let succ = belief_successors(m, &beliefs[k], a as Action)?;
            let mut out = Vec::with_capacity(succ.branches.len());
            for br in succ.branches {
                let key = br.posterior.key();
                let child = match memo.get(&key) {
                    Some(&c) => c,
                    None => {
                        if beliefs.len() >= cap {
                            return Err(Error::ResourceLimit { what: "reachable belief count", cap });
                        }
                        beliefs.push(br.posterior);
                        memo.insert(key, beliefs.len() - 1);
                        beliefs.len() - 1
                    }
                };
                out.push((br.probability, child));
            }
            per_action.push((succ.reward, out));
        }
        edges.push(per_action);
        k += 1;
    }
    let terminal: Vec<bool> = beliefs.iter().map(|b| b.support().all(|e| m.is_terminal(e))).collect();
    let mut v = vec![0.0; beliefs.len()];
    let q = |v: &[f64], k: usize| -> f64 {
        edges[k]
            .iter()
            .map(|(r, out)| r + gamma * out.iter().map(|&(p, c)| p * v[c]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    };
    loop {
        let mut delta: f64 = 0.0;
        for k in (0..beliefs.len()).rev() {
            if terminal[k] {
                continue;
            }
            let nv = q(&v, k);
            delta = delta.max((nv - v[k]).abs());
            v[k] = nv;
        }
        if delta <= tol {
            let residual =
                (0..beliefs.len()).filter(|&k| !terminal[k]).map(|k| (q(&v, k) - v[k]).abs()).fold(0.0, f64::max);
            if residual <= tol {
                return Ok(v[0]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Explicit single-agent Det-POMDP: `table[s][a] = (next, obs, reward)`.
    struct Table {
        table: Vec<Vec<(u32, u32, f64)>>,
        terminal: Vec<bool>,
        initial: SupportBelief<u32>,
        gamma: f64,
    }

    impl DetPomdp for Table {
        type State = u32;
        fn action_count(&self) -> usize {
            self.table[0].len()
        }
        fn discount(&self) -> f64 {
            self.gamma
        }
        fn initial_belief(&self) -> SupportBelief<u32> {
            self.initial.clone()
        }
        fn step(&self, s: u32, a: Action) -> Result<DetStep<u32>> {
            let (next, observation, reward) = self.table[s as usize][a as usize];
            Ok(DetStep { next, observation, reward })
        }
        fn reward_range(&self) -> (f64, f64) {
            let rs = self.table.iter().flatten().map(|x| x.2);
            (rs.clone().fold(f64::INFINITY, f64::min), rs.fold(f64::NEG_INFINITY, f64::max))
        }
        fn is_terminal(&self, s: u32) -> bool {
            self.terminal[s as usize]
        }
    }

    /// Two doors: the prize is behind door A (state 0) or door B (state 1).
    /// Action 0 peeks (observation reveals the door), action 1 opens A,
    /// action 2 opens B. Opening the right door pays 10 and ends; the wrong
    /// door costs 5 and ends. Peeking costs 1.
    fn doors(p: f64) -> Table {
        let end = 2;
        Table {
            table: vec![
                vec![(0, 0, -1.0), (end, 9, 10.0), (end, 9, -5.0)],
                vec![(1, 1, -1.0), (end, 9, -5.0), (end, 9, 10.0)],
                vec![(end, 9, 0.0), (end, 9, 0.0), (end, 9, 0.0)],
            ],
            terminal: vec![false, false, true],
            initial: SupportBelief::from_weights([(0, p), (1, 1.0 - p)]).unwrap(),
            gamma: 0.9,
        }
    }

    #[test]
    fn successors_split_by_observation() {
        let m = doors(0.5);
        let s = belief_successors(&m, &m.initial_belief(), 0).unwrap();
        assert_eq!(s.branches.len(), 2);
        assert_eq!(s.branches[0].probability, 0.5);
        assert_eq!(s.branches[0].posterior, SupportBelief::point(0));
        assert_eq!(s.branches[1].posterior, SupportBelief::point(1));
        assert_eq!(s.reward, -1.0);
    }

    #[test]
    fn successors_merge_shared_states() {
        let m = doors(0.3);
        let s = belief_successors(&m, &m.initial_belief(), 1).unwrap();
        assert_eq!(s.branches.len(), 1);
        assert_eq!(s.branches[0].probability, 1.0);
        assert_eq!(s.branches[0].posterior, SupportBelief::point(2));
        assert!((s.reward - (0.3 * 10.0 - 0.7 * 5.0)).abs() < 1e-12);
    }

    #[test]
    fn doors_value_matches_oracle_and_closed_form() {
        // peek then open: -1 + 0.9 * 10 = 8; guessing gives at most 0.5*10 - 0.5*5 = 2.5
        let m = doors(0.5);
        let oracle = exact_belief_vi(&m, &m.initial_belief(), 1e-12, 100).unwrap();
        assert!((oracle - 8.0).abs() < 1e-9);
        let out = solve(&m, &m.initial_belief(), &SolveParams::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Converged);
        assert!((out.lower - 8.0).abs() < 1e-3);
        assert!(out.upper >= oracle - 1e-9);
        assert_eq!(out.fsc.act(out.fsc.initial).unwrap(), 0);
    }

    #[test]
    fn skewed_prior_prefers_guessing() {
        // with p = 0.95 opening A directly gives 9.25 > 8
        let m = doors(0.95);
        let oracle = exact_belief_vi(&m, &m.initial_belief(), 1e-12, 100).unwrap();
        assert!((oracle - 9.25).abs() < 1e-9);
        let out = solve(&m, &m.initial_belief(), &SolveParams::default()).unwrap();
        assert!((out.lower - oracle).abs() < 1e-3);
        assert!((fsc_value(&m, &out.fsc, &m.initial_belief()).unwrap() - out.lower).abs() < 1e-12);
    }

    #[test]
    fn singleton_belief_reduces_to_shortest_path() {
        let m = Table {
            table: vec![
                vec![(0, 0, 0.0), (1, 1, -1.0)],
                vec![(0, 0, -1.0), (2, 2, 20.0)],
                vec![(2, 2, 0.0), (2, 2, 0.0)],
            ],
            terminal: vec![false, false, true],
            initial: SupportBelief::point(0),
            gamma: 0.95,
        };
        let out = solve(&m, &m.initial_belief(), &SolveParams::default()).unwrap();
        assert!((out.lower - (-1.0 + 0.95 * 20.0)).abs() < 1e-3);
    }

    #[test]
    fn reward_free_model_gives_trivial_controller() {
        let m = Table {
            table: vec![vec![(1, 0, 0.0), (0, 1, 0.0)], vec![(0, 0, 0.0), (1, 0, 0.0)]],
            terminal: vec![false, false],
            initial: SupportBelief::from_weights([(0, 1.0), (1, 1.0)]).unwrap(),
            gamma: 0.95,
        };
        let out = solve(&m, &m.initial_belief(), &SolveParams::default()).unwrap();
        assert_eq!(out.lower, 0.0);
        assert_eq!(out.upper, 0.0);
        assert_eq!(out.fsc.size(), 1);
        assert_eq!(upper_bound(&m, &m.initial_belief()), 0.0);
        assert_eq!(lower_bound(&m, &m.initial_belief()).unwrap().0, 0.0);
    }

    #[test]
    fn chain_return_handles_cycles_and_terminals() {
        // 0 -> 1 -> 2 -> 1 ..., rewards 1, 2, 3
        let mut cache = HashMap::new();
        let g = chain_return(0u32, 0.5, &mut cache, |k| {
            Ok(Some(match k {
                0 => (1.0, 1),
                1 => (2.0, 2),
                _ => (3.0, 1),
            }))
        })
        .unwrap();
        let v1 = (2.0 + 0.5 * 3.0) / (1.0 - 0.25);
        assert!((g - (1.0 + 0.5 * v1)).abs() < 1e-12);
        assert!((cache[&2] - (3.0 + 0.5 * v1)).abs() < 1e-12);

        let mut cache = HashMap::new();
        let g =
            chain_return(0u32, 0.95, &mut cache, |k| Ok((k < 2).then_some((if k == 1 { 500.0 } else { 0.0 }, k + 1))))
                .unwrap();
        assert!((g - 0.95 * 500.0).abs() < 1e-9);
    }

    #[test]
    fn bounds_bracket_the_optimum() {
        for p in [0.1, 0.5, 0.8] {
            let m = doors(p);
            let b = m.initial_belief();
            let v = exact_belief_vi(&m, &b, 1e-12, 100).unwrap();
            let (lo, _) = lower_bound(&m, &b).unwrap();
            assert!(lo <= v + 1e-9 && v <= upper_bound(&m, &b) + 1e-9);
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let m = doors(0.5);
        let bad = SolveParams { epsilon: 0.0, ..SolveParams::default() };
        assert!(solve(&m, &m.initial_belief(), &bad).is_err());
        assert!(exact_belief_vi(&m, &m.initial_belief(), 1e-9, 2).is_err());
    }
}
