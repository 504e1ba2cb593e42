//! Multi-agent Canadian traveler problem on an `N x N` grid.
//!
//! Vertices are numbered row-major starting at 1 in descriptors (0-based
//! internally). A stochastic edge is either blocked or open for the whole
//! episode; its status is revealed to an agent standing on an incident
//! vertex. Moving along an open edge costs its weight, the first arrival of an
//! agent at its goal pays [`GOAL_REWARD`] and freezes that agent.
//!
//! State packing, most significant first: agent positions (base `N^2`, agent
//! 0 least significant), done flags (one bit per agent), blocked flags (one
//! bit per stochastic edge, in descriptor order).

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::model::{DetDecPomdp, JointAction, JointObservation, StateId, SupportBelief, Transition};
use crate::rng;

pub const GOAL_REWARD: f64 = 500.0;
pub const ACTION_COUNT: usize = 5;
pub const WAIT: u32 = 4;
const MAX_WEIGHT: u32 = 10;
/// Largest accepted grid side.
pub const MAX_SIDE: usize = 64;
/// Largest accepted number of stochastic edges; the initial support has `2^k` atoms.
pub const MAX_STOCHASTIC: usize = 24;

/// Up, right, down, left as (row, col) offsets.
const DIRS: [(i64, i64); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MactpSpec {
    pub n: usize,
    pub agents: usize,
    pub stochastic_edges: usize,
    pub seed: u64,
    #[serde(default = "super::default_discount")]
    pub discount: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeDesc {
    pub u: usize,
    pub v: usize,
    pub weight: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticEdge {
    /// Index into `edges`.
    pub edge: usize,
    pub blockage_probability: f64,
}

/// Everything needed to rebuild a MACTP instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MactpDescriptor {
    pub n: usize,
    pub agents: usize,
    pub seed: u64,
    pub discount: f64,
    pub edges: Vec<EdgeDesc>,
    pub stochastic: Vec<StochasticEdge>,
    pub goals: Vec<usize>,
    pub starts: Vec<usize>,
}

/// Edges of the 4-connected grid in canonical order: for each vertex in
/// row-major order, its right edge then its down edge. 0-based endpoints.
pub fn grid_edges(n: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(2 * n * (n - 1));
    for r in 0..n {
        for c in 0..n {
            let v = r * n + c;
            if c + 1 < n {
                edges.push((v, v + 1));
            }
            if r + 1 < n {
                edges.push((v, v + n));
            }
        }
    }
    edges
}

pub fn generate(spec: &MactpSpec) -> Result<MactpDescriptor> {
    if !(2..=MAX_SIDE).contains(&spec.n) {
        return Err(Error::invalid(format!("grid side {} outside 2..={MAX_SIDE}", spec.n)));
    }
    if spec.stochastic_edges > MAX_STOCHASTIC {
        return Err(Error::invalid(format!("at most {MAX_STOCHASTIC} stochastic edges are supported")));
    }
    if spec.agents == 0 {
        return Err(Error::invalid("at least one agent is required"));
    }
    let grid = grid_edges(spec.n);
    if spec.stochastic_edges > grid.len() {
        return Err(Error::invalid(format!(
            "{} stochastic edges requested but the grid has {} edges",
            spec.stochastic_edges,
            grid.len()
        )));
    }
    let mut r = rng::stream(spec.seed, "mactp");
    let edges: Vec<EdgeDesc> = grid
        .iter()
        .map(|&(u, v)| EdgeDesc { u: u + 1, v: v + 1, weight: 1 + rng::below(&mut r, MAX_WEIGHT as usize) as u32 })
        .collect();
    let mut chosen = rng::sample_distinct(&mut r, edges.len(), spec.stochastic_edges);
    chosen.sort_unstable();
    let stochastic = chosen
        .into_iter()
        .map(|edge| {
            let p = 0.1 + 0.8 * rng::unit(&mut r);
            StochasticEdge { edge, blockage_probability: (p * 1000.0).round() / 1000.0 }
        })
        .collect();
    let cells = spec.n * spec.n;
    let lo = cells.saturating_sub(spec.stochastic_edges).max(1);
    let goals = (0..spec.agents).map(|_| lo + rng::below(&mut r, cells - lo + 1)).collect();
    let desc = MactpDescriptor {
        n: spec.n,
        agents: spec.agents,
        seed: spec.seed,
        discount: spec.discount,
        edges,
        stochastic,
        goals,
        starts: vec![1; spec.agents],
    };
    Mactp::new(desc.clone())?;
    Ok(desc)
}

#[derive(Clone, Debug)]
pub struct Mactp {
    desc: MactpDescriptor,
    cells: usize,
    /// `moves[v][d]`: edge index leaving `v` in direction `d`.
    moves: Vec<[Option<u32>; 4]>,
    targets: Vec<[u32; 4]>,
    weights: Vec<f64>,
    /// Blocked-flag bit of each edge, if stochastic.
    stochastic_bit: Vec<Option<u32>>,
    goals: Vec<u32>,
    starts: Vec<u32>,
    pos_radix: u64,
}

impl Mactp {
    pub fn new(desc: MactpDescriptor) -> Result<Self> {
        let n = desc.n;
        if n < 2 {
            return Err(Error::parse("n", "grid side must be at least 2"));
        }
        if n > MAX_SIDE {
            return Err(Error::parse("n", format!("grid side {n} exceeds {MAX_SIDE}")));
        }
        if desc.stochastic.len() > MAX_STOCHASTIC {
            return Err(Error::parse("stochastic", format!("at most {MAX_STOCHASTIC} stochastic edges are supported")));
        }
        if desc.agents == 0 {
            return Err(Error::parse("agents", "at least one agent is required"));
        }
        if !(desc.discount > 0.0 && desc.discount < 1.0) {
            return Err(Error::parse("discount", format!("{} is not in (0,1)", desc.discount)));
        }
        let cells = n.checked_mul(n).ok_or_else(|| Error::parse("n", "grid too large"))?;
        if desc.goals.len() != desc.agents {
            return Err(Error::parse("goals", format!("expected {} goals", desc.agents)));
        }
        if desc.starts.len() != desc.agents {
            return Err(Error::parse("starts", format!("expected {} starts", desc.agents)));
        }
        for (field, list) in [("goals", &desc.goals), ("starts", &desc.starts)] {
            if let Some((i, v)) = list.iter().enumerate().find(|(_, &v)| v == 0 || v > cells) {
                return Err(Error::parse(format!("{field}[{i}]"), format!("vertex {v} outside 1..={cells}")));
            }
        }
        let mut moves = vec![[None; 4]; cells];
        let mut targets = vec![[0u32; 4]; cells];
        for (k, e) in desc.edges.iter().enumerate() {
            if e.u == 0 || e.u > cells || e.v == 0 || e.v > cells {
                return Err(Error::parse(format!("edges[{k}]"), "endpoint outside the grid"));
            }
            if !(1..=MAX_WEIGHT).contains(&e.weight) {
                return Err(Error::parse(format!("edges[{k}].weight"), format!("{} outside 1..=10", e.weight)));
            }
            let (u, v) = (e.u - 1, e.v - 1);
            let (ur, uc) = ((u / n) as i64, (u % n) as i64);
            let (vr, vc) = ((v / n) as i64, (v % n) as i64);
            let d = DIRS
                .iter()
                .position(|&(dr, dc)| ur + dr == vr && uc + dc == vc)
                .ok_or_else(|| Error::parse(format!("edges[{k}]"), "endpoints are not grid neighbours"))?;
            let back = (d + 2) % 4;
            if moves[u][d].is_some() || moves[v][back].is_some() {
                return Err(Error::parse(format!("edges[{k}]"), "duplicate edge"));
            }
            moves[u][d] = Some(k as u32);
            moves[v][back] = Some(k as u32);
            targets[u][d] = v as u32;
            targets[v][back] = u as u32;
        }
        let mut stochastic_bit = vec![None; desc.edges.len()];
        for (bit, s) in desc.stochastic.iter().enumerate() {
            let field = format!("stochastic[{bit}]");
            if s.edge >= desc.edges.len() {
                return Err(Error::parse(format!("{field}.edge"), "edge index out of range"));
            }
            if stochastic_bit[s.edge].is_some() {
                return Err(Error::parse(format!("{field}.edge"), "edge listed twice"));
            }
            if !(0.0..=1.0).contains(&s.blockage_probability) {
                return Err(Error::parse(format!("{field}.blockage_probability"), "not a probability"));
            }
            stochastic_bit[s.edge] = Some(bit as u32);
        }
        let pos_radix = (cells as u64)
            .checked_pow(desc.agents as u32)
            .ok_or_else(|| Error::parse("agents", "state space does not fit in 64 bits"))?;
        pos_radix
            .checked_mul(1u64 << desc.agents.min(63))
            .and_then(|x| x.checked_mul(1u64 << desc.stochastic.len()))
            .filter(|_| desc.agents < 63)
            .ok_or_else(|| Error::parse("agents", "state space does not fit in 64 bits"))?;
        if pos_radix.checked_mul(16).is_none_or(|x| x > u64::from(u32::MAX)) {
            return Err(Error::parse("agents", "observation space does not fit in 32 bits"));
        }
        let weights = desc.edges.iter().map(|e| f64::from(e.weight)).collect();
        let goals = desc.goals.iter().map(|&g| (g - 1) as u32).collect();
        let starts = desc.starts.iter().map(|&g| (g - 1) as u32).collect();
        Ok(Mactp { desc, cells, moves, targets, weights, stochastic_bit, goals, starts, pos_radix })
    }

    pub fn descriptor(&self) -> &MactpDescriptor {
        &self.desc
    }

    pub fn stochastic_edge_count(&self) -> usize {
        self.desc.stochastic.len()
    }

    /// `(N^2)^{n_a} * 2^{n_e}`: positions times blockage configurations.
    pub fn raw_state_count(&self) -> u128 {
        u128::from(self.pos_radix) << self.stochastic_edge_count()
    }

    pub fn pack(&self, positions: &[u32], done: u64, blocked: u64) -> StateId {
        let mut pos = 0u64;
        for &p in positions.iter().rev() {
            pos = pos * self.cells as u64 + u64::from(p);
        }
        ((pos << self.desc.agents) | done) << self.stochastic_edge_count() | blocked
    }

    pub fn unpack(&self, s: StateId) -> (SmallVec<[u32; 4]>, u64, u64) {
        let ne = self.stochastic_edge_count();
        let blocked = s & ((1u64 << ne) - 1);
        let rest = s >> ne;
        let done = rest & ((1u64 << self.desc.agents) - 1);
        let mut pos = rest >> self.desc.agents;
        let mut positions = SmallVec::new();
        for _ in 0..self.desc.agents {
            positions.push((pos % self.cells as u64) as u32);
            pos /= self.cells as u64;
        }
        (positions, done, blocked)
    }

    fn open(&self, edge: u32, blocked: u64) -> bool {
        match self.stochastic_bit[edge as usize] {
            Some(bit) => blocked >> bit & 1 == 0,
            None => true,
        }
    }

    /// Bitmask of open directions at `v`.
    fn open_mask(&self, v: u32, blocked: u64) -> u32 {
        (0..4).fold(0, |m, d| match self.moves[v as usize][d] {
            Some(e) if self.open(e, blocked) => m | 1 << d,
            _ => m,
        })
    }

    fn position_index(&self, positions: &[u32]) -> u32 {
        positions.iter().rev().fold(0u64, |acc, &p| acc * self.cells as u64 + u64::from(p)) as u32
    }
}

impl DetDecPomdp for Mactp {
    fn agent_count(&self) -> usize {
        self.desc.agents
    }

    fn action_count(&self, _agent: usize) -> usize {
        ACTION_COUNT
    }

    fn observation_count(&self, _agent: usize) -> usize {
        16 * self.pos_radix as usize
    }

    fn discount(&self) -> f64 {
        self.desc.discount
    }

    fn state_count(&self) -> u64 {
        (self.pos_radix << self.desc.agents) << self.stochastic_edge_count()
    }

    fn initial_belief(&self) -> SupportBelief {
        let ne = self.stochastic_edge_count();
        let probs: Vec<f64> = self.desc.stochastic.iter().map(|s| s.blockage_probability).collect();
        let mut atoms = Vec::with_capacity(1 << ne);
        for blocked in 0..(1u64 << ne) {
            let w: f64 =
                probs.iter().enumerate().map(|(k, &p)| if blocked >> k & 1 == 1 { p } else { 1.0 - p }).product();
            if w > 0.0 {
                atoms.push((self.pack(&self.starts, 0, blocked), w));
            }
        }
        SupportBelief::from_weights(atoms).expect("blockage configurations carry positive mass")
    }

    fn is_terminal(&self, s: StateId) -> bool {
        let done = (s >> self.stochastic_edge_count()) & ((1u64 << self.desc.agents) - 1);
        done == (1u64 << self.desc.agents) - 1
    }

    fn step(&self, s: StateId, a: &JointAction) -> Result<Transition> {
        self.check_state(s)?;
        self.check_joint_action(a)?;
        let (mut positions, mut done, blocked) = self.unpack(s);
        let mut reward = 0.0;
        if !self.is_terminal(s) {
            for i in 0..self.desc.agents {
                if done >> i & 1 == 1 {
                    continue;
                }
                let act = a.agent(i);
                if act != WAIT {
                    let v = positions[i] as usize;
                    if let Some(e) = self.moves[v][act as usize] {
                        if self.open(e, blocked) {
                            positions[i] = self.targets[v][act as usize];
                            reward -= self.weights[e as usize];
                        }
                    }
                }
                if positions[i] == self.goals[i] {
                    done |= 1 << i;
                    reward += GOAL_REWARD;
                }
            }
        }
        let pos_index = self.position_index(&positions);
        let observation =
            JointObservation(positions.iter().map(|&p| self.open_mask(p, blocked) + 16 * pos_index).collect());
        Ok(Transition { next: self.pack(&positions, done, blocked), observation, reward })
    }

    fn reward_range(&self) -> (f64, f64) {
        let max_w = self.weights.iter().cloned().fold(0.0, f64::max);
        let na = self.desc.agents as f64;
        (-max_w * na, GOAL_REWARD * na)
    }
}
