//! Cooperative box collecting on an `H x W` interior surrounded by walls.
//!
//! Obstacles and goal cells are fixed and known; the agents' start cells are
//! known as a set but not which agent stands where, and the box placement is
//! unknown. Agents move one at a time in ascending index order; a move into a
//! wall, an obstacle or a cell currently holding another agent does nothing.
//! Entering a box cell while empty-handed picks the box up; entering an
//! unfilled goal while carrying delivers it for [`DELIVERY_REWARD`].
//!
//! Coordinates in descriptors are 0-based `[row, col]` within the interior.
//!
//! State packing, most significant first: agent positions (base `C` over
//! free cells, agent 0 least significant), carry flags, box flags (one bit per
//! non-goal free cell), filled-goal flags.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::model::{DetDecPomdp, JointAction, JointObservation, StateId, SupportBelief, Transition};
use crate::rng;

pub const DELIVERY_REWARD: f64 = 100.0;
pub const ACTION_COUNT: usize = 5;
pub const WAIT: u32 = 4;
/// Observation alphabet size per cell.
pub const CELL_SYMBOLS: u32 = 5;
pub const WALL: u32 = 0;
pub const EMPTY: u32 = 1;
pub const BOX: u32 = 2;
pub const AGENT: u32 = 3;
pub const GOAL: u32 = 4;
const GENERATION_ATTEMPTS: usize = 1000;
const MAX_SUPPORT: usize = 1 << 20;

const DIRS: [(i64, i64); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

pub type Cell = [usize; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectingSpec {
    pub h: usize,
    pub w: usize,
    pub agents: usize,
    pub boxes: usize,
    pub seed: u64,
    #[serde(default = "super::default_discount")]
    pub discount: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialConfig {
    /// Start cell of each agent, in agent order.
    pub agents: Vec<Cell>,
    pub boxes: Vec<Cell>,
}

/// Everything needed to rebuild a Collecting instance. The initial belief is
/// uniform over `initial_support`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectingDescriptor {
    pub h: usize,
    pub w: usize,
    pub agents: usize,
    pub boxes: usize,
    pub seed: u64,
    pub discount: f64,
    pub obstacles: Vec<Cell>,
    pub goals: Vec<Cell>,
    pub start_cells: Vec<Cell>,
    pub initial_support: Vec<InitialConfig>,
}

fn check_spec(spec: &CollectingSpec) -> Result<()> {
    if spec.h == 0 || spec.w == 0 || spec.agents == 0 || spec.boxes == 0 {
        return Err(Error::invalid("grid dimensions, agents and boxes must be positive"));
    }
    // obstacles + goals + starts, and room left for the boxes
    if spec.h * spec.w < 3 * spec.boxes + spec.agents {
        return Err(Error::invalid(format!(
            "{}x{} interior cannot hold {} obstacles, {} goals, {} starts and {} boxes",
            spec.h, spec.w, spec.boxes, spec.boxes, spec.agents, spec.boxes
        )));
    }
    Ok(())
}

fn connected(h: usize, w: usize, blocked: &[bool]) -> bool {
    let Some(start) = blocked.iter().position(|b| !b) else {
        return true;
    };
    let mut seen = vec![false; h * w];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut count = 1;
    while let Some(c) = queue.pop_front() {
        let (r, col) = ((c / w) as i64, (c % w) as i64);
        for (dr, dc) in DIRS {
            let (nr, nc) = (r + dr, col + dc);
            if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                continue;
            }
            let nidx = nr as usize * w + nc as usize;
            if !blocked[nidx] && !seen[nidx] {
                seen[nidx] = true;
                count += 1;
                queue.push_back(nidx);
            }
        }
    }
    count == blocked.iter().filter(|b| !**b).count()
}

fn combinations(n: usize, k: usize, out: &mut Vec<Vec<usize>>) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), out);
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let first = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, first);
            out.push(p);
        }
    }
    out
}

pub fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Samples obstacles, goals and start cells, rejecting layouts whose free
/// cells are disconnected, and enumerates the initial support: every
/// assignment of agents to the start cells times every box placement on the
/// remaining non-goal free cells.
pub fn generate(spec: &CollectingSpec) -> Result<CollectingDescriptor> {
    check_spec(spec)?;
    let cells = spec.h * spec.w;
    let mut r = rng::stream(spec.seed, "collecting");
    let mut pick = Vec::new();
    for _ in 0..GENERATION_ATTEMPTS {
        pick = rng::sample_distinct(&mut r, cells, 2 * spec.boxes + spec.agents);
        let mut blocked = vec![false; cells];
        for &c in &pick[..spec.boxes] {
            blocked[c] = true;
        }
        if connected(spec.h, spec.w, &blocked) {
            break;
        }
    }
    let to_cell = |c: usize| [c / spec.w, c % spec.w];
    let mut obstacles: Vec<usize> = pick[..spec.boxes].to_vec();
    let mut goals: Vec<usize> = pick[spec.boxes..2 * spec.boxes].to_vec();
    let mut starts: Vec<usize> = pick[2 * spec.boxes..].to_vec();
    obstacles.sort_unstable();
    goals.sort_unstable();
    starts.sort_unstable();

    let box_cells: Vec<usize> =
        (0..cells).filter(|c| !obstacles.contains(c) && !goals.contains(c) && !starts.contains(c)).collect();
    let size = binomial(box_cells.len() as u128, spec.boxes as u128) * (1..=spec.agents as u128).product::<u128>();
    if size > MAX_SUPPORT as u128 {
        return Err(Error::ResourceLimit { what: "initial support size", cap: MAX_SUPPORT });
    }
    let mut combos = Vec::new();
    combinations(box_cells.len(), spec.boxes, &mut combos);
    let mut initial_support = Vec::with_capacity(size as usize);
    for perm in permutations(&starts) {
        for combo in &combos {
            initial_support.push(InitialConfig {
                agents: perm.iter().map(|&c| to_cell(c)).collect(),
                boxes: combo.iter().map(|&k| to_cell(box_cells[k])).collect(),
            });
        }
    }
    let desc = CollectingDescriptor {
        h: spec.h,
        w: spec.w,
        agents: spec.agents,
        boxes: spec.boxes,
        seed: spec.seed,
        discount: spec.discount,
        obstacles: obstacles.into_iter().map(to_cell).collect(),
        goals: goals.into_iter().map(to_cell).collect(),
        start_cells: starts.into_iter().map(to_cell).collect(),
        initial_support,
    };
    Collecting::new(desc.clone())?;
    Ok(desc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Obstacle,
    Free { pos: u32, slot: Option<u32>, goal: Option<u32> },
}

#[derive(Clone, Debug)]
pub struct Collecting {
    desc: CollectingDescriptor,
    /// Interior cell kinds, row-major.
    kinds: Vec<Kind>,
    /// Interior cell index of each free-cell position index.
    free_cells: Vec<usize>,
    /// Position index of each box slot.
    slot_pos: Vec<u32>,
    free_count: u64,
    pos_radix: u64,
    initial: SupportBelief,
}

impl Collecting {
    pub fn new(desc: CollectingDescriptor) -> Result<Self> {
        let (h, w) = (desc.h, desc.w);
        if h == 0 || w == 0 || desc.agents == 0 || desc.boxes == 0 {
            return Err(Error::parse("h", "grid dimensions, agents and boxes must be positive"));
        }
        if !(desc.discount > 0.0 && desc.discount < 1.0) {
            return Err(Error::parse("discount", format!("{} is not in (0,1)", desc.discount)));
        }
        let cells = h.checked_mul(w).filter(|&c| c <= 4096).ok_or_else(|| Error::parse("h", "grid too large"))?;
        let index = |field: &str, c: &Cell| -> Result<usize> {
            if c[0] >= h || c[1] >= w {
                return Err(Error::parse(field, format!("cell {c:?} outside the {h}x{w} interior")));
            }
            Ok(c[0] * w + c[1])
        };
        let mut obstacle = vec![false; cells];
        for (k, c) in desc.obstacles.iter().enumerate() {
            obstacle[index(&format!("obstacles[{k}]"), c)?] = true;
        }
        if desc.goals.len() != desc.boxes {
            return Err(Error::parse("goals", format!("expected {} goals", desc.boxes)));
        }
        let mut goal_of = vec![None; cells];
        for (k, c) in desc.goals.iter().enumerate() {
            let i = index(&format!("goals[{k}]"), c)?;
            if obstacle[i] || goal_of[i].is_some() {
                return Err(Error::parse(format!("goals[{k}]"), "goal overlaps an obstacle or another goal"));
            }
            goal_of[i] = Some(k as u32);
        }
        let mut kinds = Vec::with_capacity(cells);
        let mut free_cells = Vec::new();
        let mut slot_pos = Vec::new();
        for i in 0..cells {
            if obstacle[i] {
                kinds.push(Kind::Obstacle);
                continue;
            }
            let pos = free_cells.len() as u32;
            free_cells.push(i);
            let slot = if goal_of[i].is_none() {
                slot_pos.push(pos);
                Some(slot_pos.len() as u32 - 1)
            } else {
                None
            };
            kinds.push(Kind::Free { pos, slot, goal: goal_of[i] });
        }
        let free_count = free_cells.len() as u64;
        let pos_radix = free_count
            .checked_pow(desc.agents as u32)
            .filter(|_| desc.agents < 32)
            .ok_or_else(|| Error::parse("agents", "state space does not fit in 64 bits"))?;
        let bits = desc.agents + slot_pos.len() + desc.boxes;
        if bits >= 64 || pos_radix.checked_mul(1u64 << bits).is_none() {
            return Err(Error::parse("agents", "state space does not fit in 64 bits"));
        }
        if desc.initial_support.is_empty() {
            return Err(Error::parse("initial_support", "initial support is empty"));
        }
        let mut model =
            Collecting { desc, kinds, free_cells, slot_pos, free_count, pos_radix, initial: SupportBelief::point(0) };
        let mut atoms = Vec::with_capacity(model.desc.initial_support.len());
        for (k, cfg) in model.desc.initial_support.iter().enumerate() {
            let field = format!("initial_support[{k}]");
            if cfg.agents.len() != model.desc.agents || cfg.boxes.len() != model.desc.boxes {
                return Err(Error::parse(field, "wrong number of agents or boxes"));
            }
            let mut positions = SmallVec::<[u32; 4]>::new();
            for c in &cfg.agents {
                match model.kinds[index(&field, c)?] {
                    Kind::Free { pos, .. } if !positions.contains(&pos) => positions.push(pos),
                    _ => return Err(Error::parse(field, format!("agent start {c:?} is blocked or shared"))),
                }
            }
            let mut boxes = 0u64;
            for c in &cfg.boxes {
                match model.kinds[index(&field, c)?] {
                    Kind::Free { pos, slot: Some(slot), .. } if !positions.contains(&pos) && boxes >> slot & 1 == 0 => {
                        boxes |= 1 << slot
                    }
                    _ => return Err(Error::parse(field, format!("box cell {c:?} is invalid"))),
                }
            }
            atoms.push((model.pack(&positions, 0, boxes, 0), 1.0));
        }
        model.initial = SupportBelief::from_weights(atoms)?;
        if model.initial.len() != model.desc.initial_support.len() {
            return Err(Error::parse("initial_support", "duplicate configurations"));
        }
        Ok(model)
    }

    pub fn descriptor(&self) -> &CollectingDescriptor {
        &self.desc
    }

    /// Number of non-obstacle interior cells.
    pub fn free_cell_count(&self) -> usize {
        self.free_count as usize
    }

    /// `(2C)^{n_a} * binom(C, n_b)` with `C` free cells.
    pub fn formula_state_count(&self) -> u128 {
        let c = self.free_count as u128;
        (2 * c).pow(self.desc.agents as u32) * binomial(c, self.desc.boxes as u128)
    }

    fn slots(&self) -> usize {
        self.slot_pos.len()
    }

    pub fn pack(&self, positions: &[u32], carry: u64, boxes: u64, filled: u64) -> StateId {
        let pos = positions.iter().rev().fold(0u64, |acc, &p| acc * self.free_count + u64::from(p));
        let mut s = (pos << self.desc.agents) | carry;
        s = (s << self.slots()) | boxes;
        (s << self.desc.boxes) | filled
    }

    pub fn unpack(&self, s: StateId) -> (SmallVec<[u32; 4]>, u64, u64, u64) {
        let filled = s & ((1u64 << self.desc.boxes) - 1);
        let s = s >> self.desc.boxes;
        let boxes = s & ((1u64 << self.slots()) - 1);
        let s = s >> self.slots();
        let carry = s & ((1u64 << self.desc.agents) - 1);
        let mut pos = s >> self.desc.agents;
        let mut positions = SmallVec::new();
        for _ in 0..self.desc.agents {
            positions.push((pos % self.free_count) as u32);
            pos /= self.free_count;
        }
        (positions, carry, boxes, filled)
    }

    fn neighbour(&self, pos: u32, dir: usize) -> Option<u32> {
        let cell = self.free_cells[pos as usize];
        let (r, c) = ((cell / self.desc.w) as i64 + DIRS[dir].0, (cell % self.desc.w) as i64 + DIRS[dir].1);
        if r < 0 || c < 0 || r >= self.desc.h as i64 || c >= self.desc.w as i64 {
            return None;
        }
        match self.kinds[r as usize * self.desc.w + c as usize] {
            Kind::Free { pos, .. } => Some(pos),
            Kind::Obstacle => None,
        }
    }

    fn observe(&self, me: u32, positions: &[u32], boxes: u64) -> u32 {
        let cell = self.free_cells[me as usize];
        let (r0, c0) = ((cell / self.desc.w) as i64, (cell % self.desc.w) as i64);
        let mut code = 0u32;
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (r, c) = (r0 + dr, c0 + dc);
                let symbol = if r < 0 || c < 0 || r >= self.desc.h as i64 || c >= self.desc.w as i64 {
                    WALL
                } else {
                    match self.kinds[r as usize * self.desc.w + c as usize] {
                        Kind::Obstacle => WALL,
                        Kind::Free { pos, slot, goal } => {
                            if positions.contains(&pos) {
                                AGENT
                            } else if slot.is_some_and(|k| boxes >> k & 1 == 1) {
                                BOX
                            } else if goal.is_some() {
                                GOAL
                            } else {
                                EMPTY
                            }
                        }
                    }
                };
                code = code * CELL_SYMBOLS + symbol;
            }
        }
        code
    }

    fn kind_at(&self, pos: u32) -> Kind {
        self.kinds[self.free_cells[pos as usize]]
    }
}

impl DetDecPomdp for Collecting {
    fn agent_count(&self) -> usize {
        self.desc.agents
    }

    fn action_count(&self, _agent: usize) -> usize {
        ACTION_COUNT
    }

    fn observation_count(&self, _agent: usize) -> usize {
        CELL_SYMBOLS.pow(9) as usize
    }

    fn discount(&self) -> f64 {
        self.desc.discount
    }

    fn state_count(&self) -> u64 {
        self.pos_radix << (self.desc.agents + self.slots() + self.desc.boxes)
    }

    fn initial_belief(&self) -> SupportBelief {
        self.initial.clone()
    }

    fn is_terminal(&self, s: StateId) -> bool {
        let all = (1u64 << self.desc.boxes) - 1;
        s & all == all
    }

    fn step(&self, s: StateId, a: &JointAction) -> Result<Transition> {
        self.check_state(s)?;
        self.check_joint_action(a)?;
        let (mut positions, mut carry, mut boxes, mut filled) = self.unpack(s);
        let mut reward = 0.0;
        if !self.is_terminal(s) {
            for i in 0..self.desc.agents {
                let act = a.agent(i);
                if act == WAIT {
                    continue;
                }
                let Some(target) = self.neighbour(positions[i], act as usize) else {
                    continue;
                };
                if positions.contains(&target) {
                    continue;
                }
                positions[i] = target;
                if let Kind::Free { slot, goal, .. } = self.kind_at(target) {
                    let holding = carry >> i & 1 == 1;
                    match (holding, slot, goal) {
                        (false, Some(k), _) if boxes >> k & 1 == 1 => {
                            boxes &= !(1 << k);
                            carry |= 1 << i;
                        }
                        (true, _, Some(g)) if filled >> g & 1 == 0 => {
                            filled |= 1 << g;
                            carry &= !(1 << i);
                            reward += DELIVERY_REWARD;
                        }
                        _ => {}
                    }
                }
            }
        }
        let observation = JointObservation(positions.iter().map(|&p| self.observe(p, &positions, boxes)).collect());
        Ok(Transition { next: self.pack(&positions, carry, boxes, filled), observation, reward })
    }

    fn reward_range(&self) -> (f64, f64) {
        (0.0, DELIVERY_REWARD * self.desc.agents.min(self.desc.boxes) as f64)
    }
}
