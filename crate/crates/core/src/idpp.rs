//! Iterated best response over finite-state controllers.
//!
//! Each agent first gets the controller that best answers the centralized
//! greedy behavior of the others. Agents then take turns replacing their
//! controller by a best response to the current others, keeping a new
//! controller only if it raises the exact joint value. The loop stops once a
//! full round changes nothing, which leaves every agent within the acceptance
//! threshold of its (solver-certified) best response.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bestresponse::{build_br_detpomdp, build_init_detpomdp};
use crate::detpomdp::{self, SolveOutcome, SolveParams, SolveStatus};
use crate::error::{Error, Result};
use crate::eval;
use crate::fsc::{Fsc, JointPolicy};
use crate::mdp::{self, MdpValueTable};
use crate::model::DetDecPomdp;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentOrder {
    /// Ascending agent index every round.
    RoundRobin,
    /// A fresh seeded permutation every round.
    Shuffled { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdppParams {
    /// A full round whose improvements all stay at or below this value ends the loop.
    pub convergence_tolerance: f64,
    /// Minimum improvement for accepting a new controller.
    pub acceptance_margin: f64,
    pub max_rounds: usize,
    pub solver: SolveParams,
    pub mdp_tolerance: f64,
    pub mdp_state_cap: usize,
    pub order: AgentOrder,
    /// Wall-clock cap on the whole run in seconds; unset means unlimited.
    pub time_budget_secs: Option<f64>,
}

impl Default for IdppParams {
    fn default() -> Self {
        IdppParams {
            convergence_tolerance: 1e-4,
            acceptance_margin: 1e-6,
            max_rounds: 50,
            solver: SolveParams::default(),
            mdp_tolerance: mdp::DEFAULT_TOLERANCE,
            mdp_state_cap: mdp::DEFAULT_STATE_CAP,
            order: AgentOrder::RoundRobin,
            time_budget_secs: None,
        }
    }
}

impl IdppParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.convergence_tolerance > 0.0) || !(self.acceptance_margin > 0.0) {
            return Err(Error::invalid("convergence tolerance and acceptance margin must be positive"));
        }
        if self.max_rounds == 0 {
            return Err(Error::invalid("max_rounds must be at least 1"));
        }
        if !(self.mdp_tolerance > 0.0) {
            return Err(Error::invalid("mdp tolerance must be positive"));
        }
        if let Some(t) = self.time_budget_secs {
            if !(t > 0.0) {
                return Err(Error::invalid(format!("time budget {t} must be positive")));
            }
        }
        self.solver.validate()
    }

    /// Improvement a new controller must exceed to be accepted. Using the
    /// convergence tolerance here too means a round without acceptances
    /// certifies every agent, and accepted values cannot oscillate.
    pub fn acceptance_threshold(&self) -> f64 {
        self.acceptance_margin.max(self.convergence_tolerance)
    }
}

/// One best-response attempt.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub round: usize,
    pub agent: usize,
    pub pre_value: f64,
    /// Joint value with the new controller, or the incumbent value if the solve failed.
    pub post_value: f64,
    pub accepted: bool,
    pub solver_status: Option<SolveStatus>,
    pub solver_nodes: usize,
    pub solver_lower: f64,
    pub solver_upper: f64,
    pub controller_size: usize,
    pub seconds: f64,
    pub error: Option<String>,
}

/// Iteration history as CSV. With `timing` off the seconds column is zero so
/// that repeated runs produce identical files.
pub fn history_csv(records: &[IterationRecord], timing: bool) -> String {
    let mut out = String::from("round,agent,pre_value,post_value,accepted,solver_nodes,seconds\n");
    for r in records {
        let secs = if timing { r.seconds } else { 0.0 };
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.6}\n",
            r.round, r.agent, r.pre_value, r.post_value, r.accepted, r.solver_nodes, secs
        ));
    }
    out
}

/// Per-agent result of the initialization solves.
#[derive(Clone, Debug, Serialize)]
pub struct InitSummary {
    pub agent: usize,
    pub status: SolveStatus,
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
    pub controller_size: usize,
}

#[derive(Clone, Debug)]
pub struct InitOutcome {
    pub policy: JointPolicy,
    pub table: MdpValueTable,
    pub summaries: Vec<InitSummary>,
}

/// Centralized values over the states reachable from the initial belief.
pub fn centralized_values(model: &dyn DetDecPomdp, params: &IdppParams) -> Result<MdpValueTable> {
    mdp::value_iteration(model, params.mdp_tolerance, &model.initial_belief(), params.mdp_state_cap)
}

/// Initial controllers: each agent best-responds to the others following
/// their components of the centralized greedy policy.
pub fn heuristic_init(model: &dyn DetDecPomdp, params: &IdppParams) -> Result<InitOutcome> {
    params.validate()?;
    let table = centralized_values(model, params)?;
    let pi = mdp::default_policy(&table, model)?;
    let mut agents = Vec::with_capacity(model.agent_count());
    let mut summaries = Vec::with_capacity(model.agent_count());
    for i in 0..model.agent_count() {
        let init = build_init_detpomdp(model, i, &pi)?.with_upper_bounds(&table);
        let out = detpomdp::solve(&init, &init.initial_ext_belief(), &params.solver).map_err(|e| {
            Error::invalid(format!("initialization solve for agent {i} failed after {} agents: {e}", agents.len()))
        })?;
        log::info!(
            "init agent {i}: {:?}, bounds [{:.4}, {:.4}], {} nodes",
            out.status,
            out.lower,
            out.upper,
            out.nodes
        );
        summaries.push(InitSummary {
            agent: i,
            status: out.status,
            lower: out.lower,
            upper: out.upper,
            nodes: out.nodes,
            controller_size: out.fsc.size(),
        });
        agents.push(out.fsc);
    }
    Ok(InitOutcome { policy: JointPolicy::new(agents), table, summaries })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// A full round produced no accepted update.
    Converged,
    MaxRounds,
    TimeBudget,
}

#[derive(Clone, Debug)]
pub struct IdppOutcome {
    pub policy: JointPolicy,
    pub value: f64,
    pub init_policy: JointPolicy,
    pub init_value: f64,
    pub init: Vec<InitSummary>,
    pub history: Vec<IterationRecord>,
    pub status: RunStatus,
    pub rounds: usize,
}

fn round_order(n: usize, order: AgentOrder, round: usize) -> Vec<usize> {
    match order {
        AgentOrder::RoundRobin => (0..n).collect(),
        AgentOrder::Shuffled { seed } => {
            rng::sample_distinct(&mut rng::indexed_stream(seed, "agent-order", round as u64), n, n)
        }
    }
}

fn best_response(
    model: &dyn DetDecPomdp,
    policy: &JointPolicy,
    i: usize,
    table: &MdpValueTable,
    solver: &SolveParams,
) -> Result<SolveOutcome> {
    let br = build_br_detpomdp(model, policy, i)?.with_upper_bounds(table);
    detpomdp::solve(&br, &br.initial_ext_belief(), solver)
}

/// Initialization followed by rounds of best responses.
pub fn run(model: &dyn DetDecPomdp, params: &IdppParams) -> Result<IdppOutcome> {
    let started = Instant::now();
    let init = heuristic_init(model, params)?;
    let init_value = eval::exact_value(model, &init.policy)?;
    log::info!("initial joint value {init_value:.6}");
    iterate(model, params, init, init_value, started)
}

fn iterate(
    model: &dyn DetDecPomdp,
    params: &IdppParams,
    init: InitOutcome,
    init_value: f64,
    started: Instant,
) -> Result<IdppOutcome> {
    let threshold = params.acceptance_threshold();
    let mut policy = init.policy.clone();
    let mut value = init_value;
    let mut history = Vec::new();
    let mut status = RunStatus::MaxRounds;
    let mut rounds = 0;
    let remaining = |now: Instant| params.time_budget_secs.map(|t| t - now.duration_since(started).as_secs_f64());

    'rounds: for round in 1..=params.max_rounds {
        rounds = round;
        let mut accepted_any = false;
        for i in round_order(model.agent_count(), params.order, round) {
            let mut solver = params.solver.clone();
            if let Some(left) = remaining(Instant::now()) {
                if left <= 0.0 {
                    status = RunStatus::TimeBudget;
                    break 'rounds;
                }
                solver.time_budget_secs = Some(solver.time_budget_secs.map_or(left, |t| t.min(left)));
            }
            let t0 = Instant::now();
            let mut record = IterationRecord {
                round,
                agent: i,
                pre_value: value,
                post_value: value,
                accepted: false,
                solver_status: None,
                solver_nodes: 0,
                solver_lower: f64::NAN,
                solver_upper: f64::NAN,
                controller_size: 0,
                seconds: 0.0,
                error: None,
            };
            let attempt = best_response(model, &policy, i, &init.table, &solver).and_then(|out| {
                let candidate = policy.with_agent(i, out.fsc.clone());
                let v = eval::exact_value(model, &candidate)?;
                Ok((out, candidate, v))
            });
            match attempt {
                Ok((out, candidate, v)) => {
                    record.solver_status = Some(out.status);
                    record.solver_nodes = out.nodes;
                    record.solver_lower = out.lower;
                    record.solver_upper = out.upper;
                    record.controller_size = out.fsc.size();
                    record.post_value = v;
                    if v > value + threshold {
                        record.accepted = true;
                        accepted_any = true;
                        policy = candidate;
                        value = v;
                    }
                }
                Err(e) => {
                    log::warn!("best response for agent {i} in round {round} failed: {e}");
                    record.error = Some(e.to_string());
                }
            }
            record.seconds = t0.elapsed().as_secs_f64();
            log::info!(
                "round {round} agent {i}: {:.6} -> {:.6}{}",
                record.pre_value,
                record.post_value,
                if record.accepted { " (accepted)" } else { "" }
            );
            history.push(record);
        }
        if !accepted_any {
            status = RunStatus::Converged;
            break;
        }
    }
    Ok(IdppOutcome {
        policy,
        value,
        init_policy: init.policy,
        init_value,
        init: init.summaries,
        history,
        status,
        rounds,
    })
}

/// Improvement each agent could still certify by best-responding to the
/// others: `best-response lower bound - current joint value`.
pub fn nash_check(model: &dyn DetDecPomdp, policy: &JointPolicy, params: &IdppParams) -> Result<Vec<f64>> {
    let table = centralized_values(model, params)?;
    nash_check_with(model, policy, params, &table)
}

pub fn nash_check_with(
    model: &dyn DetDecPomdp,
    policy: &JointPolicy,
    params: &IdppParams,
    table: &MdpValueTable,
) -> Result<Vec<f64>> {
    let value = eval::exact_value(model, policy)?;
    (0..model.agent_count())
        .map(|i| Ok(best_response(model, policy, i, table, &params.solver)?.lower - value))
        .collect()
}

/// Controller that always repeats `action`, for every agent.
pub fn constant_policy(model: &dyn DetDecPomdp, action: u32) -> JointPolicy {
    JointPolicy::new((0..model.agent_count()).map(|_| Fsc::constant(action)).collect())
}
