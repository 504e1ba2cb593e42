//! Planning for multi-agent problems with deterministic transitions and
//! observations, where all uncertainty lies in the initial state.
//!
//! Agents are represented by finite-state controllers. Joint policies are
//! improved one agent at a time by solving that agent's best response to the
//! others as a single-agent deterministic POMDP.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bestresponse;
pub mod detpomdp;
pub mod envs;
pub mod error;
pub mod eval;
pub mod fsc;
pub mod idpp;
pub mod mdp;
pub mod model;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
pub use fsc::{Fsc, FscNode, JointPolicy, NodeId};
pub use model::{
    Action, DetDecPomdp, JointAction, JointObservation, Observation, StateId, SupportBelief, TabularModel,
};
