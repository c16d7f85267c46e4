//! Type-confounding control for ad hoc teamwork.
//!
//! A teammate *type* aggregates many concrete teammate *instances*. When the
//! historical distribution of instances depends on which candidate policy
//! was played, the aggregate success rate of a policy is confounded by the
//! instance mix (Simpson's paradox) and the learned best response can flip.
//! This crate provides:
//!
//! - [`table`]: contingency tables of (instance, arm) outcomes and their exact
//!   marginals, plus the bundled kidney-stone and magazine-renewal scenarios.
//! - [`rectifier`]: runtime propensity counters, the instance-wise
//!   rectification weight, and the backdoor / confounded closed-form values.
//! - [`learners`]: tabular Q, rectified Q, UCB1, EXP3, optimistic Q and
//!   Thompson sampling behind one interface.
//! - [`bandit_env`]: logged and interactive bandit environments driven by a
//!   contingency table with probability noise.
//! - [`predprey`]: the goal-based predator-prey gridworld.
//! - [`candidates`]: goal-conditioned tabular self-play training, pair
//!   evaluation and success matrices.
//! - [`harness`]: buffers, skews, deployment protocol, multi-seed experiments
//!   and report emission.

pub mod bandit_env;
pub mod candidates;
pub mod harness;
pub mod learners;
pub mod predprey;
pub mod rectifier;
pub mod rng;
pub mod table;

pub use table::{ArmId, ContingencyTable, InstanceId, InteractionRecord, TypeId};
