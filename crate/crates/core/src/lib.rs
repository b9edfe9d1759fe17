//! Control-skill distillation, parameter-space skill memory, and
//! task-graph execution.
//!
//! The pipeline has three stages:
//!
//! 1. **Distill**: behavioral cloning of a classical controller (PD or
//!    LQR) into a small fixed-architecture policy network ([`distill`]).
//! 2. **Memorize**: an autoencoder over the flattened policy parameter
//!    vectors; the encoder produces a low-dimensional skill vector per
//!    skill, the decoder recalls parameters from any skill vector
//!    ([`memory`], persisted by [`store`]).
//! 3. **Execute**: a DAG of subtask nodes, each holding a skill
//!    reference; traversal decodes each node's parameters into the policy
//!    and runs it closed-loop ([`graph`]).
//!
//! The numeric kernels ([`net`], [`control`], [`mod@env`], [`linalg`]) are
//! generic over the scalar type via [`scalar::Real`]; the shipped pipeline
//! and the store format are pinned to f64 (see the crate-root aliases).

// Validators use negated comparisons (`!(x > 0)`) so NaN inputs fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod config;
pub mod control;
pub mod distill;
pub mod env;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod memory;
pub mod net;
pub mod rng;
pub mod scalar;
pub mod store;

pub use error::{Error, Result};

/// Scalar type used by the shipped pipeline and the store format.
pub type Scalar = f64;

pub type PolicySpec = net::PolicySpec<Scalar>;
pub type ParamVector = net::ParamVector<Scalar>;
pub type GradVector = net::GradVector<Scalar>;
pub type Batch = net::Batch<Scalar>;
pub type AdamHyper = net::AdamHyper<Scalar>;

pub type EnvParams = env::EnvParams<Scalar>;
pub type EnvState = env::EnvState<Scalar>;
pub type EnvAction = env::EnvAction<Scalar>;
pub type TerminationSpec = env::TerminationSpec<Scalar>;
pub type Trajectory = env::Trajectory<Scalar>;

pub type PidGains = control::PidGains<Scalar>;
pub type PidState = control::PidState<Scalar>;
pub type LqrProblem = control::LqrProblem<Scalar>;
pub type ControllerSpec = control::ControllerSpec<Scalar>;

pub type Matrix = linalg::Matrix<Scalar>;
