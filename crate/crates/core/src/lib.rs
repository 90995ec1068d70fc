//! Workbench for semi-self-sensing hybrid reconfigurable intelligent surfaces
//! in terahertz integrated sensing and communication.
//!
//! The crate synthesizes near-field THz channels, evaluates user SINR and
//! the angle-estimation Cramer-Rao bound, projects precoder pairs onto the
//! power and amplitude budgets, and trains a DDPG agent that chooses the
//! base-station precoder and the surface coefficients jointly.

// `!(x > 0.0)` guards are written to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod comms;
pub mod config;
pub mod ddpg;
pub mod env;
pub mod error;
pub mod experiment;
pub mod feasibility;
pub mod nn;
pub mod par;
pub mod plot;
pub mod scenario;
pub mod sensing;
pub mod verify;

pub use config::{ExperimentConfig, Profile};
pub use error::{Error, Result};
pub use experiment::Scheme;
pub use par::Exec;
pub use scenario::{Evaluation, Scenario};
