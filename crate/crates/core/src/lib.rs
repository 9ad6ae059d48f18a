//! Link-level simulation of an active-RIS-assisted CoMP-NOMA multi-cell
//! downlink with a UAV-mounted RIS, and a hybrid-action PPO agent that
//! controls the UAV trajectory, RIS phases and amplification, and the NOMA
//! power split.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod env;
pub mod error;
pub mod harness;
pub mod hppo;
pub mod network;
pub mod ris;
pub mod seed;

pub use error::{Error, Result};
