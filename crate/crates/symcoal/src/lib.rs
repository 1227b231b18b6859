//! Simulation and exact computation for exchangeable coalescents arising
//! from Wright-Fisher populations with demographic bottlenecks.
//!
//! The crate is organized around seven subsystems:
//!
//! - [`measures`]: characterizing measures of symmetric coalescents and
//!   the auxiliary bottleneck-size/duration laws;
//! - [`rates`]: exact collision rates, occupancy distributions,
//!   block-counting generators and total-rate asymptotics;
//! - [`coalescent`]: backward-in-time simulators for the symmetric,
//!   drastic-bottleneck and subordinated-Kingman coalescents;
//! - [`forward`]: generation-by-generation Wright-Fisher simulators for
//!   the bottleneck demographies, plus bottleneck collapse and ancestry
//!   extraction;
//! - [`sde`]: the limiting jump diffusions and their jump kernels;
//! - [`duality`]: exact block-counting moments via uniformization and
//!   the Monte-Carlo moment-duality harness;
//! - [`metric`]: cadlag step paths, the Skorokhod J1 distance, and a
//!   certified upper bound for the exclusion-set path metric.

pub mod coalescent;
pub mod duality;
pub mod error;
pub mod forward;
pub mod measures;
pub mod metric;
pub mod numeric;
pub mod rates;
pub mod rng;
pub mod sde;

pub use error::{Error, Result};
