//! Proactive mmWave link-blockage prediction from LiDAR and beam-power data.
//!
//! The crate is organized as a pipeline:
//!
//! - [`simulator`] renders seeded street scenes: LiDAR scans, beam powers and
//!   the ground-truth link status.
//! - [`prep`] removes out-of-view returns and static clutter from scans.
//! - [`windowing`] cuts trajectories into labelled observation windows.
//! - [`baselines`] holds the non-learned predictors for blockage occurrence,
//!   time, severity and direction.
//! - [`evaluation`] scores predictions and models hand-off latency.
//! - [`io`] and [`cli`] read and write the on-disk formats.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod prep;
pub mod simulator;
pub mod windowing;

pub use error::{Error, Result};
