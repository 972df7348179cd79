//! Two-UAV bistatic sensing-and-communication simulator.
//!
//! UAV-1 transmits to a ground target and illuminates it; UAV-2 receives the
//! echo. The target is tracked with an EKF on bistatic delay measurements and,
//! every slot, both UAVs are repositioned to minimize the predicted CRB of the
//! target position subject to speed, collision and robust-SNR constraints.

pub mod channel;
pub mod cli;
pub mod ekf;
pub mod error;
pub mod model;
pub mod sensing;
pub mod sim;
pub mod trajopt;

pub use error::{Error, Result};
