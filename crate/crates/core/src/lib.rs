//! Haptic postural guidance: device feedback laws, a simulated human subject,
//! closed-loop trial execution, trial metrics and paired nonparametric statistics.
//!
//! Everything in this crate is pure computation over values. It builds without
//! `std` (an allocator is required); IO, configuration files, the message bus
//! and the command-line driver live in the `hapguide` crate.
#![no_std]
#![warn(missing_docs)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod clock;
pub mod devices;
pub mod engine;
mod error;
pub mod joint;
pub mod metrics;
pub mod stats;
pub mod subject;

pub use clock::{RngSeed, SimClock};
pub use error::Error;
pub use joint::{clamp_to_joint_range, signed_error, AngleDeg, JointId, JointMap, SignedError, TargetPose};
