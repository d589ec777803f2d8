//! Message bus, file formats, reports and command-line driver for the
//! haptic guidance simulator in `hapguide-core`.

#![warn(missing_docs)]

pub mod app;
pub mod bus;
pub mod config;
pub mod link;
pub mod mocap;
pub mod plot;
pub mod tables;
pub mod wire;
