//! Pilot-overhead optimization for short-packet transmission over Rayleigh
//! fading, and design of paired downlink/uplink MIMO training sequences that
//! let a base station estimate the channel and run radar sensing at once.

pub mod comsens;
pub mod error;
pub mod fading;
pub mod format;
pub mod pilot;
pub mod radar;
pub mod rate;
pub mod specfun;

pub use error::{Error, Result};
