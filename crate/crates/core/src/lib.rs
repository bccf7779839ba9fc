//! Cycle-level simulation and exhaustive verification of LRwait/SCwait,
//! Mwait and the Colibri distributed reservation queue, with LR/SC and
//! atomic-add baselines.

pub mod adapter;
pub mod bench;
pub mod cli;
pub mod colibri;
pub mod config;
pub mod error;
pub mod message;
pub mod sim;
pub mod trace;
pub mod types;
pub mod verify;
pub mod workloads;

pub use error::SimError;
