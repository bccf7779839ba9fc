//! Distributed reservation queue: per-bank head/tail slots plus one queue
//! node per core, linked by SuccessorUpdate and WakeUpRequest messages.

mod controller;
mod qnode;

pub use controller::{ColibriController, Slot};
pub use qnode::{QNode, QNodePhase, Received};
