//! Shared-control input middleware: several players' controller input is
//! interpreted into per-action entries, merged per tick by configurable
//! policies and replayed onto a single virtual controller that drives a
//! deterministic car-ball arena.

pub mod agent;
pub mod arbiter;
pub mod arena;
pub mod batch;
pub mod controller;
pub mod input;
pub mod interpreter;
pub mod protocol;
pub mod server;
pub mod session;
pub mod stats;
