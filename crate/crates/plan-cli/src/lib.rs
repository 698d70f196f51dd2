//! Scenario replay harness around the planner library: scenario files,
//! the deterministic simulation loop, and output writers.

pub mod emit;
pub mod scenario;
pub mod sim;
