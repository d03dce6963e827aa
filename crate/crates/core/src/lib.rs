//! Sequential three-stage agent pipelines (planner -> executor -> critic)
//! with per-item blame attribution, accuracy/cost/latency reporting,
//! Pareto analysis, and a seeded stochastic simulator that makes the
//! aggregate dynamics verifiable without live model access.

pub mod backends;
pub mod blame;
pub mod config;
pub mod domain;
pub mod handoff;
pub mod metrics;
pub mod pareto;
pub mod runner;
pub mod sim;
