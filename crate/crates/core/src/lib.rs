//! Monte Carlo simulation of CSI-aided myopic spectrum sensing in cognitive
//! radio ad hoc networks.

pub mod channel;
pub mod config;
pub mod detector;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod mac;
pub mod numerics;
pub mod pu_traffic;
pub mod reward;
pub mod strategy;

pub use config::ScenarioConfig;
pub use engine::{run_episode, run_monte_carlo, Execution, MetricsSeries, Simulation};
pub use error::{Error, Result};
