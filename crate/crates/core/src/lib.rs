//! Counterfactually fair offline reinforcement learning.
//!
//! The crate builds counterfactual-state-augmented trajectories from
//! offline data ([`preprocessor`]), learns policies with fitted
//! Q-iteration ([`agents`]), and estimates a policy's value and
//! counterfactual unfairness in synthetic or data-fitted environments
//! ([`environment`], [`evaluation`]). [`pipeline`] wires the stages into a
//! reproducible, config-driven run.

pub mod agents;
pub mod environment;
pub mod error;
pub mod evaluation;
pub mod func_approx;
pub mod trajectory;

pub use error::{Error, Result};
pub use trajectory::{
    read_trajectory_from_csv, train_test_split, write_trajectory_to_csv, ColumnLabels, TrajectoryBatch,
};
pub mod features;
pub mod pipeline;
pub mod preprocessor;
pub mod seeds;
