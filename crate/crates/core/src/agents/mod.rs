//! Policies: fitted Q-iteration, baseline rules, and adapters for external
//! decision functions.

pub mod baselines;
pub mod fitted_q;
pub mod fqi;
pub mod policy;

pub use baselines::{baseline_policy, BaselineKind, BaselinePolicy};
pub use fitted_q::{ActionValues, TrainingReport};
pub use fqi::{AgentBlob, FqiAgent, FqiConfig};
pub use policy::{
    check_distribution, greedy, sample_action, ConstantPolicy, FnPolicy, History, Policy, RandomPolicy,
};
