//! Reference policies: uniform random, FQI on states with the sensitive
//! attribute ("full"), and FQI on states alone ("unaware").

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::fqi::{FqiAgent, FqiConfig};
use super::policy::{History, Policy, RandomPolicy};
use crate::error::{Error, Result};
use crate::trajectory::TrajectoryBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Random,
    Full,
    Unaware,
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Random => "Random",
            BaselineKind::Full => "Full",
            BaselineKind::Unaware => "Unaware",
        })
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(BaselineKind::Random),
            "full" => Ok(BaselineKind::Full),
            "unaware" => Ok(BaselineKind::Unaware),
            other => Err(Error::Config(format!("unknown baseline '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum BaselinePolicy {
    Random(RandomPolicy),
    Fqi(FqiAgent),
}

impl Policy for BaselinePolicy {
    fn num_actions(&self) -> usize {
        match self {
            BaselinePolicy::Random(p) => p.num_actions(),
            BaselinePolicy::Fqi(p) => p.num_actions(),
        }
    }

    fn action_probs(&self, history: &History<'_>) -> Result<Array2<f64>> {
        match self {
            BaselinePolicy::Random(p) => p.action_probs(history),
            BaselinePolicy::Fqi(p) => p.action_probs(history),
        }
    }
}

/// Builds a baseline. `full`/`unaware` train FQI on the raw `batch` (the
/// attribute flag of `config` is overridden); `random` ignores the batch.
pub fn baseline_policy(
    kind: BaselineKind,
    batch: Option<&TrajectoryBatch>,
    config: &FqiConfig,
    max_iter: usize,
) -> Result<BaselinePolicy> {
    match kind {
        BaselineKind::Random => Ok(BaselinePolicy::Random(RandomPolicy {
            num_actions: config.num_actions,
        })),
        BaselineKind::Full | BaselineKind::Unaware => {
            let batch = batch.ok_or_else(|| Error::Config(format!("baseline '{kind}' needs training data")))?;
            let mut config = config.clone();
            config.include_attribute = kind == BaselineKind::Full;
            let mut agent = FqiAgent::new(config);
            agent.train(batch, max_iter, false)?;
            Ok(BaselinePolicy::Fqi(agent))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func_approx::RegressorSpec;
    use ndarray::{Array2, Array3};

    #[test]
    fn single_action_baselines_are_deterministic() {
        let batch = TrajectoryBatch::with_default_ids(
            Array2::from_shape_fn((6, 1), |(i, _)| (i % 2) as f64),
            Array3::from_shape_fn((6, 3, 1), |(i, t, _)| (i + t) as f64),
            Array2::zeros((6, 2)),
            Array2::from_shape_fn((6, 2), |(i, _)| i as f64),
        )
        .unwrap();
        let config = FqiConfig::new(1, RegressorSpec::linear());
        let h = History::new(batch.zs.view(), batch.states.slice(ndarray::s![.., ..1, ..]), batch.actions.slice(ndarray::s![.., ..0])).unwrap();
        for kind in [BaselineKind::Random, BaselineKind::Full, BaselineKind::Unaware] {
            let p = baseline_policy(kind, Some(&batch), &config, 10).unwrap();
            assert_eq!(p.action_probs(&h).unwrap(), Array2::<f64>::ones((6, 1)));
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!("Unaware".parse::<BaselineKind>().unwrap(), BaselineKind::Unaware);
        assert!("ours".parse::<BaselineKind>().is_err());
    }
}
