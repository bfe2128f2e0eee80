use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::agents::policy::Policy;
use crate::environment::{sample_counterfactual_arms, tile_rows, Environment};
use crate::error::{Error, Result};
use crate::features::broadcast_row;
use crate::trajectory::TrajectoryBatch;

pub const DEFAULT_FAIRNESS_REPS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CFMetricReport {
    /// Mean of `per_time`.
    pub cf_metric: f64,
    /// Mean pairwise action disagreement at each decision time.
    pub per_time: Vec<f64>,
    pub num_individuals: usize,
    pub num_arms: usize,
}

/// Fraction of unordered arm pairs that chose different actions.
pub fn pairwise_disagreement(actions: &[usize]) -> f64 {
    let k = actions.len();
    if k < 2 {
        return 0.0;
    }
    let mut differ = 0usize;
    for i in 0..k {
        for j in i + 1..k {
            differ += usize::from(actions[i] != actions[j]);
        }
    }
    differ as f64 / (k * (k - 1) / 2) as f64
}

/// Counterfactual unfairness of `policy` over the individuals of `batch`.
///
/// Each individual gets one arm per value in `z_space`: its own value starts
/// from the observed `x_0`, the others from `m(z') + x_0 − m(z)` with `m`
/// the environment's initial-state mean. Arms then run `horizon =
/// batch.horizon()` steps under the policy's own actions with shared noise,
/// `num_reps` times.
pub fn evaluate_fairness_through_model(
    env: &dyn Environment,
    batch: &TrajectoryBatch,
    z_space: &[Vec<f64>],
    policy: &dyn Policy,
    num_reps: usize,
    seed: u64,
) -> Result<CFMetricReport> {
    if num_reps == 0 {
        return Err(Error::Config("num_reps must be positive".into()));
    }
    if z_space.is_empty() {
        return Err(Error::Config("z_space is empty".into()));
    }
    let n = batch.len();
    let own: Vec<usize> = (0..n)
        .map(|i| {
            let z = batch.zs.row(i);
            z_space
                .iter()
                .position(|c| c.len() == z.len() && c.iter().zip(z.iter()).all(|(a, b)| a == b))
                .ok_or_else(|| Error::Domain(format!("attribute {:?} of individual {i} is not in z_space", z.to_vec())))
        })
        .collect::<Result<_>>()?;
    let x0 = batch.states.slice(s![.., 0, ..]);
    let resid = &x0 - &env.initial_means(&batch.zs.view())?;
    let mut z_arms = Vec::with_capacity(z_space.len());
    let mut x0_arms = Vec::with_capacity(z_space.len());
    for (j, zj) in z_space.iter().enumerate() {
        let zs = broadcast_row(zj, n);
        let mut start: Array2<f64> = env.initial_means(&zs.view())? + &resid;
        for (i, &o) in own.iter().enumerate() {
            if o == j {
                start.row_mut(i).assign(&x0.row(i));
            }
        }
        z_arms.push(tile_rows(&zs.view(), num_reps));
        x0_arms.push(tile_rows(&start.view(), num_reps));
    }
    let horizon = batch.horizon();
    let arms = sample_counterfactual_arms(env, &z_arms, &x0_arms, policy, horizon, seed)?;
    let rows = n * num_reps;
    let per_time: Vec<f64> = (0..horizon)
        .map(|t| {
            (0..rows)
                .map(|r| {
                    let acts: Vec<usize> = arms.arms.iter().map(|a| a.actions[[r, t]]).collect();
                    pairwise_disagreement(&acts)
                })
                .sum::<f64>()
                / rows as f64
        })
        .collect();
    let cf_metric = if horizon == 0 { 0.0 } else { per_time.iter().sum::<f64>() / horizon as f64 };
    Ok(CFMetricReport {
        cf_metric,
        per_time,
        num_individuals: n,
        num_arms: z_space.len(),
    })
}
