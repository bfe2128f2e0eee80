use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::agents::fitted_q::{iterate, IterationSettings, TrainingReport};
use crate::agents::fqi::build_tuples;
use crate::agents::policy::{check_distribution, History, Policy};
use crate::environment::{sample_trajectories, tile_rows, Environment};
use crate::error::{Error, Result};
use crate::func_approx::RegressorSpec;
use crate::trajectory::TrajectoryBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueMethod {
    Fqe,
    ModelMc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueReport {
    pub value: f64,
    pub method: ValueMethod,
    /// Initial-state values (FQE) or mean discounted returns (Monte Carlo)
    /// per individual.
    pub per_individual: Vec<f64>,
    /// Monte-Carlo standard error of `value`.
    pub standard_error: Option<f64>,
    /// FQE iteration diagnostics.
    pub training: Option<TrainingReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FqeSettings {
    pub reg_spec: RegressorSpec,
    pub discount: f64,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl FqeSettings {
    pub fn new(reg_spec: RegressorSpec) -> Self {
        Self {
            reg_spec,
            discount: crate::agents::fqi::DEFAULT_DISCOUNT,
            max_iter: 200,
            tolerance: crate::agents::fqi::DEFAULT_FQI_TOLERANCE,
        }
    }
}

/// Fitted Q-evaluation of `policy` on observed trajectories. Q-models see
/// `[z, x_t]` plus whatever internal state the policy exposes (the
/// preprocessed state for policies with a preprocessor), and targets use
/// the observed rewards.
///
/// Also known as `evaluate_reward_through_fqe`.
#[doc(alias = "evaluate_reward_through_fqe")]
pub fn evaluate_value_through_fqe(batch: &TrajectoryBatch, policy: &dyn Policy, settings: &FqeSettings) -> Result<ValueReport> {
    let na = policy.num_actions();
    batch.check_actions(na)?;
    let horizon = batch.horizon();
    let full = History::new(batch.zs.view(), batch.states.view(), batch.actions.view())?;
    let mut features = Vec::with_capacity(horizon + 1);
    let mut probs = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let h = full.prefix(t);
        let p = policy.action_probs(&h)?;
        if p.dim() != (batch.len(), na) {
            return Err(Error::Shape(format!("policy returned {:?} probabilities", p.dim())));
        }
        check_distribution(&p.view())?;
        let mut parts = vec![batch.zs.clone(), h.current_states().to_owned()];
        if let Some(extra) = policy.state_features(&h)? {
            parts.push(extra);
        }
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        features.push(concatenate(Axis(1), &views).expect("rows agree"));
        probs.push(p);
    }
    let tuples = build_tuples(&features, &batch.actions.view(), &batch.rewards.view());
    let next_views: Vec<_> = probs[1..].iter().map(|p| p.view()).collect();
    let next_policy = concatenate(Axis(0), &next_views).expect("equal widths");
    let required: Vec<bool> = (0..na).map(|a| probs.iter().any(|p| p.column(a).iter().any(|&v| v > 0.0))).collect();
    let iteration = IterationSettings {
        spec: &settings.reg_spec,
        discount: settings.discount,
        max_iter: settings.max_iter,
        tolerance: settings.tolerance,
        required: &required,
    };
    let (q, training) = iterate(&tuples, &iteration, Some(&next_policy))?;
    let q0 = q.predict(&features[0])?;
    let per_individual: Vec<f64> = (&q0 * &probs[0]).sum_axis(Axis(1)).to_vec();
    let value = per_individual.iter().sum::<f64>() / per_individual.len() as f64;
    Ok(ValueReport {
        value,
        method: ValueMethod::Fqe,
        per_individual,
        standard_error: None,
        training: Some(training),
    })
}

/// Monte-Carlo estimate of the discounted return over `horizon` steps,
/// averaged over `num_reps` rollouts per row of `zs`.
pub fn evaluate_value_through_model(
    env: &dyn Environment,
    zs: &Array2<f64>,
    policy: &dyn Policy,
    horizon: usize,
    discount: f64,
    num_reps: usize,
    seed: u64,
) -> Result<ValueReport> {
    if num_reps == 0 || zs.nrows() == 0 {
        return Err(Error::Config("need at least one individual and one replicate".into()));
    }
    let n = zs.nrows();
    let tiled = tile_rows(&zs.view(), num_reps);
    let batch = sample_trajectories(env, &tiled.view(), policy, horizon, seed)?;
    let weights: Vec<f64> = (0..horizon).map(|t| discount.powi(t as i32)).collect();
    let returns: Vec<f64> = batch
        .rewards
        .rows()
        .into_iter()
        .map(|r| r.iter().zip(&weights).map(|(a, w)| a * w).sum())
        .collect();
    let total = returns.len() as f64;
    let value = returns.iter().sum::<f64>() / total;
    let var = if returns.len() > 1 {
        returns.iter().map(|g| (g - value).powi(2)).sum::<f64>() / (total - 1.0)
    } else {
        0.0
    };
    let per_individual = (0..n)
        .map(|i| (0..num_reps).map(|k| returns[k * n + i]).sum::<f64>() / num_reps as f64)
        .collect();
    Ok(ValueReport {
        value,
        method: ValueMethod::ModelMc,
        per_individual,
        standard_error: Some((var / total).sqrt()),
        training: None,
    })
}
