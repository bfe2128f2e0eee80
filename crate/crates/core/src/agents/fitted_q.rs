//! Iterated per-action regression shared by fitted Q-iteration and fitted
//! Q-evaluation.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func_approx::{self, Regressor, RegressorSpec};
use crate::seeds::derive_seed;

/// Transition tuples `(s, a, r, s')` in feature space.
#[derive(Debug, Clone)]
pub struct Tuples {
    pub features: Array2<f64>,
    pub actions: Vec<usize>,
    pub rewards: Array1<f64>,
    pub next_features: Array2<f64>,
}

/// One regressor per action; actions without a model evaluate to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionValues {
    pub models: Vec<Option<Regressor>>,
}

impl ActionValues {
    pub fn empty(num_actions: usize) -> Self {
        Self {
            models: vec![None; num_actions],
        }
    }

    pub fn num_actions(&self) -> usize {
        self.models.len()
    }

    /// `n × A` action values.
    pub fn predict(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((features.nrows(), self.models.len()));
        for (a, model) in self.models.iter().enumerate() {
            if let Some(m) = model {
                out.column_mut(a).assign(&m.predict(&features.view())?.column(0));
            }
        }
        Ok(out)
    }
}

/// Convergence diagnostics of an iterated fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub iterations: usize,
    /// `max |Q_k - Q_{k-1}|` over training tuples and actions, per iteration.
    pub q_change: Vec<f64>,
    /// Mean squared difference between fitted values and targets, per iteration.
    pub bellman_residual: Vec<f64>,
    pub converged: bool,
    /// Number of regressor fits that hit their epoch cap.
    pub nonconverged_fits: usize,
    pub total_fits: usize,
}

pub struct IterationSettings<'a> {
    pub spec: &'a RegressorSpec,
    pub discount: f64,
    pub max_iter: usize,
    pub tolerance: f64,
    /// Actions that must have training tuples.
    pub required: &'a [bool],
}

/// Runs `Q ← fit(r + γ · V(s'))` where `V(s') = max_a Q(s', a)` when
/// `next_policy` is `None`, else `Σ_a π(a|s') Q(s', a)` with `π` given per
/// tuple. Every transition bootstraps from its successor.
pub fn iterate(tuples: &Tuples, settings: &IterationSettings<'_>, next_policy: Option<&Array2<f64>>) -> Result<(ActionValues, TrainingReport)> {
    let num_actions = settings.required.len();
    if settings.max_iter == 0 {
        return Err(Error::Config("max_iter must be positive".into()));
    }
    if !(0.0..1.0).contains(&settings.discount) {
        return Err(Error::Config(format!("discount {} outside [0, 1)", settings.discount)));
    }
    let strata: Vec<Vec<usize>> = (0..num_actions)
        .map(|a| (0..tuples.actions.len()).filter(|&i| tuples.actions[i] == a).collect())
        .collect();
    for (a, rows) in strata.iter().enumerate() {
        if rows.is_empty() && settings.required[a] {
            return Err(Error::EmptyActionStratum(a));
        }
    }
    let strata_inputs: Vec<Array2<f64>> = strata.iter().map(|rows| tuples.features.select(Axis(0), rows)).collect();

    let mut q = ActionValues::empty(num_actions);
    let mut current = Array2::<f64>::zeros((tuples.features.nrows(), num_actions));
    let mut next = Array2::<f64>::zeros((tuples.next_features.nrows(), num_actions));
    let mut report = TrainingReport {
        iterations: 0,
        q_change: Vec::new(),
        bellman_residual: Vec::new(),
        converged: false,
        nonconverged_fits: 0,
        total_fits: 0,
    };

    for _ in 0..settings.max_iter {
        let next_value: Array1<f64> = match next_policy {
            None => next.map_axis(Axis(1), |row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            Some(pi) => (&next * pi).sum_axis(Axis(1)),
        };
        let targets = &tuples.rewards + &(next_value * settings.discount);
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonConvergence(format!(
                "non-finite Bellman targets at iteration {}",
                report.iterations + 1
            )));
        }

        let fits: Vec<Option<(Regressor, func_approx::FitReport)>> = (0..num_actions)
            .into_par_iter()
            .map(|a| {
                if strata[a].is_empty() {
                    return Ok(None);
                }
                let y = targets.select(Axis(0), &strata[a]).insert_axis(Axis(1));
                match &q.models[a] {
                    Some(existing) => {
                        let mut model = existing.clone();
                        let r = model.refit(settings.spec, &strata_inputs[a].view(), &y.view())?;
                        Ok(Some((model, r)))
                    }
                    None => {
                        let spec = settings.spec.with_seed(derive_seed(settings.spec.seed, &[a as u64]));
                        func_approx::fit(&spec, &strata_inputs[a].view(), &y.view()).map(Some)
                    }
                }
            })
            .collect::<Result<_>>()?;
        for (a, fit) in fits.into_iter().enumerate() {
            if let Some((model, r)) = fit {
                report.total_fits += 1;
                if !r.converged {
                    report.nonconverged_fits += 1;
                }
                q.models[a] = Some(model);
            }
        }

        let updated = q.predict(&tuples.features)?;
        let change = (&updated - &current).iter().map(|d| d.abs()).fold(0.0, f64::max);
        let residual = tuples
            .actions
            .iter()
            .enumerate()
            .map(|(i, &a)| (updated[[i, a]] - targets[i]).powi(2))
            .sum::<f64>()
            / tuples.actions.len().max(1) as f64;
        if !change.is_finite() || !residual.is_finite() {
            return Err(Error::NonConvergence(format!(
                "non-finite action values at iteration {}",
                report.iterations + 1
            )));
        }
        report.iterations += 1;
        report.q_change.push(change);
        report.bellman_residual.push(residual);
        current = updated;
        // targets no longer depend on Q when γ = 0
        if settings.discount == 0.0 || change < settings.tolerance {
            report.converged = true;
            break;
        }
        next = q.predict(&tuples.next_features)?;
    }
    Ok((q, report))
}
