use std::fmt;
use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ_a π(a) = 1`.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

/// Observed histories of `N` individuals up to time `t`.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    /// `N × d_z`.
    pub zs: ArrayView2<'a, f64>,
    /// `N × (t+1) × d_x`, raw observed states.
    pub states: ArrayView3<'a, f64>,
    /// `N × t`.
    pub actions: ArrayView2<'a, usize>,
}

impl<'a> History<'a> {
    pub fn new(zs: ArrayView2<'a, f64>, states: ArrayView3<'a, f64>, actions: ArrayView2<'a, usize>) -> Result<Self> {
        let n = zs.nrows();
        if states.dim().0 != n || actions.nrows() != n || states.dim().1 != actions.ncols() + 1 {
            return Err(Error::Shape(format!(
                "history shapes disagree: zs {:?}, states {:?}, actions {:?}",
                zs.dim(),
                states.dim(),
                actions.dim()
            )));
        }
        Ok(Self { zs, states, actions })
    }

    /// Current time index `t`.
    pub fn time(&self) -> usize {
        self.actions.ncols()
    }

    pub fn len(&self) -> usize {
        self.zs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `x_t` for every individual.
    pub fn current_states(&self) -> ArrayView2<'a, f64> {
        self.states.slice_move(s![.., self.time(), ..])
    }

    /// The same history cut at an earlier time.
    pub fn prefix(&self, t: usize) -> History<'a> {
        History {
            zs: self.zs,
            states: self.states.slice_move(s![.., ..=t, ..]),
            actions: self.actions.slice_move(s![.., ..t]),
        }
    }
}

/// A decision rule mapping histories to action distributions.
pub trait Policy: Send + Sync {
    fn num_actions(&self) -> usize;

    /// `N × num_actions` action probabilities at the history's current time.
    fn action_probs(&self, history: &History<'_>) -> Result<Array2<f64>>;

    /// Internal state representation the policy acts on, if it differs from
    /// the raw observed state (e.g. preprocessed counterfactual states).
    fn state_features(&self, _history: &History<'_>) -> Result<Option<Array2<f64>>> {
        Ok(None)
    }

    /// Whether the policy maps raw histories through a preprocessor itself.
    fn uses_preprocessor(&self) -> bool {
        false
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn action_probs(&self, history: &History<'_>) -> Result<Array2<f64>> {
        (**self).action_probs(history)
    }
    fn state_features(&self, history: &History<'_>) -> Result<Option<Array2<f64>>> {
        (**self).state_features(history)
    }
    fn uses_preprocessor(&self) -> bool {
        (**self).uses_preprocessor()
    }
}

impl<P: Policy + ?Sized> Policy for Arc<P> {
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn action_probs(&self, history: &History<'_>) -> Result<Array2<f64>> {
        (**self).action_probs(history)
    }
    fn state_features(&self, history: &History<'_>) -> Result<Option<Array2<f64>>> {
        (**self).state_features(history)
    }
    fn uses_preprocessor(&self) -> bool {
        (**self).uses_preprocessor()
    }
}

/// Checks non-negativity and unit sum of every row.
pub fn check_distribution(probs: &ArrayView2<'_, f64>) -> Result<()> {
    for (i, row) in probs.rows().into_iter().enumerate() {
        let sum: f64 = row.sum();
        if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(Error::value(
                format!("policy output row {i}"),
                format!("{:?} is not a probability distribution", row.to_vec()),
            ));
        }
    }
    Ok(())
}

/// Inverse-CDF draw: the first action whose cumulative probability exceeds `u`.
pub fn sample_action(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (a, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    // rounding left the total just below u; fall back to the last supported action
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Greedy one-hot rows with ties broken toward the smaller action.
pub fn greedy(q_values: &ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros(q_values.raw_dim());
    for (i, row) in q_values.rows().into_iter().enumerate() {
        let mut best = 0;
        for a in 1..row.len() {
            if row[a] > row[best] {
                best = a;
            }
        }
        out[[i, best]] = 1.0;
    }
    out
}

/// Uniform over all actions at every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomPolicy {
    pub num_actions: usize,
}

impl Policy for RandomPolicy {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn action_probs(&self, history: &History<'_>) -> Result<Array2<f64>> {
        Ok(Array2::from_elem((history.len(), self.num_actions), 1.0 / self.num_actions as f64))
    }
}

/// Always the same action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstantPolicy {
    pub num_actions: usize,
    pub action: usize,
}

impl Policy for ConstantPolicy {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn action_probs(&self, history: &History<'_>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((history.len(), self.num_actions));
        out.column_mut(self.action).fill(1.0);
        Ok(out)
    }
}

/// Per-individual decision function `(z, x_t, t) ↦ π(· | ·)`.
pub type DecisionFn = Arc<dyn Fn(&[f64], &[f64], usize) -> Vec<f64> + Send + Sync>;

/// Adapter wrapping any external decision function as a [`Policy`]. The
/// returned distributions are validated on every call.
#[derive(Clone)]
pub struct FnPolicy {
    num_actions: usize,
    decide: DecisionFn,
}

impl fmt::Debug for FnPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnPolicy").field("num_actions", &self.num_actions).finish_non_exhaustive()
    }
}

impl FnPolicy {
    pub fn new(num_actions: usize, decide: impl Fn(&[f64], &[f64], usize) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self {
            num_actions,
            decide: Arc::new(decide),
        }
    }
}

impl Policy for FnPolicy {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn action_probs(&self, history: &History<'_>) -> Result<Array2<f64>> {
        let t = history.time();
        let x = history.current_states();
        let mut out = Array2::zeros((history.len(), self.num_actions));
        for i in 0..history.len() {
            let z = history.zs.row(i).to_vec();
            let probs = (self.decide)(&z, &x.row(i).to_vec(), t);
            if probs.len() != self.num_actions {
                return Err(Error::Shape(format!(
                    "decision function returned {} probabilities for {} actions",
                    probs.len(),
                    self.num_actions
                )));
            }
            out.row_mut(i).assign(&ndarray::Array1::from(probs));
        }
        check_distribution(&out.view())?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};

    #[test]
    fn inverse_cdf() {
        assert_eq!(sample_action(&[0.5, 0.5], 0.49), 0);
        assert_eq!(sample_action(&[0.5, 0.5], 0.5), 1);
        assert_eq!(sample_action(&[0.0, 1.0], 0.0), 1);
        assert_eq!(sample_action(&[1.0], 0.999), 0);
    }

    #[test]
    fn ties_go_to_smaller_action() {
        let g = greedy(&array![[0.0, 0.0], [1.0, 2.0], [3.0, 3.0]].view());
        assert_eq!(g, array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn fn_policy_validates() {
        let zs = array![[0.0]];
        let states = Array3::zeros((1, 1, 1));
        let actions = Array2::<usize>::zeros((1, 0));
        let h = History::new(zs.view(), states.view(), actions.view()).unwrap();
        let bad = FnPolicy::new(2, |_, _, _| vec![0.7, 0.7]);
        assert!(bad.action_probs(&h).is_err());
        let good = FnPolicy::new(2, |z, _, _| if z[0] > 0.5 { vec![0.0, 1.0] } else { vec![1.0, 0.0] });
        assert_eq!(good.action_probs(&h).unwrap(), array![[1.0, 0.0]]);
        assert_eq!(RandomPolicy { num_actions: 2 }.action_probs(&h).unwrap(), array![[0.5, 0.5]]);
        assert_eq!(RandomPolicy { num_actions: 1 }.action_probs(&h).unwrap(), array![[1.0]]);
    }
}
