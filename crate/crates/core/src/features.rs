//! Model input layouts shared by the preprocessor and the environments.

use ndarray::{concatenate, Array2, ArrayView2, Axis};

/// Indicator columns for actions `1..num_actions` (action 0 is the
/// reference level).
pub fn action_dummies(actions: &[usize], num_actions: usize) -> Array2<f64> {
    let width = num_actions.saturating_sub(1);
    let mut out = Array2::zeros((actions.len(), width));
    for (i, &a) in actions.iter().enumerate() {
        if a >= 1 && a <= width {
            out[[i, a - 1]] = 1.0;
        }
    }
    out
}

/// `[z, x, dummies(a)]`, the input of transition and reward models.
pub fn transition_design(
    zs: &ArrayView2<'_, f64>,
    states: &ArrayView2<'_, f64>,
    actions: &[usize],
    num_actions: usize,
) -> Array2<f64> {
    let dummies = action_dummies(actions, num_actions);
    concatenate(Axis(1), &[zs.view(), states.view(), dummies.view()]).expect("rows agree")
}

/// Recovers actions from the dummy block of a [`transition_design`] matrix.
pub fn decode_actions(design: &ArrayView2<'_, f64>, offset: usize, num_actions: usize) -> Vec<usize> {
    design
        .rows()
        .into_iter()
        .map(|row| {
            (1..num_actions)
                .find(|&a| row[offset + a - 1] > 0.5)
                .unwrap_or(0)
        })
        .collect()
}

/// Repeats one attribute vector as an `n × d_z` matrix.
pub fn broadcast_row(row: &[f64], n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, row.len()), |(_, j)| row[j])
}
