//! Ridge least squares on standardized inputs and centered targets.
//!
//! With `Xs` the standardized design and `Yc` the centered targets, the
//! weights solve `(Xsᵀ Xs + λ I) W = Xsᵀ Yc`. When there are no more rows
//! than columns the equivalent dual form `W = Xsᵀ (Xs Xsᵀ + λ I)⁻¹ Yc` is
//! used instead, which stays well conditioned for tiny samples.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// `p × q` weights acting on standardized inputs.
    pub weights: Array2<f64>,
}

impl LinearModel {
    pub fn fit(xs: &ArrayView2<'_, f64>, yc: &ArrayView2<'_, f64>, penalty: f64) -> Result<Self> {
        let (n, p) = xs.dim();
        let weights = if n <= p {
            let mut gram = xs.dot(&xs.t());
            add_diagonal(&mut gram, penalty);
            let alpha = solve_spd(gram, yc.to_owned())?;
            xs.t().dot(&alpha)
        } else {
            let mut gram = xs.t().dot(xs);
            add_diagonal(&mut gram, penalty);
            solve_spd(gram, xs.t().dot(yc))?
        };
        Ok(Self { weights })
    }

    pub fn forward(&self, xs: &ArrayView2<'_, f64>) -> Array2<f64> {
        xs.dot(&self.weights)
    }
}

fn add_diagonal(m: &mut Array2<f64>, value: f64) {
    for i in 0..m.nrows() {
        m[[i, i]] += value;
    }
}

/// Solves `A X = B` for symmetric positive definite `A` by Cholesky. If a
/// pivot underflows, the diagonal is bumped geometrically and the
/// factorization retried.
pub(crate) fn solve_spd(a: Array2<f64>, b: Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let trace = (0..n).map(|i| a[[i, i]].abs()).sum::<f64>().max(1.0);
    let mut jitter = 0.0;
    for _ in 0..12 {
        let mut shifted = a.clone();
        add_diagonal(&mut shifted, jitter);
        if let Some(l) = cholesky(&shifted) {
            return Ok(cholesky_solve(&l, b));
        }
        jitter = if jitter == 0.0 { trace * 1e-14 } else { jitter * 100.0 };
    }
    Err(Error::NonConvergence("ridge system is not positive definite".into()))
}

fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &Array2<f64>, mut b: Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    for c in 0..b.ncols() {
        // forward substitution L y = b
        for i in 0..n {
            let mut s = b[[i, c]];
            for k in 0..i {
                s -= l[[i, k]] * b[[k, c]];
            }
            b[[i, c]] = s / l[[i, i]];
        }
        // back substitution Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = b[[i, c]];
            for k in (i + 1)..n {
                s -= l[[k, i]] * b[[k, c]];
            }
            b[[i, c]] = s / l[[i, i]];
        }
    }
    b
}
