//! Fully connected ReLU network trained by full-batch gradient descent on
//! mean squared error.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{FitReport, Optimizer, RegressorSpec, CONVERGENCE_WINDOW};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `fan_in × fan_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

struct Gradient {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

impl Mlp {
    /// He-initialized hidden layers, variance `1 / fan_in` on the output layer.
    pub fn new(input: usize, hidden: &[usize], output: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let gain = if k == last { 1.0 } else { 2.0 };
                let normal = Normal::new(0.0, (gain / w[0] as f64).sqrt()).expect("finite std");
                Dense {
                    weights: Array2::from_shape_fn((w[0], w[1]), |_| normal.sample(&mut rng)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map(|l| l.weights.ncols()).unwrap_or(0)
    }

    pub fn forward(&self, x: &ArrayView2<'_, f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.weights) + &layer.bias;
            if k != last {
                h.mapv_inplace(relu);
            }
        }
        h
    }

    /// Activations of every layer, input first.
    fn forward_cached(&self, x: &ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut h = acts[k].dot(&layer.weights) + &layer.bias;
            if k != last {
                h.mapv_inplace(relu);
            }
            acts.push(h);
        }
        acts
    }

    /// Mean squared error over all `n × q` entries and its gradient.
    fn backward(&self, acts: &[Array2<f64>], y: &ArrayView2<'_, f64>) -> (f64, Array2<f64>, Gradient) {
        let out = acts.last().expect("output activation");
        let resid = out - y;
        let count = resid.len() as f64;
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / count;
        let mut delta = resid.mapv(|r| 2.0 * r / count);
        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            weights.push(acts[k].t().dot(&delta));
            biases.push(delta.sum_axis(Axis(0)));
            if k > 0 {
                let mut back = delta.dot(&self.layers[k].weights.t());
                // ReLU derivative from post-activation values
                Zip::from(&mut back).and(&acts[k]).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        weights.reverse();
        biases.reverse();
        (loss, resid, Gradient { weights, biases })
    }

    /// Loss and flat gradient in [`Mlp::params`] order.
    pub fn loss_and_gradient(&self, x: &ArrayView2<'_, f64>, y: &ArrayView2<'_, f64>) -> (f64, Vec<f64>) {
        let acts = self.forward_cached(x);
        let (loss, _, grad) = self.backward(&acts, y);
        let mut flat = Vec::with_capacity(self.num_params());
        for (w, b) in grad.weights.iter().zip(&grad.biases) {
            flat.extend(w.iter());
            flat.extend(b.iter());
        }
        (loss, flat)
    }

    pub fn loss(&self, x: &ArrayView2<'_, f64>, y: &ArrayView2<'_, f64>) -> f64 {
        let out = self.forward(x);
        (&out - y).iter().map(|r| r * r).sum::<f64>() / out.len() as f64
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Row-major weights then bias, layer by layer.
    pub fn params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            flat.extend(l.weights.iter());
            flat.extend(l.bias.iter());
        }
        flat
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "parameter vector length");
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = it.next().unwrap_or_default();
            }
            for b in l.bias.iter_mut() {
                *b = it.next().unwrap_or_default();
            }
        }
    }

    /// Rescales the output layer so that the network composed with the old
    /// de-standardization equals the network composed with the new one.
    pub(crate) fn rebase_output(&mut self, old_mean: f64, old_scale: f64, new_mean: f64, new_scale: f64, col: usize) {
        let layer = self.layers.last_mut().expect("output layer");
        let ratio = old_scale / new_scale;
        for w in layer.weights.column_mut(col).iter_mut() {
            *w *= ratio;
        }
        layer.bias[col] = (layer.bias[col] * old_scale + old_mean - new_mean) / new_scale;
    }

    /// Trains in place on standardized data. The loss curve is reported in
    /// target units via `unit_scale` (the per-output target scale).
    pub(crate) fn train(
        &mut self,
        x: &ArrayView2<'_, f64>,
        y: &ArrayView2<'_, f64>,
        spec: &RegressorSpec,
        unit_scale: &Array1<f64>,
    ) -> Result<FitReport> {
        let mut adam = match spec.optimizer {
            Optimizer::Adam => Some(AdamState::new(self)),
            Optimizer::Sgd => None,
        };
        let q = y.ncols() as f64;
        let mut curve = Vec::with_capacity(spec.max_epochs);
        let mut converged = false;
        for _ in 0..spec.max_epochs {
            let acts = self.forward_cached(x);
            let (_, resid, grad) = self.backward(&acts, y);
            let n = resid.nrows().max(1) as f64;
            let loss = resid
                .axis_iter(Axis(1))
                .zip(unit_scale.iter())
                .map(|(col, s)| s * s * col.iter().map(|r| r * r).sum::<f64>() / n)
                .sum::<f64>()
                / q;
            if !loss.is_finite() {
                return Err(Error::NonConvergence(format!(
                    "network loss became non-finite after {} epochs",
                    curve.len()
                )));
            }
            curve.push(loss);
            if window_converged(&curve, spec.tolerance) {
                converged = true;
                break;
            }
            match adam.as_mut() {
                Some(state) => state.step(self, &grad, spec.learning_rate),
                None => {
                    for (layer, (gw, gb)) in self.layers.iter_mut().zip(grad.weights.iter().zip(&grad.biases)) {
                        layer.weights.scaled_add(-spec.learning_rate, gw);
                        layer.bias.scaled_add(-spec.learning_rate, gb);
                    }
                }
            }
        }
        Ok(FitReport {
            final_loss: curve.last().copied().unwrap_or(0.0),
            epochs_run: curve.len(),
            converged,
            loss_curve: curve,
        })
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// Relative loss change over the trailing window, `|L[e-w] - L[e]| / L[e-w]`.
pub(crate) fn window_converged(curve: &[f64], tolerance: f64) -> bool {
    if curve.len() <= CONVERGENCE_WINDOW {
        return false;
    }
    let new = curve[curve.len() - 1];
    let old = curve[curve.len() - 1 - CONVERGENCE_WINDOW];
    if old == 0.0 {
        return new == 0.0;
    }
    ((old - new) / old).abs() <= tolerance
}

struct AdamState {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl AdamState {
    fn new(net: &Mlp) -> Self {
        Self {
            m_w: net.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            v_w: net.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            m_b: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
            v_b: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Mlp, grad: &Gradient, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for k in 0..net.layers.len() {
            Zip::from(&mut net.layers[k].weights)
                .and(&mut self.m_w[k])
                .and(&mut self.v_w[k])
                .and(&grad.weights[k])
                .for_each(|p, m, v, &g| adam_update(p, m, v, g, lr, c1, c2));
            Zip::from(&mut net.layers[k].bias)
                .and(&mut self.m_b[k])
                .and(&mut self.v_b[k])
                .and(&grad.biases[k])
                .for_each(|p, m, v, &g| adam_update(p, m, v, g, lr, c1, c2));
        }
    }
}

#[inline]
fn adam_update(p: &mut f64, m: &mut f64, v: &mut f64, g: f64, lr: f64, c1: f64, c2: f64) {
    *m = BETA1 * *m + (1.0 - BETA1) * g;
    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Mlp::new(3, &[4], 2, 5);
        let x = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((5, 2), |_| rng.random_range(-1.0..1.0));
        let (_, analytic) = net.loss_and_gradient(&x.view(), &y.view());
        let base = net.params();
        let h = 1e-6;
        for (k, &g) in analytic.iter().enumerate() {
            let mut probe = net.clone();
            let mut p = base.clone();
            p[k] += h;
            probe.set_params(&p);
            let up = probe.loss(&x.view(), &y.view());
            p[k] -= 2.0 * h;
            probe.set_params(&p);
            let down = probe.loss(&x.view(), &y.view());
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-8);
            assert!(rel < 1e-4, "param {k}: analytic {g}, numeric {fd}");
        }
    }

    #[test]
    fn rebase_preserves_function() {
        let mut net = Mlp::new(2, &[3], 1, 1);
        let x = ndarray::array![[0.3, -0.2], [1.0, 0.5]];
        let before = net.forward(&x.view()).mapv(|v| v * 2.0 + 1.0);
        net.rebase_output(1.0, 2.0, -3.0, 0.5, 0);
        let after = net.forward(&x.view()).mapv(|v| v * 0.5 - 3.0);
        for (a, b) in before.iter().zip(after.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn window_rule() {
        assert!(!window_converged(&[1.0; 10], 1e-5));
        assert!(window_converged(&[1.0; 11], 1e-5));
        let mut c = vec![2.0; 10];
        c.push(1.0);
        assert!(!window_converged(&c, 1e-5));
    }
}
