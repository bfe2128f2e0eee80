use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::Environment;
use crate::error::{Error, Result};
use crate::features::decode_actions;
use crate::preprocessor::{FittedPreprocessor, MeanFn, PreprocessorConfig};

/// `(z, noise) ↦ x_0`.
pub type InitialFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// `(z, x, a, noise) ↦ x'`.
pub type TransitionFn = Arc<dyn Fn(&[f64], &[f64], usize, &[f64]) -> Vec<f64> + Send + Sync>;
/// `(z, x, a, noise) ↦ r`.
pub type RewardFn = Arc<dyn Fn(&[f64], &[f64], usize, f64) -> f64 + Send + Sync>;

/// Zero-mean noise distributions, sampled by inverse CDF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum NoiseFamily {
    Zero,
    Gaussian { sd: f64 },
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
}

impl NoiseFamily {
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            NoiseFamily::Zero => 0.0,
            NoiseFamily::Gaussian { sd } => {
                let std = Normal::standard();
                sd * std.inverse_cdf(u)
            }
            NoiseFamily::Uniform { half_width } => half_width * (2.0 * u - 1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            NoiseFamily::Gaussian { sd: w } | NoiseFamily::Uniform { half_width: w } if !(w >= 0.0 && w.is_finite()) => {
                Err(Error::Config(format!("noise scale {w} must be finite and non-negative")))
            }
            _ => Ok(()),
        }
    }
}

/// An environment with closed-form dynamics. The closures receive the
/// noise values (already transformed by their family) explicitly, so they
/// are deterministic functions of their arguments.
#[derive(Clone)]
pub struct SyntheticEnvironment {
    state_dim: usize,
    attr_dim: usize,
    num_actions: usize,
    initial: InitialFn,
    transition: TransitionFn,
    reward: RewardFn,
    state_noise: NoiseFamily,
    reward_noise: NoiseFamily,
}

impl fmt::Debug for SyntheticEnvironment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SyntheticEnvironment")
            .field("state_dim", &self.state_dim)
            .field("attr_dim", &self.attr_dim)
            .field("num_actions", &self.num_actions)
            .field("state_noise", &self.state_noise)
            .field("reward_noise", &self.reward_noise)
            .finish_non_exhaustive()
    }
}

impl SyntheticEnvironment {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state_dim: usize,
        attr_dim: usize,
        num_actions: usize,
        initial: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        transition: impl Fn(&[f64], &[f64], usize, &[f64]) -> Vec<f64> + Send + Sync + 'static,
        reward: impl Fn(&[f64], &[f64], usize, f64) -> f64 + Send + Sync + 'static,
        state_noise: NoiseFamily,
        reward_noise: NoiseFamily,
    ) -> Result<Self> {
        if state_dim == 0 || attr_dim == 0 || num_actions == 0 {
            return Err(Error::Config("state_dim, attr_dim and num_actions must be positive".into()));
        }
        state_noise.validate()?;
        reward_noise.validate()?;
        Ok(Self {
            state_dim,
            attr_dim,
            num_actions,
            initial: Arc::new(initial),
            transition: Arc::new(transition),
            reward: Arc::new(reward),
            state_noise,
            reward_noise,
        })
    }

    fn check_rows(&self, zs: &ArrayView2<'_, f64>, states: Option<&ArrayView2<'_, f64>>, uniforms: &ArrayView2<'_, f64>) -> Result<()> {
        if zs.ncols() != self.attr_dim
            || states.is_some_and(|s| s.dim() != (zs.nrows(), self.state_dim))
            || uniforms.dim() != (zs.nrows(), self.noise_dim())
        {
            return Err(Error::Shape("environment inputs have the wrong shape".into()));
        }
        Ok(())
    }

    fn checked_state(&self, x: Vec<f64>) -> Result<Vec<f64>> {
        if x.len() != self.state_dim {
            return Err(Error::Shape(format!("state function returned {} entries, expected {}", x.len(), self.state_dim)));
        }
        Ok(x)
    }

    /// A preprocessor whose mean models are the environment's own
    /// functions evaluated at zero noise. These are exact conditional means
    /// whenever noise enters additively.
    pub fn known_preprocessor(&self, config: PreprocessorConfig, horizon: usize) -> Result<FittedPreprocessor> {
        if config.num_actions != self.num_actions || config.attr_dim() != self.attr_dim {
            return Err(Error::Config("preprocessor config does not match the environment".into()));
        }
        let (dz, dx, na) = (self.attr_dim, self.state_dim, self.num_actions);
        let zero = vec![0.0; dx];
        let init = self.initial.clone();
        let z0 = zero.clone();
        let initial: MeanFn = Arc::new(move |zs: &ArrayView2<'_, f64>| {
            let rows: Vec<f64> = zs.rows().into_iter().flat_map(|z| init(z.as_slice().expect("row"), &z0)).collect();
            Array2::from_shape_vec((zs.nrows(), dx), rows).expect("state width")
        });
        let trans = self.transition.clone();
        let z1 = zero;
        let transition: MeanFn = Arc::new(move |design: &ArrayView2<'_, f64>| {
            let actions = decode_actions(design, dz + dx, na);
            let rows: Vec<f64> = design
                .rows()
                .into_iter()
                .zip(actions)
                .flat_map(|(row, a)| {
                    let row = row.to_vec();
                    trans(&row[..dz], &row[dz..dz + dx], a, &z1)
                })
                .collect();
            Array2::from_shape_vec((design.nrows(), dx), rows).expect("state width")
        });
        let rew = self.reward.clone();
        let reward: MeanFn = Arc::new(move |design: &ArrayView2<'_, f64>| {
            let actions = decode_actions(design, dz + dx, na);
            let vals: Vec<f64> = design
                .rows()
                .into_iter()
                .zip(actions)
                .map(|(row, a)| {
                    let row = row.to_vec();
                    rew(&row[..dz], &row[dz..dz + dx], a, 0.0)
                })
                .collect();
            Array2::from_shape_vec((design.nrows(), 1), vals).expect("column")
        });
        FittedPreprocessor::from_known_models(config, horizon, dx, initial, transition, reward)
    }
}

impl Environment for SyntheticEnvironment {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn state_dim(&self) -> Result<usize> {
        Ok(self.state_dim)
    }

    fn attr_dim(&self) -> Result<usize> {
        Ok(self.attr_dim)
    }

    /// One uniform per state coordinate and one for the reward; the initial
    /// state uses the first `state_dim`.
    fn noise_dim(&self) -> usize {
        self.state_dim + 1
    }

    fn initial_states(&self, zs: &ArrayView2<'_, f64>, uniforms: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_rows(zs, None, uniforms)?;
        let mut out = Array2::zeros((zs.nrows(), self.state_dim));
        for i in 0..zs.nrows() {
            let eps: Vec<f64> = (0..self.state_dim).map(|k| self.state_noise.quantile(uniforms[[i, k]])).collect();
            let x = self.checked_state((self.initial)(&zs.row(i).to_vec(), &eps))?;
            out.row_mut(i).assign(&Array1::from(x));
        }
        Ok(out)
    }

    fn initial_means(&self, zs: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let zero = vec![0.0; self.state_dim];
        let mut out = Array2::zeros((zs.nrows(), self.state_dim));
        for i in 0..zs.nrows() {
            let x = self.checked_state((self.initial)(&zs.row(i).to_vec(), &zero))?;
            out.row_mut(i).assign(&Array1::from(x));
        }
        Ok(out)
    }

    fn step(
        &self,
        zs: &ArrayView2<'_, f64>,
        states: &ArrayView2<'_, f64>,
        actions: &[usize],
        uniforms: &ArrayView2<'_, f64>,
    ) -> Result<(Array2<f64>, Array1<f64>)> {
        self.check_rows(zs, Some(states), uniforms)?;
        let n = zs.nrows();
        let mut next = Array2::zeros((n, self.state_dim));
        let mut rewards = Array1::zeros(n);
        for i in 0..n {
            let z = zs.row(i).to_vec();
            let x = states.row(i).to_vec();
            let eps: Vec<f64> = (0..self.state_dim).map(|k| self.state_noise.quantile(uniforms[[i, k]])).collect();
            let nu = self.reward_noise.quantile(uniforms[[i, self.state_dim]]);
            let x1 = self.checked_state((self.transition)(&z, &x, actions[i], &eps))?;
            next.row_mut(i).assign(&Array1::from(x1));
            rewards[i] = (self.reward)(&z, &x, actions[i], nu);
        }
        Ok((next, rewards))
    }
}

// ── Demo fixture ──

/// Coefficients of the demo environment (invented fixture values):
///
/// ```text
/// x_0     = init_intercept + init_z·z + ε
/// x_{t+1} = persistence·x_t + (treat_base + treat_z·z)·1{a=1} − idle_cost·1{a=0} + ε
/// r_t     = state_weight·x_t + (action_bonus + action_state·x_t)·a_t − z_penalty·z
/// ε ~ Normal(0, noise_sd²)
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoParams {
    pub init_intercept: f64,
    pub init_z: f64,
    pub persistence: f64,
    pub treat_base: f64,
    pub treat_z: f64,
    pub idle_cost: f64,
    pub state_weight: f64,
    pub action_bonus: f64,
    pub action_state: f64,
    pub z_penalty: f64,
    pub noise_sd: f64,
}

impl Default for DemoParams {
    fn default() -> Self {
        Self {
            init_intercept: -0.5,
            init_z: 1.0,
            persistence: 0.5,
            treat_base: 0.6,
            treat_z: 0.4,
            idle_cost: 0.3,
            state_weight: 1.0,
            action_bonus: 1.0,
            action_state: -2.0,
            z_penalty: 0.25,
            noise_sd: 0.25,
        }
    }
}

impl DemoParams {
    /// Reward `x + 0.5·a − 0.25·z`: treatment is then optimal everywhere.
    pub fn without_action_cost(self) -> Self {
        Self {
            action_bonus: 0.5,
            action_state: 0.0,
            ..self
        }
    }

    pub fn noise_free(self) -> Self {
        Self { noise_sd: 0.0, ..self }
    }
}

pub fn demo_env(p: DemoParams) -> SyntheticEnvironment {
    SyntheticEnvironment::new(
        1,
        1,
        2,
        move |z, eps| vec![p.init_intercept + p.init_z * z[0] + eps[0]],
        move |z, x, a, eps| {
            let drive = if a == 1 { p.treat_base + p.treat_z * z[0] } else { -p.idle_cost };
            vec![p.persistence * x[0] + drive + eps[0]]
        },
        move |z, x, a, _| p.state_weight * x[0] + (p.action_bonus + p.action_state * x[0]) * a as f64 - p.z_penalty * z[0],
        NoiseFamily::Gaussian { sd: p.noise_sd },
        NoiseFamily::Zero,
    )
    .expect("demo parameters are valid")
}

/// The demo environment with default coefficients.
pub fn default_demo_env() -> SyntheticEnvironment {
    demo_env(DemoParams::default())
}

/// `n × 1` binary attributes, each 1 with probability one half.
pub fn sample_demo_attributes(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, 1), |_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
}
