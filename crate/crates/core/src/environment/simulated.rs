use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::Environment;
use crate::error::{Error, Result};
use crate::features::transition_design;
use crate::func_approx::{self, FitReport, Regressor, RegressorSpec};
use crate::seeds::derive_seed;
use crate::trajectory::TrajectoryBatch;

pub const SIMULATED_ENV_FORMAT: &str = "cfrl-simulated-env";
const SIMULATED_ENV_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FittedDynamics {
    state_dim: usize,
    attr_dim: usize,
    initial: Regressor,
    transition: Regressor,
    reward: Regressor,
    /// `N × d_x`.
    initial_residuals: Array2<f64>,
    /// `(N·T) × d_x`, row-aligned with `reward_residuals`.
    transition_residuals: Array2<f64>,
    reward_residuals: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedFitReports {
    pub initial: FitReport,
    pub transition: FitReport,
    pub reward: FitReport,
}

impl SimulatedFitReports {
    pub fn all_converged(&self) -> bool {
        self.initial.converged && self.transition.converged && self.reward.converged
    }
}

/// Dynamics estimated from offline data: pooled regressions for the
/// initial state, the transition and the reward, with empirical residuals
/// resampled as noise. A transition residual and the reward residual of
/// the same training tuple are drawn together.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedEnvironment {
    num_actions: usize,
    state_spec: RegressorSpec,
    reward_spec: RegressorSpec,
    fitted: Option<FittedDynamics>,
}

/// Bank row selected by a uniform draw.
fn bank_index(u: f64, len: usize) -> usize {
    ((u * len as f64) as usize).min(len - 1)
}

impl SimulatedEnvironment {
    pub fn new(num_actions: usize, state_spec: RegressorSpec, reward_spec: RegressorSpec) -> Result<Self> {
        if num_actions == 0 {
            return Err(Error::Config("num_actions must be positive".into()));
        }
        state_spec.validate()?;
        reward_spec.validate()?;
        Ok(Self {
            num_actions,
            state_spec,
            reward_spec,
            fitted: None,
        })
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted.is_some()
    }

    fn dynamics(&self) -> Result<&FittedDynamics> {
        self.fitted
            .as_ref()
            .ok_or_else(|| Error::State("simulated environment has not been fitted".into()))
    }

    /// Fits the three models by pooled regression over every individual
    /// and time step.
    pub fn fit(&mut self, batch: &TrajectoryBatch) -> Result<SimulatedFitReports> {
        batch.check_actions(self.num_actions)?;
        let (n, horizon, dx) = (batch.len(), batch.horizon(), batch.state_dim());
        if horizon == 0 {
            return Err(Error::Size("at least one transition is needed".into()));
        }
        let x0 = batch.states.slice(s![.., 0, ..]);
        let mut designs = Vec::with_capacity(horizon);
        let mut next = Vec::with_capacity(horizon);
        let mut rewards = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let a: Vec<usize> = batch.actions.column(t).to_vec();
            designs.push(transition_design(&batch.zs.view(), &batch.states.slice(s![.., t, ..]), &a, self.num_actions));
            next.push(batch.states.slice(s![.., t + 1, ..]).to_owned());
            rewards.push(batch.rewards.slice(s![.., t..t + 1]).to_owned());
        }
        let stack = |parts: &[Array2<f64>]| {
            let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
            concatenate(Axis(0), &views).expect("equal widths")
        };
        let design = stack(&designs);
        let next = stack(&next);
        let rewards = stack(&rewards);

        let state_seed = |family| self.state_spec.with_seed(derive_seed(self.state_spec.seed, &[family]));
        let reward_spec = self.reward_spec.with_seed(derive_seed(self.reward_spec.seed, &[2]));
        let ((init_fit, trans_fit), reward_fit) = rayon::join(
            || {
                rayon::join(
                    || func_approx::fit(&state_seed(0), &batch.zs.view(), &x0),
                    || func_approx::fit(&state_seed(1), &design.view(), &next.view()),
                )
            },
            || func_approx::fit(&reward_spec, &design.view(), &rewards.view()),
        );
        let (initial, initial_report) = init_fit?;
        let (transition, transition_report) = trans_fit?;
        let (reward, reward_report) = reward_fit?;

        let initial_residuals = &x0 - &initial.predict(&batch.zs.view())?;
        let transition_residuals = &next - &transition.predict(&design.view())?;
        let reward_residuals = (&rewards - &reward.predict(&design.view())?).column(0).to_owned();
        debug_assert_eq!(initial_residuals.nrows(), n);
        debug_assert_eq!(transition_residuals.dim(), (n * horizon, dx));
        self.fitted = Some(FittedDynamics {
            state_dim: dx,
            attr_dim: batch.attr_dim(),
            initial,
            transition,
            reward,
            initial_residuals,
            transition_residuals,
            reward_residuals,
        });
        Ok(SimulatedFitReports {
            initial: initial_report,
            transition: transition_report,
            reward: reward_report,
        })
    }

    /// Residual banks `(initial, transition, reward)`.
    pub fn residual_banks(&self) -> Result<(&Array2<f64>, &Array2<f64>, &Array1<f64>)> {
        let d = self.dynamics()?;
        Ok((&d.initial_residuals, &d.transition_residuals, &d.reward_residuals))
    }

    /// Noise-free one-step predictions `(next state, reward)`.
    pub fn predict_mean(&self, zs: &ArrayView2<'_, f64>, states: &ArrayView2<'_, f64>, actions: &[usize]) -> Result<(Array2<f64>, Array1<f64>)> {
        let d = self.dynamics()?;
        let design = transition_design(zs, states, actions, self.num_actions);
        let next = d.transition.predict(&design.view())?;
        let r = d.reward.predict(&design.view())?.column(0).to_owned();
        Ok((next, r))
    }

    pub fn to_blob(&self) -> Result<SimulatedEnvBlob> {
        let d = self.dynamics()?;
        Ok(SimulatedEnvBlob {
            format: SIMULATED_ENV_FORMAT.to_string(),
            version: SIMULATED_ENV_VERSION,
            num_actions: self.num_actions,
            state_spec: self.state_spec.clone(),
            reward_spec: self.reward_spec.clone(),
            state_dim: d.state_dim,
            attr_dim: d.attr_dim,
            initial: d.initial.to_blob(),
            transition: d.transition.to_blob(),
            reward: d.reward.to_blob(),
            initial_residuals: d.initial_residuals.clone(),
            transition_residuals: d.transition_residuals.clone(),
            reward_residuals: d.reward_residuals.clone(),
        })
    }
}

impl Environment for SimulatedEnvironment {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn state_dim(&self) -> Result<usize> {
        Ok(self.dynamics()?.state_dim)
    }

    fn attr_dim(&self) -> Result<usize> {
        Ok(self.dynamics()?.attr_dim)
    }

    /// One uniform selecting a residual-bank row.
    fn noise_dim(&self) -> usize {
        1
    }

    fn initial_states(&self, zs: &ArrayView2<'_, f64>, uniforms: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let d = self.dynamics()?;
        let mut x0 = d.initial.predict(zs)?;
        let bank = &d.initial_residuals;
        for i in 0..zs.nrows() {
            let k = bank_index(uniforms[[i, 0]], bank.nrows());
            let mut row = x0.row_mut(i);
            row += &bank.row(k);
        }
        Ok(x0)
    }

    fn initial_means(&self, zs: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.dynamics()?.initial.predict(zs)
    }

    fn step(
        &self,
        zs: &ArrayView2<'_, f64>,
        states: &ArrayView2<'_, f64>,
        actions: &[usize],
        uniforms: &ArrayView2<'_, f64>,
    ) -> Result<(Array2<f64>, Array1<f64>)> {
        let d = self.dynamics()?;
        let (mut next, mut r) = self.predict_mean(zs, states, actions)?;
        let len = d.reward_residuals.len();
        for i in 0..zs.nrows() {
            let k = bank_index(uniforms[[i, 0]], len);
            let mut row = next.row_mut(i);
            row += &d.transition_residuals.row(k);
            r[i] += d.reward_residuals[k];
        }
        Ok((next, r))
    }
}

/// Serialized fitted simulated environment: regressor blobs plus banks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulatedEnvBlob {
    pub format: String,
    pub version: u32,
    pub num_actions: usize,
    pub state_spec: RegressorSpec,
    pub reward_spec: RegressorSpec,
    pub state_dim: usize,
    pub attr_dim: usize,
    pub initial: func_approx::RegressorBlob,
    pub transition: func_approx::RegressorBlob,
    pub reward: func_approx::RegressorBlob,
    pub initial_residuals: Array2<f64>,
    pub transition_residuals: Array2<f64>,
    pub reward_residuals: Array1<f64>,
}

impl SimulatedEnvBlob {
    pub fn into_environment(self) -> Result<SimulatedEnvironment> {
        if self.format != SIMULATED_ENV_FORMAT || self.version != SIMULATED_ENV_VERSION {
            return Err(Error::Serialization(format!("unsupported environment blob {} v{}", self.format, self.version)));
        }
        if self.initial_residuals.nrows() == 0
            || self.reward_residuals.is_empty()
            || self.transition_residuals.nrows() != self.reward_residuals.len()
        {
            return Err(Error::Serialization("residual banks are empty or misaligned".into()));
        }
        let mut env = SimulatedEnvironment::new(self.num_actions, self.state_spec, self.reward_spec)?;
        env.fitted = Some(FittedDynamics {
            state_dim: self.state_dim,
            attr_dim: self.attr_dim,
            initial: self.initial.into_regressor()?,
            transition: self.transition.into_regressor()?,
            reward: self.reward.into_regressor()?,
            initial_residuals: self.initial_residuals,
            transition_residuals: self.transition_residuals,
            reward_residuals: self.reward_residuals,
        });
        Ok(env)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::policy::RandomPolicy;
    use crate::environment::{demo_env, draw_noise, sample_demo_attributes, sample_trajectories, DemoParams};

    fn demo_batch(n: usize, noise_free: bool) -> TrajectoryBatch {
        // drop the z·a and x·a interactions so that linear models are exact
        let p = if noise_free {
            DemoParams { treat_z: 0.0, ..DemoParams::default().noise_free().without_action_cost() }
        } else {
            DemoParams::default()
        };
        let env = demo_env(p);
        let zs = sample_demo_attributes(n, 11);
        sample_trajectories(&env, &zs.view(), &RandomPolicy { num_actions: 2 }, 6, 12).unwrap()
    }

    #[test]
    fn realizable_dynamics_leave_no_residual() {
        let mut env = SimulatedEnvironment::new(2, RegressorSpec::linear(), RegressorSpec::linear()).unwrap();
        env.fit(&demo_batch(60, true)).unwrap();
        let (a, b, c) = env.residual_banks().unwrap();
        assert!(a.iter().chain(b.iter()).chain(c.iter()).all(|r| r.abs() < 1e-6));
    }

    #[test]
    fn unfitted_is_a_state_error() {
        let env = SimulatedEnvironment::new(2, RegressorSpec::linear(), RegressorSpec::linear()).unwrap();
        let zs = Array2::zeros((1, 1));
        assert!(matches!(
            sample_trajectories(&env, &zs.view(), &RandomPolicy { num_actions: 2 }, 2, 0),
            Err(Error::State(_))
        ));
        assert!(matches!(env.to_blob(), Err(Error::State(_))));
    }

    #[test]
    fn one_step_mean_matches_model() {
        let mut env = SimulatedEnvironment::new(2, RegressorSpec::linear(), RegressorSpec::linear()).unwrap();
        env.fit(&demo_batch(200, false)).unwrap();
        let draws = 10_000;
        let zs = Array2::ones((draws, 1));
        let xs = Array2::from_elem((draws, 1), 0.3);
        let acts = vec![1; draws];
        let noise = draw_noise(3, draws, 0, 1);
        let (next, _) = env.step(&zs.view(), &xs.view(), &acts, &noise.env.slice(s![.., 0, ..])).unwrap();
        let (mean, _) = env.predict_mean(&zs.slice(s![..1, ..]), &xs.slice(s![..1, ..]), &acts[..1]).unwrap();
        let m = next.column(0).mean().unwrap();
        let sd = next.column(0).std(1.0);
        assert!((m - mean[[0, 0]]).abs() < 3.0 * sd / (draws as f64).sqrt());
    }

    #[test]
    fn resampling_preserves_bank_distribution() {
        let mut env = SimulatedEnvironment::new(2, RegressorSpec::linear(), RegressorSpec::linear()).unwrap();
        env.fit(&demo_batch(200, false)).unwrap();
        let bank: Vec<f64> = env.residual_banks().unwrap().1.column(0).to_vec();
        let noise = draw_noise(9, 20_000, 0, 1);
        let mut draws: Vec<f64> = noise.env.iter().map(|&u| bank[bank_index(u, bank.len())]).collect();
        let mut sorted = bank.clone();
        sorted.sort_by(f64::total_cmp);
        draws.sort_by(f64::total_cmp);
        // two-sample Kolmogorov–Smirnov distance
        let (mut i, mut j, mut ks) = (0, 0, 0.0f64);
        while i < sorted.len() && j < draws.len() {
            let v = sorted[i].min(draws[j]);
            while i < sorted.len() && sorted[i] <= v {
                i += 1;
            }
            while j < draws.len() && draws[j] <= v {
                j += 1;
            }
            ks = ks.max((i as f64 / sorted.len() as f64 - j as f64 / draws.len() as f64).abs());
        }
        assert!(ks < 0.05, "{ks}");
    }

    #[test]
    fn blob_round_trip_reproduces_rollouts() {
        let mut env = SimulatedEnvironment::new(2, RegressorSpec { max_epochs: 20, ..RegressorSpec::nn(3) }, RegressorSpec::linear()).unwrap();
        env.fit(&demo_batch(40, false)).unwrap();
        let text = serde_json::to_string(&env.to_blob().unwrap()).unwrap();
        let back = serde_json::from_str::<SimulatedEnvBlob>(&text).unwrap().into_environment().unwrap();
        let zs = sample_demo_attributes(10, 1);
        let p = RandomPolicy { num_actions: 2 };
        assert_eq!(
            sample_trajectories(&env, &zs.view(), &p, 4, 7).unwrap(),
            sample_trajectories(&back, &zs.view(), &p, 4, 7).unwrap()
        );
    }
}
