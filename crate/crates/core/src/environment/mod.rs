//! Environments and trajectory samplers.
//!
//! All randomness flows through uniform draws on `(0, 1)`, one row of
//! [`Environment::noise_dim`] values per individual and time step plus one
//! policy draw. Counterfactual arms of the same individual consume the same
//! rows, so only the attribute (and what it causes downstream) differs.

mod simulated;
mod synthetic;

pub use simulated::{SimulatedEnvBlob, SimulatedEnvironment, SimulatedFitReports, SIMULATED_ENV_FORMAT};
pub use synthetic::{
    default_demo_env, demo_env, sample_demo_attributes, DemoParams, InitialFn, NoiseFamily, RewardFn, SyntheticEnvironment,
    TransitionFn,
};

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Open01;

use crate::agents::policy::{check_distribution, sample_action, History, Policy};
use crate::error::{Error, Result};
use crate::seeds::derive_seed;
use crate::trajectory::TrajectoryBatch;

/// Dynamics of a discrete-action environment, evaluated a batch of
/// individuals at a time.
pub trait Environment: Send + Sync {
    fn num_actions(&self) -> usize;
    fn state_dim(&self) -> Result<usize>;
    fn attr_dim(&self) -> Result<usize>;
    /// Uniforms consumed per individual and step.
    fn noise_dim(&self) -> usize;

    /// `x_0` for rows of `zs`, one uniform row per individual.
    fn initial_states(&self, zs: &ArrayView2<'_, f64>, uniforms: &ArrayView2<'_, f64>) -> Result<Array2<f64>>;

    /// Noise-free initial state, used for additive-residual counterfactual
    /// initial states.
    fn initial_means(&self, zs: &ArrayView2<'_, f64>) -> Result<Array2<f64>>;

    /// Next states and rewards.
    fn step(
        &self,
        zs: &ArrayView2<'_, f64>,
        states: &ArrayView2<'_, f64>,
        actions: &[usize],
        uniforms: &ArrayView2<'_, f64>,
    ) -> Result<(Array2<f64>, Array1<f64>)>;
}

/// Uniform draws for a batch rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraws {
    /// `N × (T+1) × noise_dim`; slot 0 drives the initial state and slot
    /// `t + 1` the transition out of time `t`.
    pub env: Array3<f64>,
    /// `N × T`, consumed by inverse-CDF action sampling.
    pub policy: Array2<f64>,
}

/// Draws from one ChaCha stream per individual seeded by `(seed, i)`, so
/// an individual's noise does not depend on the batch size.
pub fn draw_noise(seed: u64, n: usize, horizon: usize, noise_dim: usize) -> NoiseDraws {
    let mut env = Array3::zeros((n, horizon + 1, noise_dim));
    let mut policy = Array2::zeros((n, horizon));
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[i as u64]));
        for t in 0..=horizon {
            for k in 0..noise_dim {
                env[[i, t, k]] = rng.sample::<f64, _>(Open01);
            }
            if t < horizon {
                policy[[i, t]] = rng.sample::<f64, _>(Open01);
            }
        }
    }
    NoiseDraws { env, policy }
}

fn check_compatible(env: &dyn Environment, policy: &dyn Policy) -> Result<()> {
    if env.num_actions() != policy.num_actions() {
        return Err(Error::Domain(format!(
            "policy has {} actions but the environment has {}",
            policy.num_actions(),
            env.num_actions()
        )));
    }
    Ok(())
}

/// Rolls `x0` forward under `policy` with pre-drawn noise.
fn rollout(
    env: &dyn Environment,
    zs: &ArrayView2<'_, f64>,
    x0: Array2<f64>,
    policy: &dyn Policy,
    noise: &NoiseDraws,
) -> Result<TrajectoryBatch> {
    let (n, dx) = x0.dim();
    let horizon = noise.policy.ncols();
    let mut states = Array3::zeros((n, horizon + 1, dx));
    states.slice_mut(s![.., 0, ..]).assign(&x0);
    let mut actions = Array2::<usize>::zeros((n, horizon));
    let mut rewards = Array2::zeros((n, horizon));
    for t in 0..horizon {
        let probs = {
            let h = History::new(*zs, states.slice(s![.., ..=t, ..]), actions.slice(s![.., ..t]))?;
            policy.action_probs(&h)?
        };
        if probs.dim() != (n, env.num_actions()) {
            return Err(Error::Shape(format!("policy returned {:?} probabilities", probs.dim())));
        }
        check_distribution(&probs.view())?;
        let a_t: Vec<usize> = (0..n)
            .map(|i| sample_action(probs.row(i).as_slice().expect("standard layout"), noise.policy[[i, t]]))
            .collect();
        let (next, r) = env.step(zs, &states.slice(s![.., t, ..]), &a_t, &noise.env.slice(s![.., t + 1, ..]))?;
        if next.iter().chain(r.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonConvergence(format!("environment produced non-finite values at t = {t}")));
        }
        states.slice_mut(s![.., t + 1, ..]).assign(&next);
        actions.column_mut(t).assign(&Array1::from(a_t));
        rewards.column_mut(t).assign(&r);
    }
    TrajectoryBatch::with_default_ids(zs.to_owned(), states, actions, rewards)
}

/// Samples `zs.nrows()` trajectories of `horizon` steps. Pure in `(env,
/// zs, policy, horizon, seed)`.
pub fn sample_trajectories(
    env: &dyn Environment,
    zs: &ArrayView2<'_, f64>,
    policy: &dyn Policy,
    horizon: usize,
    seed: u64,
) -> Result<TrajectoryBatch> {
    check_compatible(env, policy)?;
    if zs.ncols() != env.attr_dim()? {
        return Err(Error::Shape(format!("zs has {} columns, expected {}", zs.ncols(), env.attr_dim()?)));
    }
    let noise = draw_noise(seed, zs.nrows(), horizon, env.noise_dim());
    let x0 = env.initial_states(zs, &noise.env.slice(s![.., 0, ..]))?;
    rollout(env, zs, x0, policy, &noise)
}

/// Parallel simulations of the same individuals under different attributes.
#[derive(Debug, Clone)]
pub struct CounterfactualArms {
    pub arms: Vec<TrajectoryBatch>,
    /// The draws every arm consumed.
    pub noise: NoiseDraws,
}

/// Rolls every arm forward from its own initial states with the same noise
/// and policy draws per individual and step.
pub fn sample_counterfactual_arms(
    env: &dyn Environment,
    z_arms: &[Array2<f64>],
    x0_arms: &[Array2<f64>],
    policy: &dyn Policy,
    horizon: usize,
    seed: u64,
) -> Result<CounterfactualArms> {
    check_compatible(env, policy)?;
    if z_arms.len() != x0_arms.len() || z_arms.is_empty() {
        return Err(Error::Size(format!(
            "{} attribute arms but {} initial-state arms",
            z_arms.len(),
            x0_arms.len()
        )));
    }
    let n = z_arms[0].nrows();
    if z_arms.iter().chain(x0_arms).any(|a| a.nrows() != n) {
        return Err(Error::Size("arms must cover the same individuals".into()));
    }
    let noise = draw_noise(seed, n, horizon, env.noise_dim());
    let arms = z_arms
        .iter()
        .zip(x0_arms)
        .map(|(zs, x0)| rollout(env, &zs.view(), x0.clone(), policy, &noise))
        .collect::<Result<_>>()?;
    Ok(CounterfactualArms { arms, noise })
}

/// Repeats the rows of `a` `reps` times, replicate-major.
pub(crate) fn tile_rows(a: &ArrayView2<'_, f64>, reps: usize) -> Array2<f64> {
    let views = vec![a.view(); reps];
    ndarray::concatenate(Axis(0), &views).expect("equal widths")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::policy::{ConstantPolicy, RandomPolicy};
    use ndarray::array;

    #[test]
    fn noise_is_open_and_per_individual() {
        let a = draw_noise(3, 5, 4, 2);
        let b = draw_noise(3, 8, 4, 2);
        assert_eq!(a.env, b.env.slice(s![..5, .., ..]));
        assert!(a.env.iter().chain(a.policy.iter()).all(|&u| u > 0.0 && u < 1.0));
    }

    #[test]
    fn zero_noise_ignores_seed() {
        let env = demo_env(DemoParams::default().noise_free());
        let zs = array![[0.0], [1.0]];
        let p = ConstantPolicy { num_actions: 2, action: 1 };
        let a = sample_trajectories(&env, &zs.view(), &p, 6, 1).unwrap();
        let b = sample_trajectories(&env, &zs.view(), &p, 6, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn behaviour_policy_is_balanced() {
        let env = default_demo_env();
        let zs = sample_demo_attributes(500, 4);
        let batch = sample_trajectories(&env, &zs.view(), &RandomPolicy { num_actions: 2 }, 10, 5).unwrap();
        let ones = batch.actions.iter().filter(|&&a| a == 1).count() as f64 / 5000.0;
        assert!((ones - 0.5).abs() < 0.05, "{ones}");
        assert_eq!(batch.zs.dim(), (500, 1));
        assert_eq!(batch.states.dim(), (500, 11, 1));
    }

    #[test]
    fn equal_arms_are_identical_and_random_policy_agrees() {
        let env = default_demo_env();
        let z0 = Array2::zeros((20, 1));
        let z1 = Array2::ones((20, 1));
        let x0 = env.initial_means(&z0.view()).unwrap();
        let p = RandomPolicy { num_actions: 2 };
        let same = sample_counterfactual_arms(&env, &[z0.clone(), z0.clone()], &[x0.clone(), x0.clone()], &p, 5, 2).unwrap();
        assert_eq!(same.arms[0], same.arms[1]);
        let diff = sample_counterfactual_arms(&env, &[z0.clone(), z1], &[x0.clone(), x0 + 1.0], &p, 5, 2).unwrap();
        assert_eq!(diff.arms[0].actions, diff.arms[1].actions);
        assert_eq!(diff.noise, same.noise);
    }

    #[test]
    fn additive_offset_follows_recursion() {
        // x_{t+1} = 0.5 x_t + 0.6 + 0.4 z + ε under a ≡ 1, so the z-gap obeys
        // o_{t+1} = 0.5 o_t + 0.4 from o_0 = 1
        let env = default_demo_env();
        let n = 30;
        let z0 = Array2::zeros((n, 1));
        let z1 = Array2::ones((n, 1));
        let noise = draw_noise(8, n, 0, env.noise_dim());
        let x0 = env.initial_states(&z0.view(), &noise.env.slice(s![.., 0, ..])).unwrap();
        let p = ConstantPolicy { num_actions: 2, action: 1 };
        let arms = sample_counterfactual_arms(&env, &[z0, z1], &[x0.clone(), x0 + 1.0], &p, 8, 4).unwrap();
        let mut o = 1.0;
        for t in 0..=8 {
            for i in 0..n {
                let gap = arms.arms[1].states[[i, t, 0]] - arms.arms[0].states[[i, t, 0]];
                assert!((gap - o).abs() < 1e-12, "t={t} gap={gap} o={o}");
            }
            o = 0.5 * o + 0.4;
        }
    }

    #[test]
    fn mismatched_inputs() {
        let env = default_demo_env();
        let zs = array![[0.0]];
        assert!(matches!(
            sample_trajectories(&env, &zs.view(), &RandomPolicy { num_actions: 3 }, 2, 0),
            Err(Error::Domain(_))
        ));
        let p = RandomPolicy { num_actions: 2 };
        assert!(matches!(
            sample_counterfactual_arms(&env, &[zs.clone(), zs.clone()], &[zs.clone()], &p, 2, 0),
            Err(Error::Size(_))
        ));
    }
}
