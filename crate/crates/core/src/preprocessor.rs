//! Sequential counterfactual-state preprocessing.
//!
//! For an individual with observed attribute `z`, states `x_0..x_T` and
//! actions `a_0..a_{T-1}`, the counterfactual state under every `z'` in the
//! attribute space is rebuilt forward in time with additive residuals:
//!
//! ```text
//! x̃_0(z') = m_0(z') + (x_0 - m_0(z))
//! x̃_t(z') = m_t(z', x̃_{t-1}(z'), a_{t-1}) + (x_t - m_t(z, x_{t-1}, a_{t-1}))
//! ```
//!
//! The preprocessed state at time `t` concatenates `x̃_t(z')` over the
//! attribute space in order; the block for the individual's own `z` is the
//! observed state. Rewards are replaced by the mean over `z'` of the
//! counterfactual rewards built the same way from per-step reward models.
//!
//! Training uses K-fold cross-fitting: each fold is preprocessed by models
//! fitted on the remaining folds. Deployment on new individuals averages
//! the K replicas.

use std::fmt;
use std::sync::Arc;

use ndarray::{concatenate, s, Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{broadcast_row, transition_design};
use crate::func_approx::{self, FitReport, Regressor, RegressorSpec};
use crate::seeds::derive_seed;
use crate::trajectory::TrajectoryBatch;

pub const PREPROCESSOR_FORMAT: &str = "cfrl-preprocessor";
pub const PREPROCESSOR_VERSION: u32 = 1;

/// The only preprocessing mode currently implemented.
pub const MODE_SINGLE: &str = "single";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessorConfig {
    /// Distinct sensitive-attribute vectors, each of length `d_z`.
    pub z_space: Vec<Vec<f64>>,
    pub num_actions: usize,
    pub cross_folds: usize,
    pub mode: String,
    pub reg_spec: RegressorSpec,
    /// Seed of the fold assignment (regressor seeds derive from `reg_spec`).
    pub seed: u64,
    /// Fit one transition and one reward model on all time steps instead
    /// of one per step. Appropriate when the dynamics are stationary.
    #[serde(default)]
    pub pool_time: bool,
}

impl PreprocessorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode != MODE_SINGLE {
            return Err(Error::UnsupportedMode(self.mode.clone()));
        }
        if self.z_space.is_empty() {
            return Err(Error::Config("z_space is empty".into()));
        }
        let width = self.z_space[0].len();
        if width == 0 || self.z_space.iter().any(|z| z.len() != width) {
            return Err(Error::Config("z_space entries must share a positive length".into()));
        }
        for (i, a) in self.z_space.iter().enumerate() {
            if self.z_space[..i].contains(a) {
                return Err(Error::Config(format!("z_space entry {a:?} repeated")));
            }
        }
        if self.num_actions == 0 {
            return Err(Error::Config("num_actions must be positive".into()));
        }
        if self.cross_folds == 0 {
            return Err(Error::Config("cross_folds must be at least 1".into()));
        }
        self.reg_spec.validate()
    }

    pub fn attr_dim(&self) -> usize {
        self.z_space.first().map(Vec::len).unwrap_or(0)
    }

    /// Position of `z` in the attribute space.
    pub fn z_index(&self, z: &[f64]) -> Result<usize> {
        self.z_space
            .iter()
            .position(|c| c.as_slice() == z)
            .ok_or_else(|| Error::Domain(format!("attribute {z:?} is not in z_space {:?}", self.z_space)))
    }
}

/// Batch mean function `inputs ↦ outputs` used in place of a fitted model.
pub type MeanFn = Arc<dyn Fn(&ArrayView2<'_, f64>) -> Array2<f64> + Send + Sync>;

/// A conditional-mean model: fitted from data or supplied directly.
#[derive(Clone)]
pub enum ConditionalMean {
    Fitted(Regressor),
    Known(MeanFn),
}

impl fmt::Debug for ConditionalMean {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionalMean::Fitted(r) => f.debug_tuple("Fitted").field(&r.model_type()).finish(),
            ConditionalMean::Known(_) => f.write_str("Known(..)"),
        }
    }
}

impl ConditionalMean {
    pub fn predict(&self, inputs: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self {
            ConditionalMean::Fitted(r) => r.predict(inputs),
            ConditionalMean::Known(f) => Ok(f(inputs)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Initial,
    /// Model for `x_t`, `t ≥ 1`.
    Transition(usize),
    /// Model for `r_{t-1}`, `t ≥ 1`.
    Reward(usize),
}

#[derive(Debug, Clone, Copy)]
enum Replicas {
    One(usize),
    Mean,
}

/// Convergence record of one fitted component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub fold: usize,
    /// `initial`, `transition` or `reward`.
    pub family: String,
    /// Time index of the modeled quantity (`x_t` or `r_{t-1}`), 0 for initial.
    pub t: usize,
    pub report: FitReport,
}

/// Trained preprocessor: per-step state and reward models with K replicas.
#[derive(Debug, Clone)]
pub struct FittedPreprocessor {
    config: PreprocessorConfig,
    horizon: usize,
    state_dim: usize,
    initial: Vec<ConditionalMean>,
    transition: Vec<Vec<ConditionalMean>>,
    reward: Vec<Vec<ConditionalMean>>,
    fold_assignment: Vec<usize>,
    reports: Vec<ComponentReport>,
}

/// Deterministic fold labels with sizes differing by at most one.
pub fn assign_folds(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![0; n];
    for (rank, &i) in perm.iter().enumerate() {
        labels[i] = rank % folds;
    }
    labels
}

fn own_indices(config: &PreprocessorConfig, zs: &ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    if zs.ncols() != config.attr_dim() {
        return Err(Error::Shape(format!(
            "attributes have {} columns, z_space entries have {}",
            zs.ncols(),
            config.attr_dim()
        )));
    }
    zs.rows()
        .into_iter()
        .map(|row| config.z_index(row.as_slice().expect("standard layout")))
        .collect()
}

struct FitJob {
    fold: usize,
    family: Family,
}

/// Fits the preprocessor on `batch` and returns it with the cross-fitted
/// preprocessed states (`N × (T+1) × |z_space|·d_x`) and rewards (`N × T`).
pub fn train_preprocessor(
    config: &PreprocessorConfig,
    batch: &TrajectoryBatch,
) -> Result<(FittedPreprocessor, Array3<f64>, Array2<f64>)> {
    config.validate()?;
    let n = batch.len();
    if config.cross_folds > n {
        return Err(Error::Size(format!("{} folds for {} individuals", config.cross_folds, n)));
    }
    batch.check_actions(config.num_actions)?;
    own_indices(config, &batch.zs.view())?;
    let horizon = batch.horizon();
    let k = config.cross_folds;
    let folds = assign_folds(n, k, config.seed);

    let mut jobs = Vec::new();
    for fold in 0..k {
        jobs.push(FitJob { fold, family: Family::Initial });
        // a pooled family is fitted once and tagged with step 1
        let steps = if config.pool_time { horizon.min(1) } else { horizon };
        for t in 1..=steps {
            jobs.push(FitJob { fold, family: Family::Transition(t) });
            jobs.push(FitJob { fold, family: Family::Reward(t) });
        }
    }
    let fitted: Vec<(Regressor, FitReport)> = jobs
        .par_iter()
        .map(|job| {
            let train: Vec<usize> = (0..n).filter(|&i| k == 1 || folds[i] != job.fold).collect();
            let part = batch.select(&train);
            let (code, t) = match job.family {
                Family::Initial => (0, 0),
                Family::Transition(t) => (1, t),
                Family::Reward(t) => (2, t),
            };
            let spec = config
                .reg_spec
                .with_seed(derive_seed(config.reg_spec.seed, &[job.fold as u64, code, t as u64]));
            let (inputs, targets) = match job.family {
                Family::Transition(_) | Family::Reward(_) if config.pool_time => {
                    let per_step: Vec<_> = (1..=horizon)
                        .map(|t| {
                            let family = match job.family {
                                Family::Transition(_) => Family::Transition(t),
                                _ => Family::Reward(t),
                            };
                            training_pairs(&part, family, config.num_actions)
                        })
                        .collect();
                    let inputs: Vec<_> = per_step.iter().map(|p| p.0.view()).collect();
                    let targets: Vec<_> = per_step.iter().map(|p| p.1.view()).collect();
                    (
                        concatenate(Axis(0), &inputs).expect("equal widths"),
                        concatenate(Axis(0), &targets).expect("equal widths"),
                    )
                }
                _ => training_pairs(&part, job.family, config.num_actions),
            };
            func_approx::fit(&spec, &inputs.view(), &targets.view())
        })
        .collect::<Result<_>>()?;

    let mut initial = Vec::with_capacity(k);
    let mut transition = vec![Vec::with_capacity(k); horizon];
    let mut reward = vec![Vec::with_capacity(k); horizon];
    let mut reports = Vec::with_capacity(jobs.len());
    for (job, (model, report)) in jobs.iter().zip(fitted) {
        let (family, t) = match job.family {
            Family::Initial => {
                initial.push(ConditionalMean::Fitted(model));
                ("initial", 0)
            }
            Family::Transition(t) if config.pool_time => {
                for slot in transition.iter_mut() {
                    slot.push(ConditionalMean::Fitted(model.clone()));
                }
                ("transition", t)
            }
            Family::Reward(t) if config.pool_time => {
                for slot in reward.iter_mut() {
                    slot.push(ConditionalMean::Fitted(model.clone()));
                }
                ("reward", t)
            }
            Family::Transition(t) => {
                transition[t - 1].push(ConditionalMean::Fitted(model));
                ("transition", t)
            }
            Family::Reward(t) => {
                reward[t - 1].push(ConditionalMean::Fitted(model));
                ("reward", t)
            }
        };
        reports.push(ComponentReport {
            fold: job.fold,
            family: family.to_string(),
            t,
            report,
        });
    }

    let fitted = FittedPreprocessor {
        config: config.clone(),
        horizon,
        state_dim: batch.state_dim(),
        initial,
        transition,
        reward,
        fold_assignment: folds.clone(),
        reports,
    };

    let width = fitted.augmented_dim();
    let mut states_tilde = Array3::zeros((n, horizon + 1, width));
    let mut rewards_tilde = Array2::zeros((n, horizon));
    for fold in 0..k {
        let rows: Vec<usize> = (0..n).filter(|&i| folds[i] == fold).collect();
        if rows.is_empty() {
            continue;
        }
        let part = batch.select(&rows);
        let (st, rt) = fitted.transform(
            Replicas::One(fold),
            &part.zs.view(),
            &part.states.view(),
            &part.actions.view(),
            Some(&part.rewards.view()),
        )?;
        let rt = rt.expect("rewards requested");
        for (local, &i) in rows.iter().enumerate() {
            states_tilde.slice_mut(s![i, .., ..]).assign(&st.slice(s![local, .., ..]));
            rewards_tilde.row_mut(i).assign(&rt.row(local));
        }
    }
    Ok((fitted, states_tilde, rewards_tilde))
}

/// Regression inputs and targets of one model family, pooled over individuals.
fn training_pairs(batch: &TrajectoryBatch, family: Family, num_actions: usize) -> (Array2<f64>, Array2<f64>) {
    match family {
        Family::Initial => (batch.zs.clone(), batch.states.slice(s![.., 0, ..]).to_owned()),
        Family::Transition(t) | Family::Reward(t) => {
            let prev = batch.states.slice(s![.., t - 1, ..]);
            let actions: Vec<usize> = batch.actions.column(t - 1).to_vec();
            let inputs = transition_design(&batch.zs.view(), &prev, &actions, num_actions);
            let targets = if let Family::Transition(_) = family {
                batch.states.slice(s![.., t, ..]).to_owned()
            } else {
                batch.rewards.slice(s![.., t - 1..t]).to_owned()
            };
            (inputs, targets)
        }
    }
}

impl FittedPreprocessor {
    /// Builds a preprocessor from known mean functions (one replica, the
    /// same function at every step). `transition` and `reward` receive
    /// `[z, x, action dummies]` rows; `initial` receives `z` rows.
    pub fn from_known_models(
        config: PreprocessorConfig,
        horizon: usize,
        state_dim: usize,
        initial: MeanFn,
        transition: MeanFn,
        reward: MeanFn,
    ) -> Result<Self> {
        config.validate()?;
        let config = PreprocessorConfig { cross_folds: 1, ..config };
        Ok(Self {
            config,
            horizon,
            state_dim,
            initial: vec![ConditionalMean::Known(initial)],
            transition: vec![vec![ConditionalMean::Known(transition)]; horizon],
            reward: vec![vec![ConditionalMean::Known(reward)]; horizon],
            fold_assignment: Vec::new(),
            reports: Vec::new(),
        })
    }

    pub fn config(&self) -> &PreprocessorConfig {
        &self.config
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn num_replicas(&self) -> usize {
        self.initial.len()
    }

    /// `|z_space| · d_x`.
    pub fn augmented_dim(&self) -> usize {
        self.config.z_space.len() * self.state_dim
    }

    /// Fold label of each training individual (empty for known models).
    pub fn fold_assignment(&self) -> &[usize] {
        &self.fold_assignment
    }

    pub fn reports(&self) -> &[ComponentReport] {
        &self.reports
    }

    fn predict(&self, family: Family, replicas: Replicas, inputs: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let models = match family {
            Family::Initial => &self.initial,
            Family::Transition(t) | Family::Reward(t) => {
                if t == 0 || t > self.horizon {
                    return Err(Error::Domain(format!(
                        "time step {t} outside the fitted horizon 1..={}",
                        self.horizon
                    )));
                }
                if let Family::Transition(_) = family {
                    &self.transition[t - 1]
                } else {
                    &self.reward[t - 1]
                }
            }
        };
        match replicas {
            Replicas::One(k) => models[k].predict(inputs),
            Replicas::Mean => {
                let mut sum = models[0].predict(inputs)?;
                for m in &models[1..] {
                    sum += &m.predict(inputs)?;
                }
                Ok(sum / models.len() as f64)
            }
        }
    }

    fn initial_blocks(&self, replicas: Replicas, zs: &ArrayView2<'_, f64>, x0: &ArrayView2<'_, f64>, own: &[usize]) -> Result<Array2<f64>> {
        let n = zs.nrows();
        let d = self.state_dim;
        let resid = x0 - &self.predict(Family::Initial, replicas, zs)?;
        let mut out = Array2::zeros((n, self.augmented_dim()));
        for (j, zj) in self.config.z_space.iter().enumerate() {
            let block = self.predict(Family::Initial, replicas, &broadcast_row(zj, n).view())? + &resid;
            out.slice_mut(s![.., j * d..(j + 1) * d]).assign(&block);
        }
        for (i, &j) in own.iter().enumerate() {
            out.slice_mut(s![i, j * d..(j + 1) * d]).assign(&x0.row(i));
        }
        Ok(out)
    }

    /// Counterfactual states at `t ≥ 1` from those at `t - 1`.
    #[allow(clippy::too_many_arguments)]
    fn transition_blocks(
        &self,
        replicas: Replicas,
        t: usize,
        zs: &ArrayView2<'_, f64>,
        prev_obs: &ArrayView2<'_, f64>,
        prev_cf: &ArrayView2<'_, f64>,
        a_prev: &[usize],
        x_t: &ArrayView2<'_, f64>,
        own: &[usize],
    ) -> Result<Array2<f64>> {
        let n = zs.nrows();
        let d = self.state_dim;
        let na = self.config.num_actions;
        let obs_in = transition_design(zs, prev_obs, a_prev, na);
        let resid = x_t - &self.predict(Family::Transition(t), replicas, &obs_in.view())?;
        let mut out = Array2::zeros((n, self.augmented_dim()));
        for (j, zj) in self.config.z_space.iter().enumerate() {
            let cf_in = transition_design(&broadcast_row(zj, n).view(), &prev_cf.slice(s![.., j * d..(j + 1) * d]), a_prev, na);
            let block = self.predict(Family::Transition(t), replicas, &cf_in.view())? + &resid;
            out.slice_mut(s![.., j * d..(j + 1) * d]).assign(&block);
        }
        for (i, &j) in own.iter().enumerate() {
            out.slice_mut(s![i, j * d..(j + 1) * d]).assign(&x_t.row(i));
        }
        Ok(out)
    }

    /// Mean over `z'` of counterfactual rewards for `r_{t-1}`.
    #[allow(clippy::too_many_arguments)]
    fn reward_values(
        &self,
        replicas: Replicas,
        t: usize,
        zs: &ArrayView2<'_, f64>,
        prev_obs: &ArrayView2<'_, f64>,
        prev_cf: &ArrayView2<'_, f64>,
        a_prev: &[usize],
        r_prev: &ArrayView2<'_, f64>,
        own: &[usize],
    ) -> Result<Array1<f64>> {
        let n = zs.nrows();
        let d = self.state_dim;
        let na = self.config.num_actions;
        let obs_in = transition_design(zs, prev_obs, a_prev, na);
        let resid = r_prev - &self.predict(Family::Reward(t), replicas, &obs_in.view())?;
        let mut blocks = Array2::zeros((n, self.config.z_space.len()));
        for (j, zj) in self.config.z_space.iter().enumerate() {
            let cf_in = transition_design(&broadcast_row(zj, n).view(), &prev_cf.slice(s![.., j * d..(j + 1) * d]), a_prev, na);
            let r = self.predict(Family::Reward(t), replicas, &cf_in.view())? + &resid;
            blocks.column_mut(j).assign(&r.column(0));
        }
        for (i, &j) in own.iter().enumerate() {
            blocks[[i, j]] = r_prev[[i, 0]];
        }
        Ok(aggregate_rewards(&blocks.view()))
    }

    fn transform(
        &self,
        replicas: Replicas,
        zs: &ArrayView2<'_, f64>,
        states: &ArrayView3<'_, f64>,
        actions: &ArrayView2<'_, usize>,
        rewards: Option<&ArrayView2<'_, f64>>,
    ) -> Result<(Array3<f64>, Option<Array2<f64>>)> {
        let n = zs.nrows();
        let steps = actions.ncols();
        if states.dim() != (n, steps + 1, self.state_dim) {
            return Err(Error::Shape(format!(
                "states {:?} do not match {} individuals, {} steps, state width {}",
                states.dim(),
                n,
                steps,
                self.state_dim
            )));
        }
        if steps > self.horizon {
            return Err(Error::Domain(format!(
                "{steps} transitions exceed the fitted horizon {}",
                self.horizon
            )));
        }
        let own = own_indices(&self.config, zs)?;
        let mut out = Array3::zeros((n, steps + 1, self.augmented_dim()));
        let mut cf = self.initial_blocks(replicas, zs, &states.slice(s![.., 0, ..]), &own)?;
        out.slice_mut(s![.., 0, ..]).assign(&cf);
        let mut rew = rewards.map(|_| Array2::zeros((n, steps)));
        for t in 1..=steps {
            let a_prev: Vec<usize> = actions.column(t - 1).to_vec();
            let prev_obs = states.slice(s![.., t - 1, ..]);
            if let (Some(r), Some(out_r)) = (rewards, rew.as_mut()) {
                let vals = self.reward_values(replicas, t, zs, &prev_obs, &cf.view(), &a_prev, &r.slice(s![.., t - 1..t]), &own)?;
                out_r.column_mut(t - 1).assign(&vals);
            }
            cf = self.transition_blocks(replicas, t, zs, &prev_obs, &cf.view(), &a_prev, &states.slice(s![.., t, ..]), &own)?;
            out.slice_mut(s![.., t, ..]).assign(&cf);
        }
        Ok((out, rew))
    }

    /// Preprocesses a batch of (new) individuals with the replica-mean
    /// models, returning states and rewards.
    pub fn preprocess_batch(&self, batch: &TrajectoryBatch) -> Result<(Array3<f64>, Array2<f64>)> {
        let (states, rewards) = self.transform(
            Replicas::Mean,
            &batch.zs.view(),
            &batch.states.view(),
            &batch.actions.view(),
            Some(&batch.rewards.view()),
        )?;
        Ok((states, rewards.expect("rewards requested")))
    }

    /// Preprocessed states for observed histories (`states` holds one more
    /// time slice than `actions` has columns).
    pub fn preprocess_states(
        &self,
        zs: &ArrayView2<'_, f64>,
        states: &ArrayView3<'_, f64>,
        actions: &ArrayView2<'_, usize>,
    ) -> Result<Array3<f64>> {
        Ok(self.transform(Replicas::Mean, zs, states, actions, None)?.0)
    }

    /// One online step: the augmented state at time `t` for an individual
    /// with attribute `z` and observed state `x_t`. `previous` carries the
    /// augmented state at `t - 1` and the action taken then, and must be
    /// absent exactly when `t = 0`.
    pub fn preprocess_step(&self, z: &[f64], t: usize, x_t: &[f64], previous: Option<(&[f64], usize)>) -> Result<Vec<f64>> {
        let own = vec![self.config.z_index(z)?];
        if x_t.len() != self.state_dim {
            return Err(Error::Shape(format!("state has {} entries, expected {}", x_t.len(), self.state_dim)));
        }
        let zs = Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("row");
        let x = Array2::from_shape_vec((1, x_t.len()), x_t.to_vec()).expect("row");
        let out = match (t, previous) {
            (0, None) => self.initial_blocks(Replicas::Mean, &zs.view(), &x.view(), &own)?,
            (t, Some((prev_cf, a_prev))) if t > 0 => {
                if prev_cf.len() != self.augmented_dim() {
                    return Err(Error::Shape(format!(
                        "previous augmented state has {} entries, expected {}",
                        prev_cf.len(),
                        self.augmented_dim()
                    )));
                }
                if a_prev >= self.config.num_actions {
                    return Err(Error::Domain(format!("action {a_prev} outside [0, {})", self.config.num_actions)));
                }
                let d = self.state_dim;
                let j = own[0];
                let prev_obs = Array2::from_shape_vec((1, d), prev_cf[j * d..(j + 1) * d].to_vec()).expect("row");
                let prev = Array2::from_shape_vec((1, prev_cf.len()), prev_cf.to_vec()).expect("row");
                self.transition_blocks(Replicas::Mean, t, &zs.view(), &prev_obs.view(), &prev.view(), &[a_prev], &x.view(), &own)?
            }
            _ => {
                return Err(Error::Domain(
                    "previous augmented state and action must be given exactly when t > 0".into(),
                ))
            }
        };
        Ok(out.row(0).to_vec())
    }

    pub fn to_blob(&self) -> Result<PreprocessorBlob> {
        let unwrap = |m: &ConditionalMean| match m {
            ConditionalMean::Fitted(r) => Ok(r.clone()),
            ConditionalMean::Known(_) => Err(Error::Serialization("known mean functions cannot be serialized".into())),
        };
        Ok(PreprocessorBlob {
            format: PREPROCESSOR_FORMAT.to_string(),
            version: PREPROCESSOR_VERSION,
            config: self.config.clone(),
            horizon: self.horizon,
            state_dim: self.state_dim,
            fold_assignment: self.fold_assignment.clone(),
            initial: self.initial.iter().map(unwrap).collect::<Result<_>>()?,
            transition: self
                .transition
                .iter()
                .map(|step| step.iter().map(unwrap).collect::<Result<Vec<_>>>())
                .collect::<Result<_>>()?,
            reward: self
                .reward
                .iter()
                .map(|step| step.iter().map(unwrap).collect::<Result<Vec<_>>>())
                .collect::<Result<_>>()?,
            reports: self.reports.clone(),
        })
    }
}

/// Combines per-`z'` counterfactual rewards (`n × |z_space|`) into one
/// reward per row.
pub fn aggregate_rewards(counterfactual: &ArrayView2<'_, f64>) -> Array1<f64> {
    counterfactual.mean_axis(Axis(1)).expect("non-empty z_space")
}

/// Serialized preprocessor: manifest fields plus regressor blobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessorBlob {
    pub format: String,
    pub version: u32,
    pub config: PreprocessorConfig,
    pub horizon: usize,
    pub state_dim: usize,
    pub fold_assignment: Vec<usize>,
    pub initial: Vec<Regressor>,
    pub transition: Vec<Vec<Regressor>>,
    pub reward: Vec<Vec<Regressor>>,
    #[serde(default)]
    pub reports: Vec<ComponentReport>,
}

impl PreprocessorBlob {
    pub fn into_preprocessor(self) -> Result<FittedPreprocessor> {
        if self.format != PREPROCESSOR_FORMAT || self.version != PREPROCESSOR_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported preprocessor blob {} v{}",
                self.format, self.version
            )));
        }
        self.config.validate()?;
        let k = self.initial.len();
        if k == 0
            || self.transition.len() != self.horizon
            || self.reward.len() != self.horizon
            || self.transition.iter().chain(&self.reward).any(|s| s.len() != k)
        {
            return Err(Error::Serialization("inconsistent replica counts in preprocessor blob".into()));
        }
        let wrap = |v: Vec<Regressor>| v.into_iter().map(ConditionalMean::Fitted).collect::<Vec<_>>();
        Ok(FittedPreprocessor {
            config: self.config,
            horizon: self.horizon,
            state_dim: self.state_dim,
            initial: wrap(self.initial),
            transition: self.transition.into_iter().map(wrap).collect(),
            reward: self.reward.into_iter().map(wrap).collect(),
            fold_assignment: self.fold_assignment,
            reports: self.reports,
        })
    }
}
