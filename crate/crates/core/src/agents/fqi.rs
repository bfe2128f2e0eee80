use std::sync::Arc;

use ndarray::{concatenate, s, Array1, Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::fitted_q::{iterate, ActionValues, IterationSettings, TrainingReport, Tuples};
use super::policy::{greedy, History, Policy};
use crate::error::{Error, Result};
use crate::func_approx::RegressorSpec;
use crate::preprocessor::{FittedPreprocessor, PreprocessorBlob};
use crate::trajectory::TrajectoryBatch;

pub const AGENT_FORMAT: &str = "cfrl-fqi-agent";
pub const AGENT_VERSION: u32 = 1;

pub const DEFAULT_DISCOUNT: f64 = 0.9;
pub const DEFAULT_FQI_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FqiConfig {
    pub num_actions: usize,
    pub reg_spec: RegressorSpec,
    pub discount: f64,
    /// Stop once `max |ΔQ|` over the training tuples drops below this.
    pub tolerance: f64,
    /// Append the sensitive attribute to the state features.
    #[serde(default)]
    pub include_attribute: bool,
}

impl FqiConfig {
    pub fn new(num_actions: usize, reg_spec: RegressorSpec) -> Self {
        Self {
            num_actions,
            reg_spec,
            discount: DEFAULT_DISCOUNT,
            tolerance: DEFAULT_FQI_TOLERANCE,
            include_attribute: false,
        }
    }
}

/// Fitted Q-iteration agent with an optional internal preprocessor.
#[derive(Debug, Clone)]
pub struct FqiAgent {
    config: FqiConfig,
    preprocessor: Option<Arc<FittedPreprocessor>>,
    q: Option<ActionValues>,
    report: Option<TrainingReport>,
}

/// `[x_t, z]` per time slice when `include_attribute`, else `x_t`.
pub(crate) fn stack_features(zs: &ArrayView2<'_, f64>, states: &ArrayView2<'_, f64>, include_attribute: bool) -> Array2<f64> {
    if include_attribute {
        concatenate(Axis(1), &[states.view(), zs.view()]).expect("rows agree")
    } else {
        states.to_owned()
    }
}

/// Transition tuples from per-time feature slices `features[t]` (`t = 0..=T`).
pub(crate) fn build_tuples(features: &[Array2<f64>], actions: &ArrayView2<'_, usize>, rewards: &ArrayView2<'_, f64>) -> Tuples {
    let horizon = actions.ncols();
    let views: Vec<_> = features[..horizon].iter().map(|f| f.view()).collect();
    let next_views: Vec<_> = features[1..=horizon].iter().map(|f| f.view()).collect();
    Tuples {
        features: concatenate(Axis(0), &views).expect("equal widths"),
        next_features: concatenate(Axis(0), &next_views).expect("equal widths"),
        actions: (0..horizon).flat_map(|t| actions.column(t).to_vec()).collect(),
        rewards: Array1::from_iter((0..horizon).flat_map(|t| rewards.column(t).to_vec())),
    }
}

impl FqiAgent {
    pub fn new(config: FqiConfig) -> Self {
        Self {
            config,
            preprocessor: None,
            q: None,
            report: None,
        }
    }

    pub fn with_preprocessor(config: FqiConfig, preprocessor: Arc<FittedPreprocessor>) -> Self {
        Self {
            preprocessor: Some(preprocessor),
            ..Self::new(config)
        }
    }

    pub fn config(&self) -> &FqiConfig {
        &self.config
    }

    pub fn preprocessor(&self) -> Option<&Arc<FittedPreprocessor>> {
        self.preprocessor.as_ref()
    }

    pub fn report(&self) -> Option<&TrainingReport> {
        self.report.as_ref()
    }

    pub fn is_trained(&self) -> bool {
        self.q.is_some()
    }

    /// Trains on `batch`. With `preprocess = true` the raw batch is first
    /// mapped through the internal preprocessor; with `false` states and
    /// rewards are used as given (already preprocessed when the agent has a
    /// preprocessor).
    pub fn train(&mut self, batch: &TrajectoryBatch, max_iter: usize, preprocess: bool) -> Result<TrainingReport> {
        batch.check_actions(self.config.num_actions)?;
        let (states, rewards): (Array3<f64>, Array2<f64>) = match (&self.preprocessor, preprocess) {
            (None, true) => {
                return Err(Error::Config("preprocess = true requires an internal preprocessor".into()));
            }
            (Some(pre), true) => pre.preprocess_batch(batch)?,
            (Some(pre), false) => {
                if batch.state_dim() != pre.augmented_dim() {
                    return Err(Error::Shape(format!(
                        "expected preprocessed states of width {}, got {}",
                        pre.augmented_dim(),
                        batch.state_dim()
                    )));
                }
                (batch.states.clone(), batch.rewards.clone())
            }
            (None, false) => (batch.states.clone(), batch.rewards.clone()),
        };
        let features: Vec<Array2<f64>> = (0..=batch.horizon())
            .map(|t| stack_features(&batch.zs.view(), &states.slice(s![.., t, ..]), self.config.include_attribute))
            .collect();
        let tuples = build_tuples(&features, &batch.actions.view(), &rewards.view());
        let required = vec![true; self.config.num_actions];
        let settings = IterationSettings {
            spec: &self.config.reg_spec,
            discount: self.config.discount,
            max_iter,
            tolerance: self.config.tolerance,
            required: &required,
        };
        let (q, report) = iterate(&tuples, &settings, None)?;
        self.q = Some(q);
        self.report = Some(report.clone());
        Ok(report)
    }

    /// Feature rows the Q-models consume at the history's current time.
    pub fn features(&self, history: &History<'_>) -> Result<Array2<f64>> {
        let state = match &self.preprocessor {
            Some(pre) => {
                let aug = pre.preprocess_states(&history.zs, &history.states, &history.actions)?;
                aug.slice(s![.., history.time(), ..]).to_owned()
            }
            None => history.current_states().to_owned(),
        };
        Ok(stack_features(&history.zs, &state.view(), self.config.include_attribute))
    }

    /// `n × A` action values for feature rows.
    pub fn q_values(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        let q = self.q.as_ref().ok_or_else(|| Error::State("agent has not been trained".into()))?;
        q.predict(features)
    }

    /// Greedy action distribution for one individual with raw history
    /// `states[0..=t]` and `actions[0..t]`.
    pub fn act(&self, z: &[f64], states: &[Vec<f64>], actions: &[usize]) -> Result<Vec<f64>> {
        if states.len() != actions.len() + 1 || states.is_empty() {
            return Err(Error::Shape("history needs one more state than actions".into()));
        }
        let d = states[0].len();
        let zs = Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("row");
        let flat: Vec<f64> = states.iter().flatten().copied().collect();
        let st = Array3::from_shape_vec((1, states.len(), d), flat)
            .map_err(|_| Error::Shape("states of unequal width".into()))?;
        let acts = Array2::from_shape_vec((1, actions.len()), actions.to_vec()).expect("row");
        let h = History::new(zs.view(), st.view(), acts.view())?;
        Ok(self.action_probs(&h)?.row(0).to_vec())
    }

    pub fn to_blob(&self) -> Result<AgentBlob> {
        Ok(AgentBlob {
            format: AGENT_FORMAT.to_string(),
            version: AGENT_VERSION,
            config: self.config.clone(),
            q_models: self.q.clone().ok_or_else(|| Error::State("agent has not been trained".into()))?,
            preprocessor: self.preprocessor.as_ref().map(|p| p.to_blob()).transpose()?,
            report: self.report.clone(),
        })
    }
}

impl Policy for FqiAgent {
    fn num_actions(&self) -> usize {
        self.config.num_actions
    }

    fn action_probs(&self, history: &History<'_>) -> Result<Array2<f64>> {
        let q = self.q_values(&self.features(history)?)?;
        Ok(greedy(&q.view()))
    }

    fn state_features(&self, history: &History<'_>) -> Result<Option<Array2<f64>>> {
        match &self.preprocessor {
            Some(pre) => {
                let aug = pre.preprocess_states(&history.zs, &history.states, &history.actions)?;
                Ok(Some(aug.slice(s![.., history.time(), ..]).to_owned()))
            }
            None => Ok(None),
        }
    }

    fn uses_preprocessor(&self) -> bool {
        self.preprocessor.is_some()
    }
}

/// Serialized agent: Q-model blobs plus manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentBlob {
    pub format: String,
    pub version: u32,
    pub config: FqiConfig,
    pub q_models: ActionValues,
    pub preprocessor: Option<PreprocessorBlob>,
    pub report: Option<TrainingReport>,
}

impl AgentBlob {
    pub fn into_agent(self) -> Result<FqiAgent> {
        if self.format != AGENT_FORMAT || self.version != AGENT_VERSION {
            return Err(Error::Serialization(format!("unsupported agent blob {} v{}", self.format, self.version)));
        }
        if self.q_models.num_actions() != self.config.num_actions {
            return Err(Error::Serialization("Q-model count differs from num_actions".into()));
        }
        Ok(FqiAgent {
            config: self.config,
            preprocessor: self.preprocessor.map(|p| p.into_preprocessor().map(Arc::new)).transpose()?,
            q: Some(self.q_models),
            report: self.report,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func_approx;
    use ndarray::{array, Array3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(n: usize, horizon: usize) -> TrajectoryBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zs = Array2::from_shape_fn((n, 1), |(i, _)| (i % 2) as f64);
        let states = Array3::from_shape_fn((n, horizon + 1, 1), |_| rng.random_range(-1.0..1.0));
        let actions = Array2::from_shape_fn((n, horizon), |_| rng.random_range(0..2));
        let rewards = Array2::from_shape_fn((n, horizon), |(i, t)| states[[i, t, 0]] * (actions[[i, t]] as f64 - 0.5));
        TrajectoryBatch::with_default_ids(zs, states, actions, rewards).unwrap()
    }

    #[test]
    fn myopic_q_is_reward_regression() {
        let batch = random_batch(40, 3);
        let mut config = FqiConfig::new(2, RegressorSpec::linear());
        config.discount = 0.0;
        let mut agent = FqiAgent::new(config);
        let report = agent.train(&batch, 50, false).unwrap();
        assert_eq!(report.iterations, 1);
        assert!(report.converged);
        // direct regression of reward on state within action 1
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..batch.len() {
            for t in 0..3 {
                if batch.actions[[i, t]] == 1 {
                    xs.push(batch.states[[i, t, 0]]);
                    ys.push(batch.rewards[[i, t]]);
                }
            }
        }
        let x = Array2::from_shape_vec((xs.len(), 1), xs).unwrap();
        let y = Array2::from_shape_vec((ys.len(), 1), ys).unwrap();
        let (direct, _) = func_approx::fit(&RegressorSpec::linear(), &x.view(), &y.view()).unwrap();
        let probe = array![[-0.5], [0.25]];
        let q = agent.q_values(&probe).unwrap();
        let d = direct.predict(&probe.view()).unwrap();
        for k in 0..2 {
            assert!((q[[k, 1]] - d[[k, 0]]).abs() < 1e-10);
        }
    }

    #[test]
    fn untrained_and_misconfigured() {
        let agent = FqiAgent::new(FqiConfig::new(2, RegressorSpec::linear()));
        assert!(matches!(agent.act(&[0.0], &[vec![0.0]], &[]), Err(Error::State(_))));
        let mut agent = agent;
        let batch = random_batch(6, 2);
        assert!(matches!(agent.train(&batch, 5, true), Err(Error::Config(_))));
        let mut one_sided = batch.clone();
        one_sided.actions.fill(0);
        assert!(matches!(agent.train(&one_sided, 5, false), Err(Error::EmptyActionStratum(1))));
    }

    #[test]
    fn zero_q_models_pick_action_zero() {
        let mut batch = random_batch(10, 2);
        batch.rewards.fill(0.0);
        let mut agent = FqiAgent::new(FqiConfig::new(2, RegressorSpec::linear()));
        agent.train(&batch, 10, false).unwrap();
        for x in [-1.0, 0.0, 0.7] {
            assert_eq!(agent.act(&[0.0], &[vec![x]], &[]).unwrap(), vec![1.0, 0.0]);
        }
    }

    #[test]
    fn blob_round_trip() {
        let batch = random_batch(20, 2);
        let mut config = FqiConfig::new(2, RegressorSpec::linear());
        config.include_attribute = true;
        let mut agent = FqiAgent::new(config);
        agent.train(&batch, 20, false).unwrap();
        let text = serde_json::to_string(&agent.to_blob().unwrap()).unwrap();
        let back = serde_json::from_str::<AgentBlob>(&text).unwrap().into_agent().unwrap();
        let h = History::new(batch.zs.view(), batch.states.slice(s![.., ..1, ..]), batch.actions.slice(s![.., ..0])).unwrap();
        assert_eq!(agent.action_probs(&h).unwrap(), back.action_probs(&h).unwrap());
    }
}
