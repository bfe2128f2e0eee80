use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::BaselineKind;
use crate::environment::DemoParams;
use crate::error::{Error, Result};
use crate::evaluation::FqeSettings;
use crate::func_approx::RegressorSpec;
use crate::preprocessor::{PreprocessorConfig, MODE_SINGLE};
use crate::trajectory::ColumnLabels;

pub const SCHEMA_VERSION: u32 = 1;

/// A pipeline run, read from TOML. Every seed is a required field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub num_actions: usize,
    /// Overridden by `--output`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub preprocessor: PreprocessorSection,
    pub agent: AgentSection,
    pub environment: EnvironmentSection,
    pub evaluation: EvaluationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataConfig {
    /// Trajectories sampled from the demo environment under the uniform
    /// random behaviour policy.
    Demo {
        num_individuals: usize,
        horizon: usize,
        seed: u64,
        #[serde(default)]
        params: DemoParams,
    },
    Csv {
        path: PathBuf,
        horizon: usize,
        columns: ColumnLabels,
    },
}

impl DataConfig {
    pub fn horizon(&self) -> usize {
        match self {
            DataConfig::Demo { horizon, .. } | DataConfig::Csv { horizon, .. } => *horizon,
        }
    }

    /// Column names used for every trajectory file of the run.
    pub fn labels(&self) -> ColumnLabels {
        match self {
            DataConfig::Demo { .. } => ColumnLabels::default_for(1, 1),
            DataConfig::Csv { columns, .. } => columns.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessorSection {
    pub z_space: Vec<Vec<f64>>,
    pub cross_folds: usize,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default)]
    pub pool_time: bool,
    /// Fold-assignment seed.
    pub seed: u64,
    pub reg_spec: RegressorSpec,
}

fn default_mode() -> String {
    MODE_SINGLE.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub discount: f64,
    pub max_iter: usize,
    #[serde(default = "default_fqi_tolerance")]
    pub tolerance: f64,
    pub reg_spec: RegressorSpec,
}

fn default_fqi_tolerance() -> f64 {
    crate::agents::fqi::DEFAULT_FQI_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    pub state_spec: RegressorSpec,
    pub reward_spec: RegressorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    #[serde(default = "default_reps")]
    pub num_reps: usize,
    pub seed: u64,
    pub fqe: FqeSettings,
    /// Baselines compared against the trained agent, in column order.
    #[serde(default)]
    pub baselines: Vec<BaselineKind>,
}

fn default_reps() -> usize {
    crate::evaluation::DEFAULT_FAIRNESS_REPS
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.num_actions == 0 {
            return Err(Error::Config("num_actions must be positive".into()));
        }
        match &self.data {
            DataConfig::Demo { num_individuals, horizon, .. } => {
                if *num_individuals < 2 || *horizon == 0 {
                    return Err(Error::Config("demo data needs at least 2 individuals and 1 step".into()));
                }
                if self.num_actions != 2 {
                    return Err(Error::Config("the demo environment has 2 actions".into()));
                }
            }
            DataConfig::Csv { horizon, .. } => {
                if *horizon == 0 {
                    return Err(Error::Config("horizon must be positive".into()));
                }
            }
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(Error::Config("split.test_fraction must lie in (0, 1)".into()));
        }
        self.preprocessor_config().validate()?;
        if !(0.0..1.0).contains(&self.agent.discount) || !(0.0..1.0).contains(&self.evaluation.fqe.discount) {
            return Err(Error::Config("discounts must lie in [0, 1)".into()));
        }
        if self.agent.max_iter == 0 || self.evaluation.fqe.max_iter == 0 || self.evaluation.num_reps == 0 {
            return Err(Error::Config("max_iter and num_reps must be positive".into()));
        }
        for spec in [
            &self.agent.reg_spec,
            &self.environment.state_spec,
            &self.environment.reward_spec,
            &self.evaluation.fqe.reg_spec,
        ] {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn preprocessor_config(&self) -> PreprocessorConfig {
        let p = &self.preprocessor;
        PreprocessorConfig {
            z_space: p.z_space.clone(),
            num_actions: self.num_actions,
            cross_folds: p.cross_folds,
            mode: p.mode.clone(),
            reg_spec: p.reg_spec.clone(),
            seed: p.seed,
            pool_time: p.pool_time,
        }
    }

    pub fn fqi_config(&self) -> crate::agents::FqiConfig {
        crate::agents::FqiConfig {
            num_actions: self.num_actions,
            reg_spec: self.agent.reg_spec.clone(),
            discount: self.agent.discount,
            tolerance: self.agent.tolerance,
            include_attribute: false,
        }
    }

    /// Every seed in the config, by dotted path.
    pub fn seeds(&self) -> Vec<(String, u64)> {
        let mut out = Vec::new();
        if let DataConfig::Demo { seed, .. } = &self.data {
            out.push(("data.seed".to_string(), *seed));
        }
        out.push(("split.seed".into(), self.split.seed));
        out.push(("preprocessor.seed".into(), self.preprocessor.seed));
        out.push(("preprocessor.reg_spec.seed".into(), self.preprocessor.reg_spec.seed));
        out.push(("agent.reg_spec.seed".into(), self.agent.reg_spec.seed));
        out.push(("environment.state_spec.seed".into(), self.environment.state_spec.seed));
        out.push(("environment.reward_spec.seed".into(), self.environment.reward_spec.seed));
        out.push(("evaluation.seed".into(), self.evaluation.seed));
        out.push(("evaluation.fqe.reg_spec.seed".into(), self.evaluation.fqe.reg_spec.seed));
        out
    }
}

#[cfg(test)]
pub(crate) const DEMO_TOML: &str = r#"
schema_version = 1
num_actions = 2

[data]
source = "demo"
num_individuals = 60
horizon = 4
seed = 1

[split]
test_fraction = 0.25
seed = 2

[preprocessor]
z_space = [[0.0], [1.0]]
cross_folds = 2
pool_time = true
seed = 3
reg_spec = { model_type = "linear", max_epochs = 1, learning_rate = 0.01, tolerance = 1e-5, seed = 4 }

[agent]
discount = 0.9
max_iter = 50
reg_spec = { model_type = "linear", max_epochs = 1, learning_rate = 0.01, tolerance = 1e-5, seed = 5 }

[environment]
state_spec = { model_type = "linear", max_epochs = 1, learning_rate = 0.01, tolerance = 1e-5, seed = 6 }
reward_spec = { model_type = "linear", max_epochs = 1, learning_rate = 0.01, tolerance = 1e-5, seed = 7 }

[evaluation]
num_reps = 3
seed = 8
baselines = ["random", "full", "unaware"]
fqe = { discount = 0.9, max_iter = 50, tolerance = 1e-4, reg_spec = { model_type = "linear", max_epochs = 1, learning_rate = 0.01, tolerance = 1e-5, seed = 9 } }
"#;
