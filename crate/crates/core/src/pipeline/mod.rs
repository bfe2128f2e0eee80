//! Config-driven runner for the workflow sample → split → preprocess →
//! train → fit environment → evaluate → compare.
//!
//! Each stage reads and writes documented files under the output
//! directory, so subcommands can be chained across processes:
//!
//! ```text
//! manifest.json                 config echo, seeds, per-stage timings
//! data/trajectories.csv         full data set
//! data/train.csv, data/test.csv split
//! data/preprocessed_train.csv   cross-fitted augmented states and rewards
//! models/preprocessor.json
//! models/agent.json             serialized policy
//! models/environment.json       fitted simulated environment
//! reports/*_diagnostics.json    fit and iteration reports per stage
//! reports/metrics.{csv,txt}     value and counterfactual unfairness
//! reports/comparison.{csv,txt}  baseline table
//! ```

mod config;

pub use config::{
    AgentSection, DataConfig, EnvironmentSection, EvaluationSection, PipelineConfig, PreprocessorSection, SplitConfig,
    SCHEMA_VERSION,
};

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::agents::{baseline_policy, AgentBlob, ConstantPolicy, FqiAgent, Policy, RandomPolicy, TrainingReport};
use crate::environment::{demo_env, sample_demo_attributes, sample_trajectories, SimulatedEnvBlob, SimulatedEnvironment, SimulatedFitReports};
use crate::error::Error;
use crate::evaluation::{
    compare_baselines, evaluate_fairness_through_model, evaluate_value_through_fqe, evaluate_value_through_model, ComparisonTable,
};
use crate::preprocessor::{train_preprocessor, FittedPreprocessor, PreprocessorBlob};
use crate::seeds::derive_seed;
use crate::trajectory::{read_trajectory_from_csv, train_test_split, write_trajectory_to_csv, ColumnLabels, TrajectoryBatch};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAJECTORIES_FILE: &str = "data/trajectories.csv";
pub const TRAIN_FILE: &str = "data/train.csv";
pub const TEST_FILE: &str = "data/test.csv";
pub const PREPROCESSED_FILE: &str = "data/preprocessed_train.csv";
pub const PREPROCESSOR_FILE: &str = "models/preprocessor.json";
pub const AGENT_FILE: &str = "models/agent.json";
pub const ENVIRONMENT_FILE: &str = "models/environment.json";
pub const METRICS_CSV: &str = "reports/metrics.csv";
pub const METRICS_TXT: &str = "reports/metrics.txt";
pub const COMPARISON_CSV: &str = "reports/comparison.csv";
pub const COMPARISON_TXT: &str = "reports/comparison.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Data,
    Split,
    Preprocess,
    Train,
    FitEnvironment,
    Evaluate,
    Compare,
}

impl Stage {
    pub const PIPELINE: [Stage; 7] = [
        Stage::Data,
        Stage::Split,
        Stage::Preprocess,
        Stage::Train,
        Stage::FitEnvironment,
        Stage::Evaluate,
        Stage::Compare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Data => "data",
            Stage::Split => "split",
            Stage::Preprocess => "preprocess",
            Stage::Train => "train",
            Stage::FitEnvironment => "fit_environment",
            Stage::Evaluate => "evaluate",
            Stage::Compare => "compare",
        }
    }

    pub fn parse(name: &str) -> Option<Stage> {
        Stage::PIPELINE.into_iter().chain([Stage::Config]).find(|s| s.name() == name)
    }

    /// Process exit code when this stage fails.
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Data | Stage::Split => 3,
            Stage::Preprocess | Stage::Train | Stage::FitEnvironment => 4,
            Stage::Evaluate | Stage::Compare => 5,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        self.stage.exit_code()
    }
}

type StageResult<T> = std::result::Result<T, PipelineError>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T, E: Into<Error>> AtStage<T> for std::result::Result<T, E> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|e| PipelineError { stage, source: e.into() })
    }
}

/// Entry points of the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Simulate,
    Preprocess,
    Train,
    Evaluate,
    Compare,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Simulate => "simulate",
            Command::Preprocess => "preprocess",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Compare => "compare",
        }
    }
}

// ── Manifest ──

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub seconds: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub schema_version: u32,
    pub seeds: Vec<(String, u64)>,
    pub config: PipelineConfig,
    pub stages: Vec<StageRecord>,
    pub status: String,
    pub error: Option<String>,
}

/// Serialized policy accepted by `evaluate` and `compare`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum PolicyBlob {
    Fqi(AgentBlob),
    Random { num_actions: usize },
    Constant { num_actions: usize, action: usize },
}

impl PolicyBlob {
    pub fn into_policy(self) -> crate::error::Result<Box<dyn Policy>> {
        Ok(match self {
            PolicyBlob::Fqi(blob) => Box::new(blob.into_agent()?),
            PolicyBlob::Random { num_actions } => Box::new(RandomPolicy { num_actions }),
            PolicyBlob::Constant { num_actions, action } => {
                if action >= num_actions {
                    return Err(Error::Config(format!("constant action {action} outside 0..{num_actions}")));
                }
                Box::new(ConstantPolicy { num_actions, action })
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub value_fqe: f64,
    pub fqe_converged: bool,
    pub value_model: f64,
    pub value_model_se: f64,
    pub cf_metric: f64,
    pub cf_per_time: Vec<f64>,
    pub num_individuals: usize,
    pub warnings: Vec<String>,
}

impl Metrics {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        out.push_str(&format!("value_fqe,{}\n", self.value_fqe));
        out.push_str(&format!("value_model,{}\n", self.value_model));
        out.push_str(&format!("value_model_se,{}\n", self.value_model_se));
        out.push_str(&format!("cf_metric,{}\n", self.cf_metric));
        for (t, v) in self.cf_per_time.iter().enumerate() {
            out.push_str(&format!("cf_t{t},{v}\n"));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("individuals evaluated            {}\n", self.num_individuals));
        out.push_str(&format!("value (FQE)                      {:.3}\n", self.value_fqe));
        out.push_str(&format!(
            "value (simulated environment)    {:.3} (se {:.3})\n",
            self.value_model, self.value_model_se
        ));
        out.push_str(&format!("counterfactual unfairness level  {:.3}\n", self.cf_metric));
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

// ── Runner ──

/// State shared between stages of one invocation.
pub struct Runner {
    config: PipelineConfig,
    root: PathBuf,
    manifest: Manifest,
    full: Option<TrajectoryBatch>,
    train: Option<TrajectoryBatch>,
    test: Option<TrajectoryBatch>,
    preprocessor: Option<Arc<FittedPreprocessor>>,
    preprocessed: Option<TrajectoryBatch>,
    policy: Option<Box<dyn Policy>>,
    env: Option<SimulatedEnvironment>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> crate::error::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> crate::error::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_batch(batch: &TrajectoryBatch, labels: &ColumnLabels, path: PathBuf) -> crate::error::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    write_trajectory_to_csv(batch, labels, path)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> crate::error::Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::State(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn nonconverged_warning(what: &str, count: usize, total: usize) -> Option<String> {
    (count > 0).then(|| format!("{count} of {total} {what} fits stopped at max_epochs before converging"))
}

fn iteration_warning(what: &str, report: &TrainingReport) -> Vec<String> {
    let mut out = Vec::new();
    if !report.converged {
        out.push(format!("{what} stopped after {} iterations without converging", report.iterations));
    }
    out.extend(nonconverged_warning(&format!("{what} regression"), report.nonconverged_fits, report.total_fits));
    out
}

impl Runner {
    /// `output` overrides the config's `output_dir`.
    pub fn new(config: PipelineConfig, output: Option<PathBuf>, command: Command) -> StageResult<Self> {
        let root = output
            .or_else(|| config.output_dir.clone())
            .ok_or_else(|| Error::Config("no output directory (set output_dir or pass --output)".into()))
            .at(Stage::Config)?;
        let manifest = Manifest {
            tool: "cfrl".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.name().into(),
            schema_version: config.schema_version,
            seeds: config.seeds(),
            config: config.clone(),
            stages: Vec::new(),
            status: "running".into(),
            error: None,
        };
        let runner = Self {
            config,
            root,
            manifest,
            full: None,
            train: None,
            test: None,
            preprocessor: None,
            preprocessed: None,
            policy: None,
            env: None,
        };
        runner.save_manifest().at(Stage::Config)?;
        Ok(runner)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn save_manifest(&self) -> crate::error::Result<()> {
        write_json(&self.path(MANIFEST_FILE), &self.manifest)
    }

    fn labels(&self) -> ColumnLabels {
        self.config.data.labels()
    }

    fn preprocessed_labels(&self) -> ColumnLabels {
        let base = self.labels();
        let width = self.config.preprocessor.z_space.len() * base.state.len();
        ColumnLabels {
            state: (1..=width).map(|j| format!("state{j}")).collect(),
            ..base
        }
    }

    fn read_batch(&self, rel: &str, labels: &ColumnLabels, stage: Stage) -> StageResult<TrajectoryBatch> {
        read_trajectory_from_csv(self.path(rel), labels, self.config.data.horizon(), Some(self.config.num_actions)).at(stage)
    }

    /// Runs `stage`, recording its wall-clock time in the manifest.
    fn timed<T>(&mut self, stage: Stage, f: impl FnOnce(&mut Self) -> StageResult<T>) -> StageResult<T> {
        info!("stage {stage} started");
        let start = Instant::now();
        let out = f(self);
        let seconds = start.elapsed().as_secs_f64();
        self.manifest.stages.push(StageRecord {
            stage,
            seconds,
            ok: out.is_ok(),
        });
        if let Err(e) = &out {
            self.manifest.status = "failed".into();
            self.manifest.error = Some(e.to_string());
        }
        self.save_manifest().at(stage)?;
        info!("stage {stage} finished in {seconds:.2}s");
        out
    }

    fn finish(&mut self) -> StageResult<()> {
        self.manifest.status = "ok".into();
        self.save_manifest().at(Stage::Config)
    }

    // ── Stages ──

    fn stage_data(&mut self) -> StageResult<()> {
        let batch = match &self.config.data {
            DataConfig::Demo {
                num_individuals,
                horizon,
                seed,
                params,
            } => {
                let env = demo_env(*params);
                let zs = sample_demo_attributes(*num_individuals, derive_seed(*seed, &[0]));
                let behaviour = RandomPolicy {
                    num_actions: self.config.num_actions,
                };
                sample_trajectories(&env, &zs.view(), &behaviour, *horizon, derive_seed(*seed, &[1])).at(Stage::Data)?
            }
            DataConfig::Csv { path, horizon, columns } => {
                if !path.is_file() {
                    return Err(Error::Value {
                        location: path.display().to_string(),
                        message: "data file does not exist".into(),
                    })
                    .at(Stage::Data);
                }
                read_trajectory_from_csv(path, columns, *horizon, Some(self.config.num_actions)).at(Stage::Data)?
            }
        };
        write_batch(&batch, &self.labels(), self.path(TRAJECTORIES_FILE)).at(Stage::Data)?;
        info!("{} trajectories of {} steps", batch.len(), batch.horizon());
        self.full = Some(batch);
        Ok(())
    }

    fn stage_split(&mut self) -> StageResult<()> {
        let full = match self.full.take() {
            Some(b) => b,
            None => self.read_batch(TRAJECTORIES_FILE, &self.labels(), Stage::Split)?,
        };
        let (train, test) = train_test_split(&full, self.config.split.test_fraction, self.config.split.seed).at(Stage::Split)?;
        write_batch(&train, &self.labels(), self.path(TRAIN_FILE)).at(Stage::Split)?;
        write_batch(&test, &self.labels(), self.path(TEST_FILE)).at(Stage::Split)?;
        self.full = Some(full);
        self.train = Some(train);
        self.test = Some(test);
        Ok(())
    }

    fn train_batch(&mut self, stage: Stage) -> StageResult<TrajectoryBatch> {
        match &self.train {
            Some(b) => Ok(b.clone()),
            None => {
                let b = self.read_batch(TRAIN_FILE, &self.labels(), stage)?;
                self.train = Some(b.clone());
                Ok(b)
            }
        }
    }

    fn test_batch(&mut self, stage: Stage) -> StageResult<TrajectoryBatch> {
        match &self.test {
            Some(b) => Ok(b.clone()),
            None => {
                let b = self.read_batch(TEST_FILE, &self.labels(), stage)?;
                self.test = Some(b.clone());
                Ok(b)
            }
        }
    }

    fn stage_preprocess(&mut self) -> StageResult<()> {
        let train = self.train_batch(Stage::Preprocess)?;
        let config = self.config.preprocessor_config();
        let (pre, states, rewards) = train_preprocessor(&config, &train).at(Stage::Preprocess)?;
        let preprocessed = train.with_states_and_rewards(states, rewards).at(Stage::Preprocess)?;
        write_batch(&preprocessed, &self.preprocessed_labels(), self.path(PREPROCESSED_FILE)).at(Stage::Preprocess)?;
        let blob = pre.to_blob().at(Stage::Preprocess)?;
        write_json(&self.path(PREPROCESSOR_FILE), &blob).at(Stage::Preprocess)?;
        let nonconverged = pre.reports().iter().filter(|r| !r.report.converged).count();
        let warnings: Vec<String> = nonconverged_warning("preprocessor", nonconverged, pre.reports().len()).into_iter().collect();
        for w in &warnings {
            warn!("{w}");
        }
        write_json(
            &self.path("reports/preprocess_diagnostics.json"),
            &serde_json::json!({
                "fits": pre.reports().len(),
                "nonconverged_fits": nonconverged,
                "warnings": warnings,
            }),
        )
        .at(Stage::Preprocess)?;
        self.preprocessor = Some(Arc::new(pre));
        self.preprocessed = Some(preprocessed);
        Ok(())
    }

    fn stage_train(&mut self) -> StageResult<()> {
        let pre = match &self.preprocessor {
            Some(p) => p.clone(),
            None => {
                let blob: PreprocessorBlob = read_json(&self.path(PREPROCESSOR_FILE)).at(Stage::Train)?;
                Arc::new(blob.into_preprocessor().at(Stage::Train)?)
            }
        };
        let preprocessed = match self.preprocessed.take() {
            Some(b) => b,
            None => self.read_batch(PREPROCESSED_FILE, &self.preprocessed_labels(), Stage::Train)?,
        };
        let mut agent = FqiAgent::with_preprocessor(self.config.fqi_config(), pre.clone());
        let report = agent.train(&preprocessed, self.config.agent.max_iter, false).at(Stage::Train)?;
        let warnings = iteration_warning("fitted Q-iteration", &report);
        for w in &warnings {
            warn!("{w}");
        }
        let blob = PolicyBlob::Fqi(agent.to_blob().at(Stage::Train)?);
        write_json(&self.path(AGENT_FILE), &blob).at(Stage::Train)?;
        write_json(
            &self.path("reports/train_diagnostics.json"),
            &serde_json::json!({ "fqi": report, "warnings": warnings }),
        )
        .at(Stage::Train)?;
        self.preprocessor = Some(pre);
        self.preprocessed = Some(preprocessed);
        self.policy = Some(Box::new(agent));
        Ok(())
    }

    fn stage_fit_environment(&mut self) -> StageResult<()> {
        let full = match self.full.take() {
            Some(b) => b,
            None => self.read_batch(TRAJECTORIES_FILE, &self.labels(), Stage::FitEnvironment)?,
        };
        let e = &self.config.environment;
        let mut env = SimulatedEnvironment::new(self.config.num_actions, e.state_spec.clone(), e.reward_spec.clone())
            .at(Stage::FitEnvironment)?;
        let reports: SimulatedFitReports = env.fit(&full).at(Stage::FitEnvironment)?;
        let mut warnings = Vec::new();
        for (name, r) in [("initial-state", &reports.initial), ("transition", &reports.transition), ("reward", &reports.reward)] {
            if !r.converged {
                warnings.push(format!("{name} model stopped at max_epochs before converging"));
            }
        }
        for w in &warnings {
            warn!("{w}");
        }
        write_json(&self.path(ENVIRONMENT_FILE), &env.to_blob().at(Stage::FitEnvironment)?).at(Stage::FitEnvironment)?;
        write_json(
            &self.path("reports/environment_diagnostics.json"),
            &serde_json::json!({ "fits": reports, "warnings": warnings }),
        )
        .at(Stage::FitEnvironment)?;
        self.full = Some(full);
        self.env = Some(env);
        Ok(())
    }

    fn load_policy(&mut self, stage: Stage) -> StageResult<()> {
        if self.policy.is_none() {
            let blob: PolicyBlob = read_json(&self.path(AGENT_FILE)).at(stage)?;
            self.policy = Some(blob.into_policy().at(stage)?);
        }
        Ok(())
    }

    fn load_env(&mut self, stage: Stage) -> StageResult<()> {
        if self.env.is_none() {
            if self.path(ENVIRONMENT_FILE).is_file() {
                let blob: SimulatedEnvBlob = read_json(&self.path(ENVIRONMENT_FILE)).at(stage)?;
                self.env = Some(blob.into_environment().at(stage)?);
            } else {
                self.timed(Stage::FitEnvironment, Self::stage_fit_environment)?;
            }
        }
        Ok(())
    }

    fn stage_evaluate(&mut self) -> StageResult<()> {
        self.load_policy(Stage::Evaluate)?;
        self.load_env(Stage::Evaluate)?;
        let test = self.test_batch(Stage::Evaluate)?;
        let policy = self.policy.as_deref().expect("loaded");
        let env = self.env.as_ref().expect("loaded");
        let ev = &self.config.evaluation;
        let fqe = evaluate_value_through_fqe(&test, policy, &ev.fqe).at(Stage::Evaluate)?;
        let model = evaluate_value_through_model(
            env,
            &test.zs,
            policy,
            test.horizon(),
            ev.fqe.discount,
            ev.num_reps,
            derive_seed(ev.seed, &[1]),
        )
        .at(Stage::Evaluate)?;
        let cf = evaluate_fairness_through_model(env, &test, &self.config.preprocessor.z_space, policy, ev.num_reps, derive_seed(ev.seed, &[0]))
            .at(Stage::Evaluate)?;
        let training = fqe.training.clone().expect("fqe reports iterations");
        let warnings = iteration_warning("fitted Q-evaluation", &training);
        for w in &warnings {
            warn!("{w}");
        }
        let metrics = Metrics {
            value_fqe: fqe.value,
            fqe_converged: training.converged,
            value_model: model.value,
            value_model_se: model.standard_error.unwrap_or(0.0),
            cf_metric: cf.cf_metric,
            cf_per_time: cf.per_time.clone(),
            num_individuals: test.len(),
            warnings,
        };
        write_text(&self.path(METRICS_CSV), &metrics.to_csv()).at(Stage::Evaluate)?;
        write_text(&self.path(METRICS_TXT), &metrics.to_text()).at(Stage::Evaluate)?;
        write_json(
            &self.path("reports/evaluate_diagnostics.json"),
            &serde_json::json!({ "fqe": training, "cf": cf, "warnings": metrics.warnings }),
        )
        .at(Stage::Evaluate)?;
        info!("value {:.3}, cf_metric {:.3}", metrics.value_fqe, metrics.cf_metric);
        Ok(())
    }

    fn stage_compare(&mut self) -> StageResult<()> {
        if self.config.evaluation.baselines.is_empty() {
            info!("no baselines configured; skipping comparison");
            return Ok(());
        }
        self.load_policy(Stage::Compare)?;
        self.load_env(Stage::Compare)?;
        let train = self.train_batch(Stage::Compare)?;
        let test = self.test_batch(Stage::Compare)?;
        let fqi = self.config.fqi_config();
        let baselines: Vec<(String, Box<dyn Policy>)> = self
            .config
            .evaluation
            .baselines
            .iter()
            .map(|&kind| {
                let p = baseline_policy(kind, Some(&train), &fqi, self.config.agent.max_iter)?;
                Ok((kind.to_string(), Box::new(p) as Box<dyn Policy>))
            })
            .collect::<crate::error::Result<_>>()
            .at(Stage::Compare)?;
        let mut named: Vec<(String, &dyn Policy)> = baselines.iter().map(|(n, p)| (n.clone(), p.as_ref())).collect();
        named.push(("Ours".to_string(), self.policy.as_deref().expect("loaded")));
        let ev = &self.config.evaluation;
        let table: ComparisonTable = compare_baselines(
            self.env.as_ref().expect("loaded"),
            &test,
            &self.config.preprocessor.z_space,
            &named,
            &ev.fqe,
            ev.num_reps,
            derive_seed(ev.seed, &[0]),
        )
        .at(Stage::Compare)?;
        write_text(&self.path(COMPARISON_CSV), &table.to_csv()).at(Stage::Compare)?;
        write_text(&self.path(COMPARISON_TXT), &table.to_text()).at(Stage::Compare)?;
        info!("comparison:\n{}", table.to_text());
        Ok(())
    }

    fn run_stage(&mut self, stage: Stage) -> StageResult<()> {
        match stage {
            Stage::Config => Ok(()),
            Stage::Data => self.timed(stage, Self::stage_data),
            Stage::Split => self.timed(stage, Self::stage_split),
            Stage::Preprocess => self.timed(stage, Self::stage_preprocess),
            Stage::Train => self.timed(stage, Self::stage_train),
            Stage::FitEnvironment => self.timed(stage, Self::stage_fit_environment),
            Stage::Evaluate => self.timed(stage, Self::stage_evaluate),
            Stage::Compare => self.timed(stage, Self::stage_compare),
        }
    }
}

/// Executes `command`. For [`Command::Run`], `until` stops the pipeline
/// after the named stage.
pub fn execute(config: PipelineConfig, output: Option<PathBuf>, command: Command, until: Option<Stage>) -> StageResult<PathBuf> {
    let mut runner = Runner::new(config, output, command)?;
    let stages: Vec<Stage> = match command {
        Command::Run => {
            let last = until.unwrap_or(Stage::Compare);
            Stage::PIPELINE.into_iter().take_while(|&s| s <= last).collect()
        }
        Command::Simulate => vec![Stage::Data],
        Command::Preprocess => vec![Stage::Data, Stage::Split, Stage::Preprocess],
        Command::Train => vec![Stage::Train],
        Command::Evaluate => vec![Stage::Evaluate],
        Command::Compare => vec![Stage::Compare],
    };
    for stage in stages {
        runner.run_stage(stage)?;
    }
    runner.finish()?;
    Ok(runner.root)
}

/// Same as [`execute`] for a config file path; read errors belong to the
/// config stage.
pub fn execute_file(path: &Path, output: Option<PathBuf>, command: Command, until: Option<Stage>) -> StageResult<PathBuf> {
    let config = PipelineConfig::load(path).at(Stage::Config)?;
    execute(config, output, command, until)
}
