//! Supervised regression backend shared by every fitted model in the crate.
//!
//! Two model families sit behind one [`Regressor`] type: exact ridge least
//! squares and a ReLU multilayer perceptron. Inputs are standardized with
//! training statistics before either family sees them; network targets are
//! standardized as well. Every fit returns a [`FitReport`] so callers can
//! surface non-convergence instead of silently using an undertrained model.

pub mod linear;
pub mod mlp;
pub mod scaler;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use linear::LinearModel;
pub use mlp::Mlp;
pub use scaler::Scaler;

/// Ridge penalty for the linear family.
pub const RIDGE_PENALTY: f64 = 1e-8;
/// Number of epochs over which the relative loss change is measured.
pub const CONVERGENCE_WINDOW: usize = 10;

pub const REGRESSOR_FORMAT: &str = "cfrl-regressor";
pub const REGRESSOR_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelType {
    Linear,
    Nn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
    Sgd,
}

fn default_hidden() -> Vec<usize> {
    vec![64]
}

/// Hyperparameters of one regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressorSpec {
    pub model_type: ModelType,
    #[serde(default = "default_hidden")]
    pub hidden_sizes: Vec<usize>,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub tolerance: f64,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: Optimizer,
}

impl RegressorSpec {
    pub fn linear() -> Self {
        Self {
            model_type: ModelType::Linear,
            hidden_sizes: default_hidden(),
            max_epochs: 1,
            learning_rate: 1e-2,
            tolerance: 1e-5,
            seed: 0,
            optimizer: Optimizer::Adam,
        }
    }

    /// One hidden layer of 64 units, learning rate 1e-2, 500 epochs.
    pub fn nn(seed: u64) -> Self {
        Self {
            model_type: ModelType::Nn,
            hidden_sizes: default_hidden(),
            max_epochs: 500,
            learning_rate: 1e-2,
            tolerance: 1e-5,
            seed,
            optimizer: Optimizer::Adam,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_type == ModelType::Nn {
            if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
                return Err(Error::Config("nn regressor needs non-empty positive hidden sizes".into()));
            }
            if self.max_epochs == 0 {
                return Err(Error::Config("max_epochs must be positive".into()));
            }
            if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
                return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!("tolerance {} must be positive", self.tolerance)));
        }
        Ok(())
    }
}

/// Training trajectory of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub final_loss: f64,
    pub epochs_run: usize,
    pub converged: bool,
    pub loss_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Body {
    Linear(LinearModel),
    Nn(Mlp),
}

/// A fitted multi-output regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    input: Scaler,
    output: Scaler,
    body: Body,
}

fn check_finite(inputs: &ArrayView2<'_, f64>, targets: &ArrayView2<'_, f64>) -> Result<()> {
    if let Some(pos) = inputs.iter().position(|v| !v.is_finite()) {
        return Err(Error::value(format!("input entry {pos}"), "non-finite value"));
    }
    if let Some(pos) = targets.iter().position(|v| !v.is_finite()) {
        return Err(Error::value(format!("target entry {pos}"), "non-finite value"));
    }
    Ok(())
}

fn check_fit_shapes(inputs: &ArrayView2<'_, f64>, targets: &ArrayView2<'_, f64>) -> Result<()> {
    if inputs.nrows() < 1 {
        return Err(Error::Size("need at least one training row".into()));
    }
    if inputs.nrows() != targets.nrows() {
        return Err(Error::Shape(format!(
            "{} input rows vs {} target rows",
            inputs.nrows(),
            targets.nrows()
        )));
    }
    if inputs.ncols() < 1 || targets.ncols() < 1 {
        return Err(Error::Size("inputs and targets need at least one column".into()));
    }
    Ok(())
}

/// Fits a regressor mapping `inputs` (`n × p`) to `targets` (`n × q`).
pub fn fit(spec: &RegressorSpec, inputs: &ArrayView2<'_, f64>, targets: &ArrayView2<'_, f64>) -> Result<(Regressor, FitReport)> {
    spec.validate()?;
    check_fit_shapes(inputs, targets)?;
    check_finite(inputs, targets)?;
    let input = Scaler::fit(inputs);
    let xs = input.transform(inputs);
    match spec.model_type {
        ModelType::Linear => {
            let output = Scaler::center(targets);
            let yc = output.transform(targets);
            let model = LinearModel::fit(&xs.view(), &yc.view(), RIDGE_PENALTY)?;
            let resid = &model.forward(&xs.view()) - &yc;
            let loss = resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64;
            let report = FitReport {
                final_loss: loss,
                epochs_run: 1,
                converged: true,
                loss_curve: vec![loss],
            };
            Ok((
                Regressor {
                    input,
                    output,
                    body: Body::Linear(model),
                },
                report,
            ))
        }
        ModelType::Nn => {
            let output = Scaler::fit(targets);
            let ys = output.transform(targets);
            let mut net = Mlp::new(xs.ncols(), &spec.hidden_sizes, ys.ncols(), spec.seed);
            let report = net.train(&xs.view(), &ys.view(), spec, &output.scale)?;
            Ok((
                Regressor {
                    input,
                    output,
                    body: Body::Nn(net),
                },
                report,
            ))
        }
    }
}

/// Predicts `m × q` outputs for `m × p` inputs.
pub fn predict(model: &Regressor, inputs: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    model.predict(inputs)
}

impl Regressor {
    pub fn input_width(&self) -> usize {
        self.input.width()
    }

    pub fn output_width(&self) -> usize {
        self.output.width()
    }

    pub fn model_type(&self) -> ModelType {
        match self.body {
            Body::Linear(_) => ModelType::Linear,
            Body::Nn(_) => ModelType::Nn,
        }
    }

    pub fn input_scaler(&self) -> &Scaler {
        &self.input
    }

    pub fn output_scaler(&self) -> &Scaler {
        &self.output
    }

    /// Weights on standardized inputs for the linear family.
    pub fn linear_weights(&self) -> Option<&Array2<f64>> {
        match &self.body {
            Body::Linear(m) => Some(&m.weights),
            Body::Nn(_) => None,
        }
    }

    pub fn network(&self) -> Option<&Mlp> {
        match &self.body {
            Body::Nn(net) => Some(net),
            Body::Linear(_) => None,
        }
    }

    pub fn predict(&self, inputs: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if inputs.ncols() != self.input_width() {
            return Err(Error::Shape(format!(
                "regressor expects {} input columns, got {}",
                self.input_width(),
                inputs.ncols()
            )));
        }
        let xs = self.input.transform(inputs);
        let raw = match &self.body {
            Body::Linear(m) => m.forward(&xs.view()),
            Body::Nn(net) => net.forward(&xs.view()),
        };
        Ok(self.output.inverse(raw))
    }

    /// Refits on new targets over inputs with the same width.
    ///
    /// Networks continue from their current weights (the output layer is
    /// rebased onto the new target scale first, so training starts from the
    /// current function); the input standardization is kept. Linear models
    /// are refitted from scratch.
    pub fn refit(&mut self, spec: &RegressorSpec, inputs: &ArrayView2<'_, f64>, targets: &ArrayView2<'_, f64>) -> Result<FitReport> {
        check_fit_shapes(inputs, targets)?;
        if inputs.ncols() != self.input_width() || targets.ncols() != self.output_width() {
            return Err(Error::Shape("refit shapes differ from the original fit".into()));
        }
        match &mut self.body {
            Body::Linear(_) => {
                let (fresh, report) = fit(spec, inputs, targets)?;
                *self = fresh;
                Ok(report)
            }
            Body::Nn(net) => {
                spec.validate()?;
                check_finite(inputs, targets)?;
                let output = Scaler::fit(targets);
                for j in 0..output.width() {
                    net.rebase_output(self.output.mean[j], self.output.scale[j], output.mean[j], output.scale[j], j);
                }
                self.output = output;
                let xs = self.input.transform(inputs);
                let ys = self.output.transform(targets);
                let scale: Array1<f64> = self.output.scale.clone();
                net.train(&xs.view(), &ys.view(), spec, &scale)
            }
        }
    }

    pub fn to_blob(&self) -> RegressorBlob {
        RegressorBlob {
            format: REGRESSOR_FORMAT.to_string(),
            version: REGRESSOR_VERSION,
            regressor: self.clone(),
        }
    }
}

/// Versioned serialized form of a [`Regressor`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorBlob {
    pub format: String,
    pub version: u32,
    pub regressor: Regressor,
}

impl RegressorBlob {
    pub fn into_regressor(self) -> Result<Regressor> {
        if self.format != REGRESSOR_FORMAT || self.version != REGRESSOR_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported regressor blob {} v{}",
                self.format, self.version
            )));
        }
        Ok(self.regressor)
    }
}

pub fn regressor_to_string(model: &Regressor) -> Result<String> {
    Ok(serde_json::to_string(&model.to_blob())?)
}

pub fn regressor_from_str(text: &str) -> Result<Regressor> {
    serde_json::from_str::<RegressorBlob>(text)?.into_regressor()
}
