use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fairness::evaluate_fairness_through_model;
use super::value::{evaluate_value_through_fqe, FqeSettings};
use crate::agents::policy::Policy;
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::trajectory::TrajectoryBatch;

pub const VALUE_ROW: &str = "Value";
pub const CF_ROW: &str = "Counterfactual Unfairness Level";

/// Value and counterfactual unfairness per policy, columns in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub cf_metrics: Vec<f64>,
}

impl ComparisonTable {
    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        let k = self.names.iter().position(|n| n == name)?;
        Some((self.values[k], self.cf_metrics[k]))
    }

    /// Two-row plain-text table with three decimals.
    pub fn to_text(&self) -> String {
        let label_width = CF_ROW.len();
        let widths: Vec<usize> = self.names.iter().map(|n| n.len().max(8)).collect();
        let mut out = String::new();
        let _ = write!(out, "{:label_width$}", "");
        for (name, w) in self.names.iter().zip(&widths) {
            let _ = write!(out, "  {name:>w$}");
        }
        out.push('\n');
        for (label, row) in [(VALUE_ROW, &self.values), (CF_ROW, &self.cf_metrics)] {
            let _ = write!(out, "{label:label_width$}");
            for (v, w) in row.iter().zip(&widths) {
                let _ = write!(out, "  {v:>w$.3}");
            }
            out.push('\n');
        }
        out
    }

    /// `metric,<name>...` header followed by a `value` and a `cf_metric` row,
    /// numbers in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (label, row) in [("value", &self.values), ("cf_metric", &self.cf_metrics)] {
            out.push_str(label);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluates every named policy: value by FQE on `batch`, counterfactual
/// unfairness by simulation in `env` over the individuals of `batch`.
pub fn compare_baselines(
    env: &dyn Environment,
    batch: &TrajectoryBatch,
    z_space: &[Vec<f64>],
    policies: &[(String, &dyn Policy)],
    fqe: &FqeSettings,
    num_reps: usize,
    seed: u64,
) -> Result<ComparisonTable> {
    if policies.is_empty() {
        return Err(Error::Config("no policies to compare".into()));
    }
    let rows: Vec<(f64, f64)> = policies
        .par_iter()
        .map(|(_, p)| {
            let value = evaluate_value_through_fqe(batch, *p, fqe)?.value;
            let cf = evaluate_fairness_through_model(env, batch, z_space, *p, num_reps, seed)?.cf_metric;
            Ok((value, cf))
        })
        .collect::<Result<_>>()?;
    Ok(ComparisonTable {
        names: policies.iter().map(|(n, _)| n.clone()).collect(),
        values: rows.iter().map(|r| r.0).collect(),
        cf_metrics: rows.iter().map(|r| r.1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let t = ComparisonTable {
            names: vec!["Random".into(), "Ours".into()],
            values: vec![-1.4444, 7.3581],
            cf_metrics: vec![0.0, 0.04213],
        };
        let text = t.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].trim_start().starts_with("Random"));
        assert!(lines[1].starts_with("Value") && lines[1].ends_with("7.358"));
        assert!(lines[2].starts_with(CF_ROW) && lines[2].contains("0.000"));
        assert_eq!(t.to_csv(), "metric,Random,Ours\nvalue,-1.4444,7.3581\ncf_metric,0,0.04213\n");
    }
}
