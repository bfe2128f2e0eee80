//! Trajectory batches and their long-format CSV representation.
//!
//! A CSV file holds one row per (individual, time). Each individual owns
//! `T + 1` consecutive rows: rows `0..T` carry the action and reward taken
//! at that time, the final row carries the terminal state with empty action
//! and reward cells. Columns are `id, time, <z labels>, <state labels>,
//! action, reward`.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{s, Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the (0-based) time column.
pub const TIME_COLUMN: &str = "time";

/// Aligned trajectory arrays for `N` individuals over `T` transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    /// Sensitive attributes, `N × d_z`.
    pub zs: Array2<f64>,
    /// Observed states `x_0 … x_T`, `N × (T+1) × d_x`.
    pub states: Array3<f64>,
    /// Actions, `N × T`.
    pub actions: Array2<usize>,
    /// Immediate rewards, `N × T`.
    pub rewards: Array2<f64>,
    /// Individual labels.
    pub ids: Vec<String>,
}

impl TrajectoryBatch {
    /// Builds a batch, checking that every array agrees on `N` and `T`.
    pub fn new(
        zs: Array2<f64>,
        states: Array3<f64>,
        actions: Array2<usize>,
        rewards: Array2<f64>,
        ids: Vec<String>,
    ) -> Result<Self> {
        let n = zs.nrows();
        if states.len_of(Axis(0)) != n
            || actions.nrows() != n
            || rewards.nrows() != n
            || ids.len() != n
        {
            return Err(Error::Shape(format!(
                "leading dimensions disagree: zs {}, states {}, actions {}, rewards {}, ids {}",
                n,
                states.len_of(Axis(0)),
                actions.nrows(),
                rewards.nrows(),
                ids.len()
            )));
        }
        let horizon = actions.ncols();
        if states.len_of(Axis(1)) != horizon + 1 || rewards.ncols() != horizon {
            return Err(Error::Shape(format!(
                "expected states with {} time slices and rewards with {} columns, got {} and {}",
                horizon + 1,
                horizon,
                states.len_of(Axis(1)),
                rewards.ncols()
            )));
        }
        let finite = zs.iter().chain(states.iter()).chain(rewards.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::value("batch", "non-finite entry"));
        }
        Ok(Self {
            zs,
            states,
            actions,
            rewards,
            ids,
        })
    }

    /// Builds a batch with ids `"0".."N-1"`.
    pub fn with_default_ids(
        zs: Array2<f64>,
        states: Array3<f64>,
        actions: Array2<usize>,
        rewards: Array2<f64>,
    ) -> Result<Self> {
        let ids = (0..zs.nrows()).map(|i| i.to_string()).collect();
        Self::new(zs, states, actions, rewards, ids)
    }

    pub fn len(&self) -> usize {
        self.zs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of transitions `T`.
    pub fn horizon(&self) -> usize {
        self.actions.ncols()
    }

    pub fn state_dim(&self) -> usize {
        self.states.len_of(Axis(2))
    }

    pub fn attr_dim(&self) -> usize {
        self.zs.ncols()
    }

    /// Checks that every action lies in `[0, num_actions)`.
    pub fn check_actions(&self, num_actions: usize) -> Result<()> {
        for ((i, t), &a) in self.actions.indexed_iter() {
            if a >= num_actions {
                return Err(Error::value(
                    format!("individual '{}', time {}", self.ids[i], t),
                    format!("action {a} outside [0, {num_actions})"),
                ));
            }
        }
        Ok(())
    }

    /// Selects individuals by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> TrajectoryBatch {
        TrajectoryBatch {
            zs: self.zs.select(Axis(0), indices),
            states: self.states.select(Axis(0), indices),
            actions: self.actions.select(Axis(0), indices),
            rewards: self.rewards.select(Axis(0), indices),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }

    /// Returns the batch with its states replaced (e.g. by preprocessed
    /// states of a different width).
    pub fn with_states_and_rewards(&self, states: Array3<f64>, rewards: Array2<f64>) -> Result<Self> {
        Self::new(self.zs.clone(), states, self.actions.clone(), rewards, self.ids.clone())
    }

    /// Truncates to the first `horizon` transitions.
    pub fn truncate(&self, horizon: usize) -> TrajectoryBatch {
        let horizon = horizon.min(self.horizon());
        TrajectoryBatch {
            zs: self.zs.clone(),
            states: self.states.slice(s![.., ..=horizon, ..]).to_owned(),
            actions: self.actions.slice(s![.., ..horizon]).to_owned(),
            rewards: self.rewards.slice(s![.., ..horizon]).to_owned(),
            ids: self.ids.clone(),
        }
    }
}

/// Column names of a long-format trajectory CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLabels {
    pub id: String,
    pub z: Vec<String>,
    pub state: Vec<String>,
    pub action: String,
    pub reward: String,
}

impl ColumnLabels {
    /// `ID, z1.., state1.., action, reward`.
    pub fn default_for(attr_dim: usize, state_dim: usize) -> Self {
        Self {
            id: "ID".to_string(),
            z: (1..=attr_dim).map(|j| format!("z{j}")).collect(),
            state: (1..=state_dim).map(|j| format!("state{j}")).collect(),
            action: "action".to_string(),
            reward: "reward".to_string(),
        }
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
}

fn parse_real(cell: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| {
        Error::value(format!("row {row}, column '{column}'"), format!("'{cell}' is not a number"))
    })?;
    if !v.is_finite() {
        return Err(Error::value(format!("row {row}, column '{column}'"), "non-finite value"));
    }
    Ok(v)
}

/// Reads a long-format trajectory CSV.
///
/// Individuals appear in order of first appearance; within an individual,
/// file order is time order. When `num_actions` is given, actions outside
/// `[0, num_actions)` are rejected.
pub fn read_trajectory_from_csv(
    path: impl AsRef<Path>,
    labels: &ColumnLabels,
    horizon: usize,
    num_actions: Option<usize>,
) -> Result<TrajectoryBatch> {
    if horizon == 0 {
        return Err(Error::Size("horizon must be positive".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.trim().is_empty()) {
        return Err(Error::Schema("file has no header row".into()));
    }
    let id_col = column_index(&headers, &labels.id)?;
    column_index(&headers, TIME_COLUMN)?;
    let z_cols = labels
        .z
        .iter()
        .map(|l| column_index(&headers, l))
        .collect::<Result<Vec<_>>>()?;
    let x_cols = labels
        .state
        .iter()
        .map(|l| column_index(&headers, l))
        .collect::<Result<Vec<_>>>()?;
    let a_col = column_index(&headers, &labels.action)?;
    let r_col = column_index(&headers, &labels.reward)?;

    // rows grouped per individual, keeping first-appearance order
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<(usize, csv::StringRecord)>> = HashMap::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        // header is line 1
        let row = k + 2;
        let id = record.get(id_col).unwrap_or("").to_string();
        groups
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id.clone());
                Vec::new()
            })
            .push((row, record));
    }
    if order.is_empty() {
        return Err(Error::Schema("file contains no data rows".into()));
    }

    let n = order.len();
    let (dz, dx) = (z_cols.len(), x_cols.len());
    let mut zs = Array2::<f64>::zeros((n, dz));
    let mut states = Array3::<f64>::zeros((n, horizon + 1, dx));
    let mut actions = Array2::<usize>::zeros((n, horizon));
    let mut rewards = Array2::<f64>::zeros((n, horizon));

    for (i, id) in order.iter().enumerate() {
        let rows = &groups[id];
        if rows.len() != horizon + 1 {
            return Err(Error::Ragged {
                id: id.clone(),
                expected: horizon + 1,
                found: rows.len(),
            });
        }
        for (j, &c) in z_cols.iter().enumerate() {
            let (row, rec) = &rows[0];
            zs[[i, j]] = parse_real(rec.get(c).unwrap_or(""), *row, &labels.z[j])?;
        }
        for (t, (row, rec)) in rows.iter().enumerate() {
            for (j, &c) in x_cols.iter().enumerate() {
                states[[i, t, j]] = parse_real(rec.get(c).unwrap_or(""), *row, &labels.state[j])?;
            }
            if t == horizon {
                continue;
            }
            let cell = rec.get(a_col).unwrap_or("").trim();
            let a: usize = cell.parse().map_err(|_| {
                Error::value(
                    format!("row {row}, column '{}'", labels.action),
                    format!("'{cell}' is not a non-negative integer action"),
                )
            })?;
            if let Some(k) = num_actions {
                if a >= k {
                    return Err(Error::value(
                        format!("row {row}, column '{}'", labels.action),
                        format!("action {a} outside [0, {k})"),
                    ));
                }
            }
            actions[[i, t]] = a;
            rewards[[i, t]] = parse_real(rec.get(r_col).unwrap_or(""), *row, &labels.reward)?;
        }
    }
    TrajectoryBatch::new(zs, states, actions, rewards, order)
}

/// Writes a batch as long-format CSV readable by [`read_trajectory_from_csv`].
///
/// Reals use the shortest representation that parses back to the same
/// `f64`, so a write/read round trip is exact.
pub fn write_trajectory_to_csv(
    batch: &TrajectoryBatch,
    labels: &ColumnLabels,
    path: impl AsRef<Path>,
) -> Result<()> {
    if labels.z.len() != batch.attr_dim() || labels.state.len() != batch.state_dim() {
        return Err(Error::Shape(format!(
            "labels name {} z and {} state columns, batch has {} and {}",
            labels.z.len(),
            labels.state.len(),
            batch.attr_dim(),
            batch.state_dim()
        )));
    }
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec![labels.id.clone(), TIME_COLUMN.to_string()];
    header.extend(labels.z.iter().cloned());
    header.extend(labels.state.iter().cloned());
    header.push(labels.action.clone());
    header.push(labels.reward.clone());
    writer.write_record(&header)?;

    let horizon = batch.horizon();
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..batch.len() {
        for t in 0..=horizon {
            record.clear();
            record.push(batch.ids[i].clone());
            record.push(t.to_string());
            record.extend(batch.zs.row(i).iter().map(|v| v.to_string()));
            record.extend(batch.states.slice(s![i, t, ..]).iter().map(|v| v.to_string()));
            if t < horizon {
                record.push(batch.actions[[i, t]].to_string());
                record.push(batch.rewards[[i, t]].to_string());
            } else {
                record.push(String::new());
                record.push(String::new());
            }
            writer.write_record(&record)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Splits individuals into `(train, test)` with `round(N · test_fraction)`
/// (clamped to `[1, N-1]`) test individuals. Both parts keep input order.
pub fn train_test_split(
    batch: &TrajectoryBatch,
    test_fraction: f64,
    seed: u64,
) -> Result<(TrajectoryBatch, TrajectoryBatch)> {
    let n = batch.len();
    if n < 2 {
        return Err(Error::Size(format!("cannot split {n} individual(s)")));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test: Vec<usize> = perm[..n_test].to_vec();
    let mut train: Vec<usize> = perm[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((batch.select(&train), batch.select(&test)))
}
