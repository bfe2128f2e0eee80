use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// Standard deviations below this are treated as a constant column.
pub const SCALE_FLOOR: f64 = 1e-12;

/// Per-column affine standardization `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Scaler {
    /// Population mean and standard deviation of each column. Constant
    /// columns get scale 1 so they map to exactly zero.
    pub fn fit(data: &ArrayView2<'_, f64>) -> Self {
        let n = data.nrows().max(1) as f64;
        let mean = data.sum_axis(Axis(0)) / n;
        let mut scale = Array1::zeros(data.ncols());
        for (j, col) in data.axis_iter(Axis(1)).enumerate() {
            let var = col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            scale[j] = if sd < SCALE_FLOOR { 1.0 } else { sd };
        }
        Self { mean, scale }
    }

    /// Centering only (unit scale).
    pub fn center(data: &ArrayView2<'_, f64>) -> Self {
        let n = data.nrows().max(1) as f64;
        Self {
            mean: data.sum_axis(Axis(0)) / n,
            scale: Array1::ones(data.ncols()),
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, data: &ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = data.to_owned();
        for mut row in out.rows_mut() {
            row -= &self.mean;
            row /= &self.scale;
        }
        out
    }

    pub fn inverse(&self, mut data: Array2<f64>) -> Array2<f64> {
        for mut row in data.rows_mut() {
            row *= &self.scale;
            row += &self.mean;
        }
        data
    }
}
