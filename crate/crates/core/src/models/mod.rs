//! Regressors and training machinery: per-key standardization, OLS, a
//! from-scratch MLP with SGD/Adam, the baseline hyperparameter grid and the
//! oversampling strategy.

mod cmpm;
mod grid;
mod mlp;
mod ols;
mod oversample;
mod standardize;

pub use cmpm::{train_cmpm, CmpmArtifact, CmpmTrainOptions, FeaturePipeline, ModelArtifact};
pub use grid::{grid_search, GridCellLog, GridOutcome, GridSpec};
pub use mlp::{LrSchedule, MlpModel, Optimizer, TrainConfig, TrainLogEntry};
pub use ols::{ols_fit, ols_predict, OlsModel};
pub use oversample::{oversample_dataset, oversample_rows};
pub use standardize::{KpiScaler, Standardizer};

use serde::{Deserialize, Serialize};

/// A dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Mat {
            rows: rows.len(),
            cols,
            data,
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Gather a sub-matrix of the given rows.
    pub fn gather(&self, indices: &[usize]) -> Mat {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Mat {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}
