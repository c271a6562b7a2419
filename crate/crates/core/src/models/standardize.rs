//! Column standardization with population statistics.

use serde::{Deserialize, Serialize};

use super::Mat;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ColStats {
    pub mean: f64,
    pub std: f64,
    /// False for zero-variance columns, which are excluded: they map to 0
    /// under `apply` and back to their mean under `invert`.
    pub active: bool,
}

/// Per-column standardizer. `apply(x) = (x - mean) / std` per active column.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Standardizer {
    pub cols: Vec<ColStats>,
}

impl Standardizer {
    pub fn fit(m: &Mat) -> Self {
        let n = m.rows.max(1) as f64;
        let mut cols = Vec::with_capacity(m.cols);
        for c in 0..m.cols {
            let mut sum = 0.0;
            for r in 0..m.rows {
                sum += m.row(r)[c];
            }
            let mean = sum / n;
            let mut var = 0.0;
            for r in 0..m.rows {
                let d = m.row(r)[c] - mean;
                var += d * d;
            }
            let std = (var / n).sqrt();
            cols.push(ColStats {
                mean,
                std,
                active: std > 0.0,
            });
        }
        Standardizer { cols }
    }

    /// Indices of excluded (zero-variance) columns.
    pub fn excluded(&self) -> Vec<usize> {
        self.cols
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.active)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn apply_in_place(&self, m: &mut Mat) {
        assert_eq!(m.cols, self.cols.len());
        for r in 0..m.rows {
            let row = m.row_mut(r);
            for (v, st) in row.iter_mut().zip(&self.cols) {
                *v = if st.active { (*v - st.mean) / st.std } else { 0.0 };
            }
        }
    }

    pub fn apply(&self, m: &Mat) -> Mat {
        let mut out = m.clone();
        self.apply_in_place(&mut out);
        out
    }

    pub fn invert_value(&self, col: usize, z: f64) -> f64 {
        let st = &self.cols[col];
        if st.active {
            st.mean + st.std * z
        } else {
            st.mean
        }
    }
}

/// Scalar standardizer for the KPI column.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KpiScaler {
    pub mean: f64,
    pub std: f64,
}

impl KpiScaler {
    /// `None` when the column has zero variance.
    pub fn fit(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        (std > 0.0).then_some(KpiScaler { mean, std })
    }

    #[inline]
    pub fn z(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    #[inline]
    pub fn invert(&self, z: f64) -> f64 {
        self.mean + self.std * z
    }
}
