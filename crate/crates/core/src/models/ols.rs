//! Ordinary least squares through the normal equations with a ridge jitter
//! for rank-deficient designs.

use serde::{Deserialize, Serialize};

use super::Mat;
use crate::error::{CoreError, Result};

const RIDGE_JITTER: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OlsModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

/// Solve `A x = b` for symmetric positive definite `A` by Cholesky; the
/// designs here are tiny (a handful of environment columns).
fn solve_spd(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    // Forward then back substitution.
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    Some(x)
}

/// Fit `y ~ X w + b` by minimizing the squared residual. Columns are
/// centered first, so the intercept falls out of the means; the Gram matrix
/// gets a `1e-8` diagonal jitter (escalated if the factorization still
/// fails), which keeps duplicated or collinear columns finite.
pub fn ols_fit(x: &Mat, y: &[f64]) -> Result<OlsModel> {
    if x.rows == 0 || x.cols == 0 {
        return Err(CoreError::Usage(
            "ols_fit requires a nonempty design matrix".to_string(),
        ));
    }
    if x.rows != y.len() {
        return Err(CoreError::Usage(format!(
            "design has {} rows but target has {}",
            x.rows,
            y.len()
        )));
    }
    let n = x.rows as f64;
    let d = x.cols;
    let mut x_mean = vec![0.0; d];
    for r in 0..x.rows {
        for (m, v) in x_mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    for m in &mut x_mean {
        *m /= n;
    }
    let y_mean = y.iter().sum::<f64>() / n;

    let mut gram = vec![vec![0.0; d]; d];
    let mut rhs = vec![0.0; d];
    for r in 0..x.rows {
        let row = x.row(r);
        let dy = y[r] - y_mean;
        for i in 0..d {
            let di = row[i] - x_mean[i];
            rhs[i] += di * dy;
            for j in 0..=i {
                gram[i][j] += di * (row[j] - x_mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            gram[i][j] = gram[j][i];
        }
    }

    let mut jitter = RIDGE_JITTER;
    let weights = loop {
        let mut a = gram.clone();
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += jitter;
        }
        if let Some(w) = solve_spd(&a, &rhs) {
            if w.iter().all(|v| v.is_finite()) {
                break w;
            }
        }
        jitter *= 10.0;
        if jitter > 1.0 {
            return Err(CoreError::Internal(
                "normal equations failed to factor even with escalated jitter".to_string(),
            ));
        }
    };

    let intercept = y_mean
        - weights
            .iter()
            .zip(&x_mean)
            .map(|(w, m)| w * m)
            .sum::<f64>();
    Ok(OlsModel { weights, intercept })
}

pub fn ols_predict(model: &OlsModel, x: &Mat) -> Vec<f64> {
    (0..x.rows)
        .map(|r| {
            model.intercept
                + x.row(r)
                    .iter()
                    .zip(&model.weights)
                    .map(|(v, w)| v * w)
                    .sum::<f64>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn exact_line_is_recovered() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        let m = ols_fit(&Mat::from_rows(&rows), &y).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-8);
        assert!((m.intercept - 1.0).abs() < 1e-8);
    }

    #[test]
    fn duplicated_column_stays_finite_and_predictive() {
        let mut rng = Rng::seed_from(5);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let a = rng.uniform(-2.0, 2.0);
                vec![a, a]
            })
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] + 0.5).collect();
        let x = Mat::from_rows(&rows);
        let m = ols_fit(&x, &y).unwrap();
        assert!(m.weights.iter().all(|w| w.is_finite()));
        let preds = ols_predict(&m, &x);
        for (p, t) in preds.iter().zip(&y) {
            assert!((p - t).abs() < 1e-6);
        }
    }

    #[test]
    fn random_noiseless_recovery_and_residual_orthogonality() {
        let mut rng = Rng::seed_from(42);
        let n = 100;
        let d = 7;
        let w_star: Vec<f64> = (0..d).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let b_star = rng.uniform(-2.0, 2.0);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.normal()).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| b_star + r.iter().zip(&w_star).map(|(x, w)| x * w).sum::<f64>())
            .collect();
        let x = Mat::from_rows(&rows);
        let m = ols_fit(&x, &y).unwrap();
        for (w, ws) in m.weights.iter().zip(&w_star) {
            assert!((w - ws).abs() < 1e-8, "{w} vs {ws}");
        }
        assert!((m.intercept - b_star).abs() < 1e-8);

        let preds = ols_predict(&m, &x);
        let resid: Vec<f64> = preds.iter().zip(&y).map(|(p, t)| t - p).collect();
        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for c in 0..d {
            let dot: f64 = (0..n).map(|r| x.row(r)[c] * resid[r]).sum();
            assert!(dot.abs() <= 1e-6 * y_norm, "column {c}: {dot}");
        }
    }

    #[test]
    fn empty_design_is_a_usage_error() {
        let x = Mat::zeros(0, 0);
        assert!(matches!(ols_fit(&x, &[]), Err(CoreError::Usage(_))));
    }

    #[test]
    fn coordinate_perturbation_never_improves_training_mse() {
        let mut rng = Rng::seed_from(9);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.normal(), rng.normal(), rng.normal()])
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| 1.5 * r[0] - 0.7 * r[1] + 0.2 * r[2] + 0.3 * rng.normal())
            .collect();
        let x = Mat::from_rows(&rows);
        let m = ols_fit(&x, &y).unwrap();
        let mse = |model: &OlsModel| -> f64 {
            ols_predict(model, &x)
                .iter()
                .zip(&y)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / y.len() as f64
        };
        let base = mse(&m);
        for c in 0..3 {
            for delta in [-1e-3, 1e-3] {
                let mut probe = m.clone();
                probe.weights[c] += delta;
                assert!(mse(&probe) >= base - 1e-12);
            }
        }
    }
}
