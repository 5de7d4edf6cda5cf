use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::inference::{quantile, Prediction};

/// Root mean squared error.
pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64, ExperimentError> {
    if predictions.len() != targets.len() {
        return Err(ExperimentError::LengthMismatch {
            predictions: predictions.len(),
            targets: targets.len(),
        });
    }
    if targets.is_empty() {
        return Err(ExperimentError::Empty);
    }
    let ss: f64 = predictions.iter().zip(targets).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok((ss / targets.len() as f64).sqrt())
}

/// Error statistics of a posterior on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub dataset: String,
    /// Mean and population standard deviation of the per-draw RMSE.
    pub rmse_mean: f64,
    pub rmse_std: f64,
    /// Median of the per-draw RMSE.
    pub rmse_q50: f64,
    /// RMSE of the pointwise posterior median prediction.
    pub rmse_pred: f64,
    pub n_draws: usize,
    /// Draws left out for a non-finite prediction somewhere on the data.
    pub excluded: usize,
}

/// Per-draw RMSE summary of `prediction` against `targets`. Draws with a
/// non-finite value are excluded; when none remain the statistics are NaN.
pub fn dataset_metrics(
    name: &str,
    prediction: &Prediction,
    targets: &[f64],
) -> Result<DatasetMetrics, ExperimentError> {
    let mut errs = Vec::with_capacity(prediction.per_draw.len());
    for row in &prediction.per_draw {
        let e = rmse(row, targets)?;
        if e.is_finite() {
            errs.push(e);
        }
    }
    let n = errs.len();
    let (mean, std) = if n == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let m = errs.iter().sum::<f64>() / n as f64;
        let var = errs.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / n as f64;
        (m, var.sqrt())
    };
    errs.sort_by(f64::total_cmp);
    Ok(DatasetMetrics {
        dataset: name.to_string(),
        rmse_mean: mean,
        rmse_std: std,
        rmse_q50: quantile(&errs, 0.5),
        rmse_pred: rmse(&prediction.medians(), targets)?,
        n_draws: n,
        excluded: prediction.per_draw.len() - n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::PointSummary;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt());
        assert!((rmse(&[1.5, 2.5, 3.5], &[1.0, 2.0, 3.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(
            rmse(&[1.0], &[1.0, 2.0]),
            Err(ExperimentError::LengthMismatch { predictions: 1, targets: 2 })
        );
        assert_eq!(rmse(&[], &[]), Err(ExperimentError::Empty));
    }

    fn point(q50: f64) -> PointSummary {
        PointSummary {
            mean: q50,
            q05: q50,
            q50,
            q95: q50,
            n_finite: 3,
            excluded: 0,
        }
    }

    #[test]
    fn three_draws_by_hand() {
        // Targets (0, 0); draws off by 1, 2 and 3 everywhere: RMSE 1, 2, 3.
        let pred = Prediction {
            points: vec![point(2.0), point(2.0)],
            per_draw: vec![vec![1.0, -1.0], vec![2.0, 2.0], vec![3.0, -3.0]],
        };
        let m = dataset_metrics("test1", &pred, &[0.0, 0.0]).unwrap();
        assert_eq!(m.rmse_mean, 2.0);
        assert!((m.rmse_std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(m.rmse_q50, 2.0);
        assert_eq!(m.rmse_pred, 2.0);
        assert_eq!((m.n_draws, m.excluded), (3, 0));
    }

    #[test]
    fn non_finite_draws_are_excluded() {
        let pred = Prediction {
            points: vec![point(1.0)],
            per_draw: vec![vec![1.0], vec![f64::INFINITY]],
        };
        let m = dataset_metrics("x", &pred, &[1.0]).unwrap();
        assert_eq!((m.n_draws, m.excluded, m.rmse_mean), (1, 1, 0.0));
    }
}
