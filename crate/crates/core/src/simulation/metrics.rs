use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{check_loss, Dataset};

/// Support recovery and estimation accuracy of one fit.
///
/// Support counts skip the intercept (index 0 when `intercept` is set). An
/// empty true support gives `tpr = 1`; an empty complement gives `fpr = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tpr: f64,
    pub fpr: f64,
    /// `||beta_hat - beta_star||_2^2`, intercept included.
    pub sse: f64,
    /// Number of nonzero slopes.
    pub model_size: usize,
    pub pred_error: Option<f64>,
}

impl MetricsReport {
    pub const NAMES: [&'static str; 5] = ["tpr", "fpr", "sse", "model_size", "pred_error"];

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "tpr" => Some(self.tpr),
            "fpr" => Some(self.fpr),
            "sse" => Some(self.sse),
            "model_size" => Some(self.model_size as f64),
            "pred_error" => self.pred_error,
            _ => None,
        }
    }
}

pub fn metrics(
    beta_hat: ArrayView1<'_, f64>,
    beta_star: ArrayView1<'_, f64>,
    intercept: bool,
) -> Result<MetricsReport> {
    if beta_hat.len() != beta_star.len() {
        return Err(Error::DimensionMismatch {
            what: "estimated coefficients",
            expected: beta_star.len(),
            got: beta_hat.len(),
        });
    }
    let start = usize::from(intercept);
    let (mut tp, mut fp, mut s, mut sc) = (0usize, 0usize, 0usize, 0usize);
    for (&b, &t) in beta_hat.iter().zip(beta_star).skip(start) {
        if t != 0.0 {
            s += 1;
            tp += usize::from(b != 0.0);
        } else {
            sc += 1;
            fp += usize::from(b != 0.0);
        }
    }
    Ok(MetricsReport {
        tpr: if s == 0 { 1.0 } else { tp as f64 / s as f64 },
        fpr: if sc == 0 { 0.0 } else { fp as f64 / sc as f64 },
        sse: beta_hat.iter().zip(beta_star).map(|(a, b)| (a - b) * (a - b)).sum(),
        model_size: tp + fp,
        pred_error: None,
    })
}

/// Mean check loss of `beta_hat` on held-out data.
pub fn prediction_error(beta_hat: ArrayView1<'_, f64>, test: &Dataset, tau: f64) -> Result<f64> {
    let r = test.residuals(beta_hat)?;
    Ok(r.iter().map(|&u| check_loss(tau, u)).sum::<f64>() / r.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::beta_star;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1, Array2};

    #[test]
    fn metric_examples() {
        let star = beta_star(30);
        let m = metrics(star.view(), star.view(), true).unwrap();
        assert_eq!((m.tpr, m.fpr, m.sse, m.model_size), (1.0, 0.0, 0.0, 10));

        let zero = Array1::zeros(31);
        let m = metrics(zero.view(), star.view(), true).unwrap();
        assert_eq!((m.tpr, m.fpr, m.model_size), (0.0, 0.0, 0));
        assert_abs_diff_eq!(m.sse, 20.4, epsilon = 1e-12);

        let mut half = star.clone();
        for j in [11, 13, 15, 17, 19] {
            half[j] = 0.0;
        }
        let m = metrics(half.view(), star.view(), true).unwrap();
        assert_eq!((m.tpr, m.fpr), (0.5, 0.0));

        let mut extra = star.clone();
        extra[0] = 0.3;
        extra[25] = 0.1;
        let m = metrics(extra.view(), star.view(), true).unwrap();
        assert_eq!(m.model_size, 11);
        assert_abs_diff_eq!(m.fpr, 1.0 / 20.0, epsilon = 1e-15);

        assert!(metrics(zero.view(), beta_star(20).view(), true).is_err());
    }

    #[test]
    fn prediction_examples() {
        let test = Dataset::new(array![[1.0, 2.0], [1.0, -1.0]], array![1.0, -1.0]).unwrap();
        assert_eq!(prediction_error(array![0.0, 0.0].view(), &test, 0.5).unwrap(), 0.5);
        let exact = Dataset::new(array![[1.0, 1.0], [1.0, -1.0]], array![1.0, -1.0]).unwrap();
        assert_eq!(prediction_error(array![0.0, 1.0].view(), &exact, 0.5).unwrap(), 0.0);

        let pos = Dataset::new(Array2::ones((3, 1)), array![1.0, 2.0, 4.0]).unwrap();
        let a = prediction_error(array![0.0].view(), &pos, 0.3).unwrap();
        let b = prediction_error(array![0.0].view(), &pos, 0.5).unwrap();
        assert_abs_diff_eq!(a, 0.6 * b, epsilon = 1e-15);
    }
}
