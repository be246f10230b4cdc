//! Least-squares lasso baseline.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_selection::{cv_errors, fold_assignment, log_grid};
use crate::objective::{kkt_from_gradient, Dataset, FitResult};
use crate::penalties::WeightVector;
use crate::solver::{ls_lasso, LassoConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsLassoConfig {
    pub inner: LassoConfig,
    /// KKT target relative to `max(1, lambda_max)`; heavy-tailed responses
    /// inflate the gradient scale, so an absolute target is unreachable in
    /// practice.
    pub kkt_tol: f64,
}

impl Default for LsLassoConfig {
    fn default() -> Self {
        LsLassoConfig {
            inner: LassoConfig::default(),
            kkt_tol: 1e-6,
        }
    }
}

fn ls_weights(data: &Dataset, lambda: f64) -> WeightVector {
    let unpen = if data.has_intercept() { [0].into() } else { Default::default() };
    WeightVector::constant(data.p(), lambda, &unpen)
}

/// KKT residual of `(1/2n) ||y - X beta||^2 + lambda ||beta_slopes||_1`.
pub fn ls_kkt(data: &Dataset, lambda: f64, beta: ArrayView1<'_, f64>) -> Result<f64> {
    let r = data.residuals(beta)?;
    let g = -data.xt_dot(r.as_slice().unwrap()) / data.n() as f64;
    Ok(kkt_from_gradient(g.view(), &ls_weights(data, lambda), beta))
}

/// Minimizes `(1/2n) ||y - X beta||^2 + lambda ||beta_slopes||_1` with the
/// intercept (if any) unpenalized. The sweep tolerance is tightened until
/// the KKT residual is below `cfg.kkt_tol * max(1, ls_lambda_max(data))`.
pub fn solve_ls_lasso(
    data: &Dataset,
    lambda: f64,
    cfg: &LsLassoConfig,
    init: Option<ArrayView1<'_, f64>>,
) -> Result<FitResult> {
    let target = cfg.kkt_tol * ls_lambda_max(data).max(1.0);
    let mut inner = cfg.inner.clone();
    let mut beta = init.map(|b| b.to_owned());
    let mut total = 0;
    for _ in 0..6 {
        let (b, fit) = ls_lasso(data, lambda, &inner, beta.as_ref().map(|b| b.view()))?;
        total += fit.sweeps;
        let kkt = ls_kkt(data, lambda, b.view())?;
        if kkt <= target {
            let r = data.residuals(b.view())?;
            let slopes: f64 = b.iter().skip(usize::from(data.has_intercept())).map(|v| v.abs()).sum();
            return Ok(FitResult {
                objective: r.dot(&r) / (2.0 * data.n() as f64) + lambda * slopes,
                beta: b,
                n_iter: total,
                converged: true,
                kkt_inf: kkt,
                trace: Vec::new(),
                degenerate_updates: 0,
                primal_residual: None,
                solver: "ls-lasso".into(),
            });
        }
        beta = Some(b);
        inner.tol *= 0.1;
    }
    Err(Error::NoConvergence {
        max_iter: cfg.inner.max_sweeps,
    })
}

/// `||X_slopes'(y - ybar)||_inf / n`, the smallest lambda with all slopes 0.
pub fn ls_lambda_max(data: &Dataset) -> f64 {
    let n = data.n() as f64;
    let ybar = if data.has_intercept() { data.y().mean().unwrap() } else { 0.0 };
    let centered: Vec<f64> = data.y().iter().map(|v| v - ybar).collect();
    let g = data.xt_dot(&centered);
    g.iter()
        .skip(usize::from(data.has_intercept()))
        .fold(0.0f64, |m, v| m.max(v.abs()))
        / n
}

/// Tuned least-squares lasso.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsLassoCv {
    pub grid: Vec<f64>,
    pub mean_error: Vec<Option<f64>>,
    pub selected_lambda: f64,
    pub fit: FitResult,
}

/// k-fold cross-validation with squared-error validation loss. With
/// `saturation = Some(f)`, a fold's path stops after the first fit with more
/// than `f * n_train` nonzero slopes, as in `CvOptions`.
pub fn cross_validate_ls_lasso(
    data: &Dataset,
    folds: usize,
    grid_size: usize,
    min_ratio: f64,
    saturation: Option<f64>,
    seed: u64,
    cfg: &LsLassoConfig,
) -> Result<LsLassoCv> {
    if let Some(f) = saturation {
        if !(f > 0.0) {
            return Err(Error::InvalidParameter(format!("saturation fraction must be positive, got {f}")));
        }
    }
    let grid = log_grid(ls_lambda_max(data), grid_size, min_ratio)?;
    let labels = fold_assignment(data.n(), folds, seed)?;
    let errs = cv_errors(
        data,
        &grid,
        &labels,
        |train, grid| {
            let limit = saturation.map(|f| (f * train.n() as f64).floor() as usize);
            let skip = usize::from(train.has_intercept());
            let mut warm: Option<Array1<f64>> = None;
            let mut saturated: Option<usize> = None;
            grid.iter()
                .map(|&l| {
                    if let (Some(active), Some(limit)) = (saturated, limit) {
                        return Err(Error::Saturated { active, limit });
                    }
                    let fit = solve_ls_lasso(train, l, cfg, warm.as_ref().map(|w| w.view()))?;
                    let active = fit.beta.iter().skip(skip).filter(|&&b| b != 0.0).count();
                    if limit.is_some_and(|m| active > m) {
                        saturated = Some(active);
                    }
                    warm = Some(fit.beta.clone());
                    Ok(fit.beta)
                })
                .collect()
        },
        |u| u * u,
    )?;
    let selected_lambda = grid[errs.selected_index];
    let fit = solve_ls_lasso(data, selected_lambda, cfg, None)?;
    Ok(LsLassoCv {
        grid,
        mean_error: errs.mean_error,
        selected_lambda,
        fit,
    })
}
