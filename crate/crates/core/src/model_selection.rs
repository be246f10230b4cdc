//! Bandwidth rule, lambda grids and k-fold cross-validation.

use std::collections::BTreeSet;

use ndarray::{Array1, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irw::{fit_irw_with, IrwOptions, IrwResult};
use crate::kernels::SmoothSpec;
use crate::objective::{check_loss, gradient, Dataset, FitResult};
use crate::penalties::{PenaltySpec, WeightVector};
use crate::solver::Solver;

pub const DEFAULT_GRID_SIZE: usize = 50;
pub const DEFAULT_MIN_RATIO: f64 = 0.01;
pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_SATURATION: f64 = 0.5;

/// `max{0.05, sqrt(tau (1 - tau)) (log p / n)^{1/4}}`.
pub fn default_bandwidth(n: usize, p: usize, tau: f64) -> Result<f64> {
    if n < 2 || p < 1 {
        return Err(Error::InvalidParameter(format!("need n >= 2 and p >= 1, got n = {n}, p = {p}")));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter(format!("tau must lie in (0, 1), got {tau}")));
    }
    let rate = ((p as f64).ln() / n as f64).powf(0.25);
    Ok(((tau * (1.0 - tau)).sqrt() * rate).max(0.05))
}

/// Minimizer of `sum_i l_h(y_i - b)` over the scalar `b`.
///
/// The derivative `mean Kbar((b - y_i)/h) - tau` is nondecreasing in `b`, so
/// its sign change is bisected; the kernel tails are negligible 50
/// bandwidths outside the data range.
pub fn intercept_only_fit(y: ArrayView1<'_, f64>, spec: &SmoothSpec) -> f64 {
    let kernel = spec.kernel.kernel();
    let n = y.len() as f64;
    let slope = |b: f64| y.iter().map(|&yi| kernel.cdf((b - yi) / spec.h)).sum::<f64>() / n - spec.tau;
    let (ymin, ymax) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mut lo = ymin - 50.0 * spec.h;
    let mut hi = ymax + 50.0 * spec.h;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let s = slope(mid);
        if s == 0.0 {
            return mid;
        }
        if s < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The unpenalized null model: coordinates in `unpenalized` are fit with
/// the others held at zero.
pub fn null_fit(
    data: &Dataset,
    spec: &SmoothSpec,
    unpenalized: &BTreeSet<usize>,
    solver: &dyn Solver,
) -> Result<Array1<f64>> {
    let p = data.p();
    if let Some(&j) = unpenalized.iter().find(|&&j| j >= p) {
        return Err(Error::InvalidParameter(format!("unpenalized index {j} out of range for p = {p}")));
    }
    let mut beta = Array1::zeros(p);
    if unpenalized.is_empty() {
        return Ok(beta);
    }
    if data.has_intercept() && unpenalized.len() == 1 && unpenalized.contains(&0) {
        beta[0] = intercept_only_fit(data.y().view(), spec);
        return Ok(beta);
    }
    let cols: Vec<usize> = unpenalized.iter().copied().collect();
    let reduced = data.select_columns(&cols)?;
    let fit = solver.solve(&reduced, spec, &WeightVector::zeros(cols.len()), None)?;
    for (k, &j) in cols.iter().enumerate() {
        beta[j] = fit.beta[k];
    }
    Ok(beta)
}

/// Smallest lambda at which the null model satisfies the l1 KKT conditions.
pub fn lambda_max(
    data: &Dataset,
    spec: &SmoothSpec,
    unpenalized: &BTreeSet<usize>,
    solver: &dyn Solver,
) -> Result<f64> {
    if (0..data.p()).all(|j| unpenalized.contains(&j)) {
        return Err(Error::AllUnpenalized);
    }
    let beta0 = null_fit(data, spec, unpenalized, solver)?;
    let g = gradient(data, spec, beta0.view())?;
    Ok(g.iter()
        .enumerate()
        .filter(|(j, _)| !unpenalized.contains(j))
        .fold(0.0, |m, (_, v)| m.max(v.abs())))
}

/// `size` log-spaced values from `lambda_max` down to `min_ratio * lambda_max`.
pub fn log_grid(lambda_max: f64, size: usize, min_ratio: f64) -> Result<Vec<f64>> {
    if size < 2 {
        return Err(Error::InvalidParameter(format!("grid size must be >= 2, got {size}")));
    }
    if !(min_ratio > 0.0 && min_ratio < 1.0) {
        return Err(Error::InvalidParameter(format!("min_ratio must lie in (0, 1), got {min_ratio}")));
    }
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::InvalidData(format!(
            "lambda_max = {lambda_max}; the null model already fits every penalized coordinate"
        )));
    }
    let step = min_ratio.ln() / (size - 1) as f64;
    let mut grid: Vec<f64> = (0..size).map(|k| lambda_max * (step * k as f64).exp()).collect();
    grid[0] = lambda_max;
    grid[size - 1] = lambda_max * min_ratio;
    Ok(grid)
}

/// Descending lambda grid for the smoothed QR path.
pub fn lambda_grid(
    data: &Dataset,
    spec: &SmoothSpec,
    size: usize,
    min_ratio: f64,
    unpenalized: &BTreeSet<usize>,
    solver: &dyn Solver,
) -> Result<Vec<f64>> {
    log_grid(lambda_max(data, spec, unpenalized, solver)?, size, min_ratio)
}

/// Fold label of each observation: a seeded shuffle dealt round-robin, so
/// fold sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || folds > n {
        return Err(Error::InvalidParameter(format!("need 2 <= folds <= n, got folds = {folds}, n = {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![0; n];
    for (k, &i) in perm.iter().enumerate() {
        labels[i] = k % folds;
    }
    Ok(labels)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("lambda grid is empty".into()));
    }
    if grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::InvalidParameter("lambda grid values must be finite and >= 0".into()));
    }
    if grid.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidParameter("lambda grid must be descending".into()));
    }
    Ok(())
}

/// Per-cell validation errors of a cross-validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvErrors {
    /// `fold_errors[k][l]`: mean validation loss of fold `k` at `grid[l]`;
    /// `None` when that fit failed.
    pub fold_errors: Vec<Vec<Option<f64>>>,
    /// Average over folds; `None` if any fold failed at that lambda.
    pub mean_error: Vec<Option<f64>>,
    /// Index of the smallest mean error, preferring the larger lambda on ties.
    pub selected_index: usize,
}

/// Generic k-fold driver. `fit_path` fits a training set along the whole
/// grid; `loss` maps a held-out residual to its validation loss. Folds run in
/// parallel and are merged by fold index.
pub fn cv_errors<F, L>(data: &Dataset, grid: &[f64], labels: &[usize], fit_path: F, loss: L) -> Result<CvErrors>
where
    F: Fn(&Dataset, &[f64]) -> Vec<Result<Array1<f64>>> + Sync,
    L: Fn(f64) -> f64 + Sync,
{
    check_grid(grid)?;
    if labels.len() != data.n() {
        return Err(Error::DimensionMismatch {
            what: "fold labels",
            expected: data.n(),
            got: labels.len(),
        });
    }
    let folds = labels.iter().max().map_or(0, |m| m + 1);
    if folds < 2 {
        return Err(Error::InvalidParameter("need at least two folds".into()));
    }

    let fold_errors = (0..folds)
        .into_par_iter()
        .map(|k| -> Result<Vec<Option<f64>>> {
            let train: Vec<usize> = (0..data.n()).filter(|&i| labels[i] != k).collect();
            let test: Vec<usize> = (0..data.n()).filter(|&i| labels[i] == k).collect();
            if test.is_empty() {
                return Err(Error::InvalidParameter(format!("fold {k} is empty")));
            }
            let train = data.select_rows(&train)?;
            let path = fit_path(&train, grid);
            debug_assert_eq!(path.len(), grid.len());
            Ok(path
                .into_iter()
                .map(|fit| {
                    let beta = fit.ok()?;
                    let total: f64 = test
                        .iter()
                        .map(|&i| loss(data.y()[i] - data.x().row(i).dot(&beta)))
                        .sum();
                    Some(total / test.len() as f64)
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let mean_error: Vec<Option<f64>> = (0..grid.len())
        .map(|l| {
            let mut sum = 0.0;
            for row in &fold_errors {
                sum += row[l]?;
            }
            Some(sum / folds as f64)
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (l, e) in mean_error.iter().enumerate() {
        if let Some(e) = *e {
            if best.is_none_or(|(_, b)| e < b) {
                best = Some((l, e));
            }
        }
    }
    let (selected_index, _) = best.ok_or(Error::NoValidLambda)?;
    Ok(CvErrors {
        fold_errors,
        mean_error,
        selected_index,
    })
}

/// Settings of [`cross_validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    pub stages: usize,
    /// Stop a path once the final-stage fit has more than this fraction of
    /// the training rows as nonzero penalized coefficients; smaller lambdas are
    /// then left uncomputed and count as invalid.
    pub saturation: Option<f64>,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            folds: DEFAULT_FOLDS,
            seed: 0,
            stages: crate::irw::DEFAULT_STAGES,
            saturation: Some(DEFAULT_SATURATION),
        }
    }
}

/// Result of [`cross_validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub grid: Vec<f64>,
    pub fold_errors: Vec<Vec<Option<f64>>>,
    pub mean_error: Vec<Option<f64>>,
    pub selected_lambda: f64,
    pub selected_index: usize,
    /// Final-stage fit at the selected lambda on the full data.
    pub selected_fit: FitResult,
    pub stages: usize,
}

/// Multi-stage fits along a descending grid, each warm-started from the
/// previous lambda's stage-1 estimate. A failed cell keeps the last good
/// warm start. With `max_active`, cells after the first final-stage fit
/// with more nonzero penalized coefficients are returned as
/// [`Error::Saturated`] without being fit.
pub fn irw_path(
    data: &Dataset,
    spec: &SmoothSpec,
    penalty: &PenaltySpec,
    n_stages: usize,
    grid: &[f64],
    max_active: Option<usize>,
    solver: &dyn Solver,
) -> Vec<Result<IrwResult>> {
    let mut warm: Option<Array1<f64>> = None;
    let mut saturated: Option<usize> = None;
    grid.iter()
        .map(|&lambda| {
            if let (Some(active), Some(limit)) = (saturated, max_active) {
                return Err(Error::Saturated { active, limit });
            }
            let pen = PenaltySpec {
                lambda,
                ..penalty.clone()
            };
            let opts = IrwOptions {
                warm_start: warm.as_ref().map(|w| w.view()),
            };
            let res = fit_irw_with(data, spec, &pen, n_stages, solver, &opts);
            if let Ok(r) = &res {
                let active = r
                    .beta()
                    .iter()
                    .enumerate()
                    .filter(|&(j, b)| *b != 0.0 && pen.is_penalized(j))
                    .count();
                if max_active.is_some_and(|m| active > m) {
                    saturated = Some(active);
                }
                warm = Some(r.stages[0].beta.clone());
            }
            res
        })
        .collect()
}

/// k-fold cross-validation of the full multi-stage pipeline with check-loss
/// validation error, followed by a refit on all of `data`.
pub fn cross_validate(
    data: &Dataset,
    spec: &SmoothSpec,
    penalty: &PenaltySpec,
    grid: &[f64],
    opts: &CvOptions,
    solver: &dyn Solver,
) -> Result<CvResult> {
    let labels = fold_assignment(data.n(), opts.folds, opts.seed)?;
    cross_validate_with_labels(data, spec, penalty, grid, &labels, opts, solver)
}

/// [`cross_validate`] with explicit fold labels; `opts.folds` and
/// `opts.seed` are ignored.
pub fn cross_validate_with_labels(
    data: &Dataset,
    spec: &SmoothSpec,
    penalty: &PenaltySpec,
    grid: &[f64],
    labels: &[usize],
    opts: &CvOptions,
    solver: &dyn Solver,
) -> Result<CvResult> {
    spec.validate()?;
    if let Some(f) = opts.saturation {
        if !(f > 0.0) {
            return Err(Error::InvalidParameter(format!("saturation fraction must be positive, got {f}")));
        }
    }
    let tau = spec.tau;
    let errs = cv_errors(
        data,
        grid,
        labels,
        |train, grid| {
            let max_active = opts.saturation.map(|f| (f * train.n() as f64).floor() as usize);
            irw_path(train, spec, penalty, opts.stages, grid, max_active, solver)
                .into_iter()
                .map(|r| r.map(|fit| fit.beta().clone()))
                .collect()
        },
        |u| check_loss(tau, u),
    )?;
    let selected_lambda = grid[errs.selected_index];
    let pen = PenaltySpec {
        lambda: selected_lambda,
        ..penalty.clone()
    };
    let refit = fit_irw_with(data, spec, &pen, opts.stages, solver, &IrwOptions::default())?;
    Ok(CvResult {
        grid: grid.to_vec(),
        fold_errors: errs.fold_errors,
        mean_error: errs.mean_error,
        selected_lambda,
        selected_index: errs.selected_index,
        selected_fit: refit.final_fit().clone(),
        stages: opts.stages,
    })
}
