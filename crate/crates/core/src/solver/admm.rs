//! ADMM on the residual splitting `r = y - X beta`.
//!
//! The problem is scaled by `n` so the per-observation terms read
//! `sum_i l_h(r_i) + n sum_j lambda_j |beta_j|`. With the scaled dual `u` the
//! iterations are
//!
//! 1. `beta <- argmin (rho/2) ||y - r - u - X beta||^2 + n sum_j lambda_j |beta_j|`
//!    (a weighted lasso, solved by coordinate descent),
//! 2. `r_i <- root of tau - Kbar(-r_i/h) + rho u_i + rho (r_i - y_i + x_i'beta) = 0`,
//! 3. `u <- u + r - y + X beta`.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use super::lasso::{LassoConfig, WeightedLasso};
use super::{check_inputs, r_update_root, Solver};
use crate::error::{Error, Result};
use crate::kernels::{KernelId, SmoothSpec};
use crate::objective::{gradient_from_residuals, kkt_from_gradient, l1_term, mean_smoothed_loss, Dataset, FitResult};
use crate::penalties::WeightVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub rho: f64,
    /// Tolerance on `||beta^{(t)} - beta^{(t-1)}||_2`; the primal residual
    /// must also be below `epsilon * sqrt(n)`.
    pub epsilon: f64,
    pub max_iter: usize,
    /// KKT level the solver keeps refining towards once the step test passes.
    pub kkt_tol: f64,
    pub inner: LassoConfig,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            rho: 1.0,
            epsilon: 1e-6,
            max_iter: 5000,
            kkt_tol: 1e-6,
            inner: LassoConfig::default(),
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.epsilon > 0.0) || self.max_iter < 1 {
            return Err(Error::InvalidParameter(format!(
                "ADMM needs epsilon > 0 and max_iter >= 1, got {} and {}",
                self.epsilon, self.max_iter
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct AdmmSolver {
    pub cfg: AdmmConfig,
}

impl AdmmSolver {
    pub fn new(cfg: AdmmConfig) -> Self {
        AdmmSolver { cfg }
    }
}

impl Solver for AdmmSolver {
    fn name(&self) -> &'static str {
        "admm"
    }

    fn supports(&self, _kernel: KernelId) -> bool {
        true
    }

    fn solve(
        &self,
        data: &Dataset,
        spec: &SmoothSpec,
        weights: &WeightVector,
        init: Option<ArrayView1<'_, f64>>,
    ) -> Result<FitResult> {
        solve_admm(data, spec, weights, &self.cfg, init)
    }
}

const MAX_REFINE: usize = 4;
const INNER_TOL_MAX: f64 = 1e-3;

/// Runs ADMM from `init`. Hitting `max_iter` is not an error: the result
/// comes back with `converged = false`.
pub fn solve_admm(
    data: &Dataset,
    spec: &SmoothSpec,
    weights: &WeightVector,
    cfg: &AdmmConfig,
    init: Option<ArrayView1<'_, f64>>,
) -> Result<FitResult> {
    check_inputs(data, spec, weights, init)?;
    cfg.validate()?;
    let n = data.n();
    let p = data.p();
    let rho = cfg.rho;
    let kernel = spec.kernel.kernel();

    let mut beta = init.map(|b| b.to_owned()).unwrap_or_else(|| Array1::zeros(p));
    // c = y - X beta, the residual implied by beta
    let mut c = data.residuals(beta.view())?.to_vec();
    let mut r = c.clone();
    // dual warm start: stationarity of the r-subproblem at r = c
    let mut u: Vec<f64> = r
        .iter()
        .map(|&ri| (kernel.cdf(-ri / spec.h) - spec.tau) / rho)
        .collect();

    let lasso_w: Vec<f64> = weights.0.iter().map(|w| w / rho).collect();
    let mut lasso = WeightedLasso::new(data, cfg.inner.clone());
    let mut resid = vec![0.0; n];
    let mut prev = beta.clone();

    let objective = |c: &[f64], beta: &Array1<f64>| mean_smoothed_loss(spec, c) + l1_term(weights, beta.view());
    let mut trace = Vec::new();
    let mut eps = cfg.epsilon;
    let mut refinements = 0;
    let mut converged = false;
    let mut n_iter = 0;
    let mut kkt_inf = f64::INFINITY;
    let mut primal = f64::INFINITY;
    let sqrt_n = (n as f64).sqrt();
    let mut last_change = f64::INFINITY;

    while n_iter < cfg.max_iter {
        n_iter += 1;
        prev.assign(&beta);

        // beta-update: target z = y - r - u; resid = z - X beta = c - r - u
        for i in 0..n {
            resid[i] = c[i] - r[i] - u[i];
        }
        // inexact inner solves, tightened as the outer iterates settle
        lasso.set_tol((0.1 * last_change).clamp(cfg.inner.tol, INNER_TOL_MAX));
        lasso.solve_in_place(&lasso_w, &mut beta, &mut resid);
        for i in 0..n {
            c[i] = resid[i] + r[i] + u[i];
        }

        // r-update
        for i in 0..n {
            r[i] = r_update_root(spec, rho * u[i], rho, c[i]);
        }

        // dual update and primal residual r - (y - X beta)
        let mut pr2 = 0.0;
        for i in 0..n {
            let d = r[i] - c[i];
            u[i] += d;
            pr2 += d * d;
        }
        primal = pr2.sqrt();

        let step = beta
            .iter()
            .zip(prev.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        trace.push(objective(&c, &beta));
        last_change = step.max(primal / sqrt_n);

        if step <= eps && primal <= eps * sqrt_n {
            let g = gradient_from_residuals(data, spec, &c);
            kkt_inf = kkt_from_gradient(g.view(), weights, beta.view());
            converged = true;
            if kkt_inf <= cfg.kkt_tol || refinements >= MAX_REFINE {
                break;
            }
            refinements += 1;
            eps *= 0.1;
            converged = false;
        }
    }

    // recompute c exactly to avoid drift from incremental updates
    let c_exact = data.residuals(beta.view())?;
    let c_exact = c_exact.as_slice().unwrap();
    if !converged {
        let g = gradient_from_residuals(data, spec, c_exact);
        kkt_inf = kkt_from_gradient(g.view(), weights, beta.view());
    }
    Ok(FitResult {
        objective: objective(c_exact, &beta),
        beta,
        n_iter,
        converged,
        kkt_inf,
        trace,
        degenerate_updates: 0,
        primal_residual: Some(primal),
        solver: "admm".into(),
    })
}
