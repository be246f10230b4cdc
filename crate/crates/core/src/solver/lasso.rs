//! Cyclic coordinate descent for the weighted least-squares lasso
//!
//! ```text
//! min_beta (1/2n) ||z - X beta||^2 + sum_j w_j |beta_j|
//! ```
//!
//! with an active-set strategy: after a full sweep, only nonzero or
//! unpenalized coordinates are cycled until they settle, then a full sweep
//! checks whether anything else wants to enter.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use super::soft_threshold;
use crate::error::{Error, Result};
use crate::objective::{dot, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    /// Tolerance on `||beta^{(t)} - beta^{(t-1)}||_2` between sweeps.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            tol: 1e-8,
            max_sweeps: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub sweeps: usize,
    pub converged: bool,
}

/// Reusable lasso workspace for one design matrix.
#[derive(Debug, Clone)]
pub struct WeightedLasso<'a> {
    data: &'a Dataset,
    /// `||x_j||^2 / n`
    col_sq: Vec<f64>,
    cfg: LassoConfig,
    active: Vec<bool>,
}

impl<'a> WeightedLasso<'a> {
    pub fn new(data: &'a Dataset, cfg: LassoConfig) -> Self {
        let n = data.n() as f64;
        let col_sq = (0..data.p())
            .map(|j| {
                let c = data.column(j);
                dot(c, c) / n
            })
            .collect();
        WeightedLasso {
            data,
            col_sq,
            cfg,
            active: vec![false; data.p()],
        }
    }

    pub fn set_tol(&mut self, tol: f64) {
        self.cfg.tol = tol;
    }

    /// Minimizes from the current `beta`, keeping `resid = z - X beta` in sync.
    pub fn solve_in_place(&mut self, w: &[f64], beta: &mut Array1<f64>, resid: &mut [f64]) -> LassoFit {
        let p = self.data.p();
        let tol2 = self.cfg.tol * self.cfg.tol;
        let mut sweeps = 0;
        let mut full = true;
        loop {
            if sweeps >= self.cfg.max_sweeps {
                return LassoFit {
                    sweeps,
                    converged: false,
                };
            }
            sweeps += 1;
            let mut step2 = 0.0;
            let mut entered = false;
            for j in 0..p {
                if !full && !self.active[j] {
                    continue;
                }
                let d = self.update(j, w[j], beta, resid);
                step2 += d * d;
                let now_active = beta[j] != 0.0 || w[j] == 0.0;
                if full && now_active && !self.active[j] {
                    entered = true;
                }
                if full {
                    self.active[j] = now_active;
                }
            }
            if step2 <= tol2 {
                if full && !entered {
                    return LassoFit {
                        sweeps,
                        converged: true,
                    };
                }
                full = true;
            } else {
                full = false;
            }
        }
    }

    #[inline]
    fn update(&self, j: usize, w: f64, beta: &mut Array1<f64>, resid: &mut [f64]) -> f64 {
        let cs = self.col_sq[j];
        if cs == 0.0 {
            return 0.0;
        }
        let col = self.data.column(j);
        let n = self.data.n() as f64;
        let old = beta[j];
        let rho = dot(col, resid) / n + cs * old;
        let new = soft_threshold(rho, w) / cs;
        let d = new - old;
        if d != 0.0 {
            for (ri, &xij) in resid.iter_mut().zip(col) {
                *ri -= xij * d;
            }
            beta[j] = new;
        }
        d
    }
}

/// Squared-loss lasso with an unpenalized intercept:
/// `min (1/2n) ||y - X beta||^2 + lambda ||beta_{-0}||_1`.
pub(crate) fn ls_lasso(
    data: &Dataset,
    lambda: f64,
    cfg: &LassoConfig,
    init: Option<ArrayView1<'_, f64>>,
) -> Result<(Array1<f64>, LassoFit)> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let p = data.p();
    let mut beta = match init {
        Some(b) => {
            data.check_beta(b)?;
            b.to_owned()
        }
        None => Array1::zeros(p),
    };
    let mut resid = data.residuals(beta.view())?.to_vec();
    let w: Vec<f64> = (0..p)
        .map(|j| if j == 0 && data.has_intercept() { 0.0 } else { lambda })
        .collect();
    let mut lasso = WeightedLasso::new(data, cfg.clone());
    let fit = lasso.solve_in_place(&w, &mut beta, &mut resid);
    Ok((beta, fit))
}
