//! Coordinate descent for the uniform kernel.
//!
//! With `K = 1/2` on `[-1, 1]` the smoothed loss is quadratic for residuals in
//! the band `|r_i| <= h` and linear outside, so each coordinate has a
//! closed-form soft-threshold update given the current band membership:
//!
//! ```text
//! beta_j = S( [2h tau sum_i x_ij - 2h sum_{C3} x_ij - h sum_{C2} x_ij
//!              + sum_{C2} x_ij (r_i + x_ij beta_j)] / sum_{C2} x_ij^2,
//!             2 n h lambda_j / sum_{C2} x_ij^2 )
//! ```
//!
//! where `C2 = {|r_i| <= h}` and `C3 = {r_i < -h}`. If the update moves some
//! residual across a band edge the quadratic model is no longer exact; in that
//! case the true change in objective is checked and, if it went up, the
//! coordinate is minimized exactly by bisection on its subgradient.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{check_inputs, soft_threshold, Solver};
use crate::error::{Error, Result};
use crate::kernels::{KernelId, SmoothSpec};
use crate::objective::{gradient_from_residuals, kkt_from_gradient, l1_term, mean_smoothed_loss, Dataset, FitResult};
use crate::penalties::WeightVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdConfig {
    /// Absolute tolerance on `||beta^{(t)} - beta^{(t-1)}||_2` between sweeps.
    pub epsilon: f64,
    /// Sweep cap (full and active-set sweeps both count).
    pub max_iter: usize,
    /// KKT level the solver keeps refining towards once the step test passes.
    pub kkt_tol: f64,
}

impl Default for CdConfig {
    fn default() -> Self {
        CdConfig {
            epsilon: 1e-6,
            max_iter: 5000,
            kkt_tol: 1e-6,
        }
    }
}

impl CdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.max_iter < 1 {
            return Err(Error::InvalidParameter(format!(
                "coordinate descent needs epsilon > 0 and max_iter >= 1, got {} and {}",
                self.epsilon, self.max_iter
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct CdSolver {
    pub cfg: CdConfig,
}

impl CdSolver {
    pub fn new(cfg: CdConfig) -> Self {
        CdSolver { cfg }
    }
}

impl Solver for CdSolver {
    fn name(&self) -> &'static str {
        "cd"
    }

    fn supports(&self, kernel: KernelId) -> bool {
        kernel == KernelId::Uniform
    }

    fn solve(
        &self,
        data: &Dataset,
        spec: &SmoothSpec,
        weights: &WeightVector,
        init: Option<ArrayView1<'_, f64>>,
    ) -> Result<FitResult> {
        solve_cd(data, spec, weights, &self.cfg, init)
    }
}

// maximum number of times the step tolerance is tightened to meet kkt_tol
const MAX_REFINE: usize = 4;

pub fn solve_cd(
    data: &Dataset,
    spec: &SmoothSpec,
    weights: &WeightVector,
    cfg: &CdConfig,
    init: Option<ArrayView1<'_, f64>>,
) -> Result<FitResult> {
    check_inputs(data, spec, weights, init)?;
    cfg.validate()?;
    if spec.kernel != KernelId::Uniform {
        return Err(Error::NonUniformKernel(spec.kernel));
    }
    let p = data.p();
    let mut beta = init.map(|b| b.to_owned()).unwrap_or_else(|| Array1::zeros(p));
    let mut r = data.residuals(beta.view())?.to_vec();
    let w = weights.as_slice();
    let col_sum: Vec<f64> = (0..p).map(|j| data.column(j).iter().sum()).collect();

    let mut state = CdState {
        data,
        tau: spec.tau,
        h: spec.h,
        col_sum,
        degenerate: 0,
    };

    let objective = |r: &[f64], beta: &Array1<f64>| mean_smoothed_loss(spec, r) + l1_term(weights, beta.view());
    let mut trace = Vec::new();
    let mut active = vec![false; p];
    let mut full = true;
    let mut eps = cfg.epsilon;
    let mut refinements = 0;
    let mut n_iter = 0;
    let mut converged = false;
    let mut kkt_inf = f64::INFINITY;

    while n_iter < cfg.max_iter {
        n_iter += 1;
        let mut step2 = 0.0;
        let mut entered = false;
        let mut updated = 0usize;
        let mut visited = 0usize;
        for j in 0..p {
            if !full && !active[j] {
                continue;
            }
            visited += 1;
            match state.update(j, w[j], &mut beta, &mut r) {
                Some(d) => {
                    updated += 1;
                    step2 += d * d;
                }
                None => state.degenerate += 1,
            }
            if full {
                let now = beta[j] != 0.0 || w[j] == 0.0;
                entered |= now && !active[j];
                active[j] = now;
            }
        }
        if full && updated == 0 && visited > 0 {
            return Err(Error::DegenerateBand { sweep: n_iter });
        }
        trace.push(objective(&r, &beta));

        if step2.sqrt() <= eps {
            if !full || entered {
                full = true;
                continue;
            }
            let g = gradient_from_residuals(data, spec, &r);
            kkt_inf = kkt_from_gradient(g.view(), weights, beta.view());
            converged = true;
            if kkt_inf <= cfg.kkt_tol || refinements >= MAX_REFINE {
                break;
            }
            refinements += 1;
            eps *= 0.1;
            converged = false;
        } else {
            full = false;
        }
    }

    if !converged {
        let g = gradient_from_residuals(data, spec, &r);
        kkt_inf = kkt_from_gradient(g.view(), weights, beta.view());
    }
    Ok(FitResult {
        objective: objective(&r, &beta),
        beta,
        n_iter,
        converged,
        kkt_inf,
        trace,
        degenerate_updates: state.degenerate,
        primal_residual: None,
        solver: "cd".into(),
    })
}

struct CdState<'a> {
    data: &'a Dataset,
    tau: f64,
    h: f64,
    col_sum: Vec<f64>,
    degenerate: usize,
}

#[inline]
fn region(r: f64, h: f64) -> u8 {
    if r < -h {
        0
    } else if r <= h {
        1
    } else {
        2
    }
}

#[inline]
fn uniform_loss(tau: f64, h: f64, u: f64) -> f64 {
    let v = u / h;
    let hub = if v.abs() <= 1.0 { 0.5 * v * v + 0.5 } else { v.abs() };
    0.5 * h * hub + (tau - 0.5) * u
}

impl CdState<'_> {
    /// Updates coordinate `j`; returns the change, or `None` when the band is
    /// empty for this column and the coordinate is not already stationary.
    fn update(&self, j: usize, lambda: f64, beta: &mut Array1<f64>, r: &mut [f64]) -> Option<f64> {
        let col = self.data.column(j);
        let (h, tau) = (self.h, self.tau);
        let n = self.data.n() as f64;
        let old = beta[j];

        let (mut s3, mut s2, mut q2, mut p2) = (0.0, 0.0, 0.0, 0.0);
        for (&ri, &xij) in r.iter().zip(col) {
            if ri < -h {
                s3 += xij;
            } else if ri <= h {
                s2 += xij;
                q2 += xij * xij;
                p2 += xij * (ri + xij * old);
            }
        }
        if q2 == 0.0 {
            // empty band: the coordinate objective is piecewise linear here and
            // only a stationary coordinate has a well-defined minimizer
            let g = (s3 - tau * self.col_sum[j]) / n;
            let stationary = if old != 0.0 {
                g + lambda * old.signum() == 0.0
            } else {
                g.abs() <= lambda
            };
            return if stationary { Some(0.0) } else { None };
        }
        let a = 2.0 * h * tau * self.col_sum[j] - 2.0 * h * s3 - h * s2 + p2;
        let mut new = soft_threshold(a, 2.0 * n * h * lambda) / q2;
        let mut d = new - old;
        if d == 0.0 {
            return Some(0.0);
        }

        // the quadratic model is exact unless some residual changes band
        let crossed = r
            .iter()
            .zip(col)
            .any(|(&ri, &xij)| region(ri - xij * d, h) != region(ri, h));
        if crossed {
            let delta = r
                .iter()
                .zip(col)
                .map(|(&ri, &xij)| uniform_loss(tau, h, ri - xij * d) - uniform_loss(tau, h, ri))
                .sum::<f64>()
                / n
                + lambda * (new.abs() - old.abs());
            if delta > 0.0 {
                new = self.line_minimize(col, lambda, old, new, r);
                d = new - old;
            }
        }

        if d != 0.0 {
            for (ri, &xij) in r.iter_mut().zip(col) {
                *ri -= xij * d;
            }
            beta[j] = new;
        }
        Some(d)
    }

    /// Exact minimizer of the coordinate objective between `old` and `cand`,
    /// by bisection on its right derivative.
    fn line_minimize(&self, col: &[f64], lambda: f64, old: f64, cand: f64, r: &[f64]) -> f64 {
        let (h, tau) = (self.h, self.tau);
        let n = self.data.n() as f64;
        // derivative of the smooth part at coefficient value b
        let smooth_grad = |b: f64| -> f64 {
            let shift = b - old;
            let mut g = 0.0;
            for (&ri, &xij) in r.iter().zip(col) {
                let rb = ri - xij * shift;
                g += ((0.5 * (1.0 - rb / h)).clamp(0.0, 1.0) - tau) * xij;
            }
            g / n
        };
        let (mut lo, mut hi) = if old < cand { (old, cand) } else { (cand, old) };
        if lo <= 0.0 && hi >= 0.0 && smooth_grad(0.0).abs() <= lambda {
            return 0.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            let right = smooth_grad(mid) + if mid >= 0.0 { lambda } else { -lambda };
            if right >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}
