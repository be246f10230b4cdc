//! The smoothed empirical quantile objective and its derivatives.
//!
//! Everything is expressed through residuals `r_i = y_i - x_i'beta`. Sums over
//! observations are evaluated sequentially in index order so results are
//! bit-for-bit reproducible.

use ndarray::{Array1, Array2, ArrayView1, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::SmoothSpec;
use crate::penalties::WeightVector;

/// Design matrix and response. The design is stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    intercept: bool,
}

impl Dataset {
    /// A dataset whose first design column is the intercept (all ones).
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        Self::build(x, y, true)
    }

    /// A dataset without an intercept column.
    pub fn without_intercept(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        Self::build(x, y, false)
    }

    /// Prepends a column of ones to `features`.
    pub fn with_intercept(features: &Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let (n, k) = features.dim();
        let mut x = Array2::<f64>::zeros((n, k + 1).f());
        x.column_mut(0).fill(1.0);
        x.slice_mut(ndarray::s![.., 1..]).assign(features);
        Self::build(x, y, true)
    }

    fn build(x: Array2<f64>, y: Array1<f64>, intercept: bool) -> Result<Self> {
        let (n, p) = x.dim();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                what: "response",
                expected: n,
                got: y.len(),
            });
        }
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 observations, got {n}")));
        }
        if p < 1 {
            return Err(Error::InvalidData("design has no columns".into()));
        }
        if let Some(((i, j), v)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite design entry {v} at row {i}, column {j}"
            )));
        }
        if let Some((i, v)) = y.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite response {v} at row {i}")));
        }
        if intercept && x.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidData(
                "first design column must be identically 1 when an intercept is present".into(),
            ));
        }
        let x = if x.t().is_standard_layout() {
            x
        } else {
            let mut xf = Array2::<f64>::zeros((n, p).f());
            xf.assign(&x);
            xf
        };
        Ok(Dataset { x, y, intercept })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    /// Contiguous view of design column `j`.
    pub fn column(&self, j: usize) -> &[f64] {
        self.x
            .column(j)
            .to_slice()
            .expect("design is stored column-major")
    }

    /// Rows `idx` of this dataset, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Dataset> {
        let x = self.x.select(ndarray::Axis(0), idx);
        let y = self.y.select(ndarray::Axis(0), idx);
        Self::build(x, y, self.intercept)
    }

    /// Columns `idx` of this dataset; keeps the intercept flag only when
    /// column 0 is selected first.
    pub fn select_columns(&self, idx: &[usize]) -> Result<Dataset> {
        let x = self.x.select(ndarray::Axis(1), idx);
        let intercept = self.intercept && idx.first() == Some(&0);
        Self::build(x, self.y.clone(), intercept)
    }

    /// `r = y - X beta`.
    pub fn residuals(&self, beta: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_beta(beta)?;
        let mut r = self.y.clone();
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (ri, &xij) in r.iter_mut().zip(self.column(j)) {
                    *ri -= xij * b;
                }
            }
        }
        Ok(r)
    }

    /// `X beta`.
    pub fn predict(&self, beta: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        Ok(&self.y - &self.residuals(beta)?)
    }

    pub(crate) fn check_beta(&self, beta: ArrayView1<'_, f64>) -> Result<()> {
        if beta.len() != self.p() {
            return Err(Error::DimensionMismatch {
                what: "coefficient vector",
                expected: self.p(),
                got: beta.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_weights(&self, weights: &WeightVector) -> Result<()> {
        if weights.len() != self.p() {
            return Err(Error::DimensionMismatch {
                what: "weight vector",
                expected: self.p(),
                got: weights.len(),
            });
        }
        Ok(())
    }

    /// `X' v` with sequential per-column sums.
    pub(crate) fn xt_dot(&self, v: &[f64]) -> Array1<f64> {
        Array1::from_shape_fn(self.p(), |j| dot(self.column(j), v))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome of one weighted-l1 solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta: Array1<f64>,
    /// Final penalized objective `Q_h(beta) + sum_j lambda_j |beta_j|`.
    pub objective: f64,
    pub n_iter: usize,
    pub converged: bool,
    pub kkt_inf: f64,
    /// Penalized objective after each outer iteration.
    pub trace: Vec<f64>,
    /// Coordinate updates skipped because the smoothing band was empty.
    pub degenerate_updates: usize,
    /// `||r - y + X beta||_2` at exit, for splitting solvers.
    pub primal_residual: Option<f64>,
    pub solver: String,
}

impl FitResult {
    /// Indices of nonzero coefficients.
    pub fn support(&self) -> Vec<usize> {
        support(self.beta.view())
    }
}

pub fn support(beta: ArrayView1<'_, f64>) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// `rho_tau(u) = u (tau - 1(u < 0))`.
#[inline]
pub fn check_loss(tau: f64, u: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// Mean check loss of a residual vector.
pub fn mean_check_loss(tau: f64, r: ArrayView1<'_, f64>) -> f64 {
    r.iter().map(|&u| check_loss(tau, u)).sum::<f64>() / r.len() as f64
}

/// Mean smoothed loss of a residual vector.
pub fn mean_smoothed_loss(spec: &SmoothSpec, r: &[f64]) -> f64 {
    let kernel = spec.kernel.kernel();
    r.iter()
        .map(|&u| kernel.smoothed_loss(spec.tau, spec.h, u))
        .sum::<f64>()
        / r.len() as f64
}

/// `Q_h(beta) = (1/n) sum_i l_h(y_i - x_i'beta)`.
pub fn smoothed_objective(data: &Dataset, spec: &SmoothSpec, beta: ArrayView1<'_, f64>) -> Result<f64> {
    let r = data.residuals(beta)?;
    Ok(mean_smoothed_loss(spec, r.as_slice().unwrap()))
}

/// `Q_h(beta) + sum_j lambda_j |beta_j|`.
pub fn penalized_objective(
    data: &Dataset,
    spec: &SmoothSpec,
    weights: &WeightVector,
    beta: ArrayView1<'_, f64>,
) -> Result<f64> {
    data.check_weights(weights)?;
    Ok(smoothed_objective(data, spec, beta)? + l1_term(weights, beta))
}

pub(crate) fn l1_term(weights: &WeightVector, beta: ArrayView1<'_, f64>) -> f64 {
    weights.0.iter().zip(beta).map(|(w, b)| w * b.abs()).sum()
}

/// Gradient from a residual vector: `(1/n) sum_i {Kbar(-r_i/h) - tau} x_i`.
pub(crate) fn gradient_from_residuals(data: &Dataset, spec: &SmoothSpec, r: &[f64]) -> Array1<f64> {
    let kernel = spec.kernel.kernel();
    let n = data.n() as f64;
    let score: Vec<f64> = r
        .iter()
        .map(|&ri| kernel.cdf(-ri / spec.h) - spec.tau)
        .collect();
    data.xt_dot(&score) / n
}

pub fn gradient(data: &Dataset, spec: &SmoothSpec, beta: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let r = data.residuals(beta)?;
    Ok(gradient_from_residuals(data, spec, r.as_slice().unwrap()))
}

/// `(1/n) sum_i K_h(-r_i) x_i x_i'`. Diagnostics only.
pub fn hessian(data: &Dataset, spec: &SmoothSpec, beta: ArrayView1<'_, f64>) -> Result<Array2<f64>> {
    let r = data.residuals(beta)?;
    let n = data.n();
    let p = data.p();
    let w: Vec<f64> = r.iter().map(|&ri| spec.scaled_density(-ri) / n as f64).collect();
    let mut hess = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        let cj = data.column(j);
        for k in 0..=j {
            let ck = data.column(k);
            let v: f64 = (0..n).map(|i| w[i] * cj[i] * ck[i]).sum();
            hess[[j, k]] = v;
            hess[[k, j]] = v;
        }
    }
    Ok(hess)
}

/// Infinity-norm violation of first-order stationarity for the weighted-l1
/// problem at `beta`.
pub fn kkt_residual(
    data: &Dataset,
    spec: &SmoothSpec,
    weights: &WeightVector,
    beta: ArrayView1<'_, f64>,
) -> Result<f64> {
    data.check_weights(weights)?;
    let g = gradient(data, spec, beta)?;
    Ok(kkt_from_gradient(g.view(), weights, beta))
}

pub(crate) fn kkt_from_gradient(g: ArrayView1<'_, f64>, weights: &WeightVector, beta: ArrayView1<'_, f64>) -> f64 {
    g.iter()
        .zip(weights.0.iter())
        .zip(beta)
        .map(|((&gj, &lj), &bj)| {
            if bj != 0.0 {
                (gj + lj * bj.signum()).abs()
            } else {
                (gj.abs() - lj).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Column centering and scaling of the non-intercept columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub means: Array1<f64>,
    pub scales: Array1<f64>,
}

/// Centers and scales every non-intercept column to mean 0 and unit
/// (population) variance. Constant columns are left with scale 1.
/// Requires an intercept so the back-transform can absorb the centering.
pub fn standardize(data: &Dataset) -> Result<(Dataset, Scaling)> {
    if !data.has_intercept() {
        return Err(Error::InvalidParameter(
            "standardization requires an intercept column".into(),
        ));
    }
    let n = data.n() as f64;
    let p = data.p();
    let mut means = Array1::zeros(p);
    let mut scales = Array1::ones(p);
    let mut x = data.x.clone();
    for j in 1..p {
        let col = data.column(j);
        let m = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        let s = if var > 0.0 { var.sqrt() } else { 1.0 };
        means[j] = m;
        scales[j] = s;
        x.column_mut(j).mapv_inplace(|v| (v - m) / s);
    }
    Ok((
        Dataset::build(x, data.y.clone(), true)?,
        Scaling { means, scales },
    ))
}

impl Scaling {
    /// Coefficients on the original scale from coefficients fitted on the
    /// standardized design.
    pub fn back_transform(&self, beta: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut out = Array1::zeros(beta.len());
        let mut shift = 0.0;
        for j in 1..beta.len() {
            out[j] = beta[j] / self.scales[j];
            shift += out[j] * self.means[j];
        }
        out[0] = beta[0] - shift;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelId;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn one_point(y: f64) -> Dataset {
        // n must be at least 2; duplicate the point
        Dataset::new(array![[1.0], [1.0]], array![y, y]).unwrap()
    }

    #[test]
    fn check_loss_values() {
        assert_eq!(check_loss(0.5, 2.0), 1.0);
        assert_abs_diff_eq!(check_loss(0.3, -1.0), 0.7, epsilon = 1e-15);
        assert_eq!(check_loss(0.8, 0.0), 0.0);
    }

    #[test]
    fn objective_at_single_point() {
        let spec = SmoothSpec::new(0.5, 1.0, KernelId::Uniform).unwrap();
        let d = one_point(0.0);
        assert_abs_diff_eq!(smoothed_objective(&d, &spec, array![0.0].view()).unwrap(), 0.25, epsilon = 1e-15);
        let g = gradient(&d, &spec, array![0.0].view()).unwrap();
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn gradient_outside_band() {
        let spec = SmoothSpec::new(0.3, 1.0, KernelId::Uniform).unwrap();
        let g = gradient(&one_point(-10.0), &spec, array![0.0].view()).unwrap();
        assert_abs_diff_eq!(g[0], 0.7, epsilon = 1e-15);
    }

    #[test]
    fn uniform_objective_equals_check_outside_band() {
        let x = array![[1.0, 0.5], [1.0, -1.0], [1.0, 2.0]];
        let y = array![3.0, -4.0, 5.0];
        let d = Dataset::new(x, y).unwrap();
        let spec = SmoothSpec::new(0.3, 0.5, KernelId::Uniform).unwrap();
        let beta = array![0.1, 0.2];
        let r = d.residuals(beta.view()).unwrap();
        assert!(r.iter().all(|v| v.abs() >= 0.5));
        let obj = smoothed_objective(&d, &spec, beta.view()).unwrap();
        assert_abs_diff_eq!(obj, mean_check_loss(0.3, r.view()), epsilon = 1e-14);
    }

    #[test]
    fn doubling_bandwidth_doubles_objective_at_zero_residuals() {
        let d = Dataset::new(array![[1.0, 2.0], [1.0, -1.0]], array![3.0, 0.0]).unwrap();
        let beta = array![1.0, 1.0];
        let o1 = smoothed_objective(&d, &SmoothSpec::new(0.5, 0.3, KernelId::Uniform).unwrap(), beta.view()).unwrap();
        let o2 = smoothed_objective(&d, &SmoothSpec::new(0.5, 0.6, KernelId::Uniform).unwrap(), beta.view()).unwrap();
        assert_abs_diff_eq!(o2, 2.0 * o1, epsilon = 1e-15);
        assert_abs_diff_eq!(o1, 0.3 / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn hessian_examples() {
        let spec = SmoothSpec::new(0.5, 0.1, KernelId::Uniform).unwrap();
        let d = Dataset::new(array![[1.0, 1.0], [1.0, 2.0]], array![5.0, -5.0]).unwrap();
        let h = hessian(&d, &spec, array![0.0, 0.0].view()).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));

        let spec = SmoothSpec::new(0.5, 1.0, KernelId::Gaussian).unwrap();
        let h = hessian(&one_point(0.0), &spec, array![0.0].view()).unwrap();
        assert_abs_diff_eq!(h[[0, 0]], 1.0 / (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn kkt_examples() {
        let d = Dataset::new(
            array![[1.0, 0.3], [1.0, -1.2], [1.0, 0.8], [1.0, 0.1]],
            array![0.5, -0.5, 1.0, -1.0],
        )
        .unwrap();
        let spec = SmoothSpec::new(0.5, 0.5, KernelId::Gaussian).unwrap();
        let zero = Array1::zeros(2);
        let g = gradient(&d, &spec, zero.view()).unwrap();

        let free = WeightVector::zeros(2);
        let k = kkt_residual(&d, &spec, &free, zero.view()).unwrap();
        assert_abs_diff_eq!(k, g.iter().fold(0.0f64, |m, v| m.max(v.abs())), epsilon = 1e-15);

        // intercept gradient here is exactly zero by symmetry of y about 0
        assert_abs_diff_eq!(g[0], 0.0, epsilon = 1e-15);
        let w = WeightVector(array![0.0, g[1].abs() + 1e-3]);
        assert!(kkt_residual(&d, &spec, &w, zero.view()).unwrap() <= 1e-15);
    }

    #[test]
    fn dimension_errors() {
        let d = one_point(1.0);
        let spec = SmoothSpec::new(0.5, 1.0, KernelId::Gaussian).unwrap();
        assert!(matches!(
            gradient(&d, &spec, array![0.0, 1.0].view()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(kkt_residual(&d, &spec, &WeightVector::zeros(3), array![0.0].view()).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(array![[1.0], [2.0]], array![0.0, 1.0]).is_err());
        assert!(Dataset::new(array![[1.0, f64::NAN], [1.0, 0.0]], array![0.0, 1.0]).is_err());
        assert!(Dataset::new(array![[1.0]], array![0.0]).is_err());
        assert!(Dataset::new(array![[1.0], [1.0]], array![0.0]).is_err());
        let d = Dataset::with_intercept(&array![[2.0], [3.0]], array![0.0, 1.0]).unwrap();
        assert_eq!(d.p(), 2);
        assert_eq!(d.column(1), &[2.0, 3.0]);
    }

    #[test]
    fn standardize_round_trip() {
        let d = Dataset::with_intercept(
            &array![[1.0, 10.0], [2.0, 30.0], [4.0, 20.0], [7.0, 0.0]],
            array![1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        let (ds, scaling) = standardize(&d).unwrap();
        let beta_std = array![0.3, -1.2, 0.7];
        let beta = scaling.back_transform(beta_std.view());
        let a = ds.predict(beta_std.view()).unwrap();
        let b = d.predict(beta.view()).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-12);
        }
    }
}
