//! Weighted-l1 penalized smoothed quantile regression solvers.
//!
//! Each algorithm implements [`Solver`] and is looked up by name in a
//! [`SolverRegistry`]. The stock registry holds coordinate descent (`"cd"`,
//! uniform kernel only) and ADMM (`"admm"`, every kernel).

mod admm;
mod cd;
mod lasso;
mod root;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

pub use admm::{solve_admm, AdmmConfig, AdmmSolver};
pub use cd::{solve_cd, CdConfig, CdSolver};
pub(crate) use lasso::ls_lasso;
pub use lasso::{LassoConfig, LassoFit, WeightedLasso};
pub use root::r_update_root;

use crate::error::{Error, Result};
use crate::kernels::{KernelId, SmoothSpec};
use crate::objective::{Dataset, FitResult};
use crate::penalties::WeightVector;

/// `sign(a) max(|a| - b, 0)`.
#[inline]
pub fn soft_threshold(a: f64, b: f64) -> f64 {
    if a > b {
        a - b
    } else if a < -b {
        a + b
    } else {
        0.0
    }
}

/// A solver for `min_beta Q_h(beta) + sum_j lambda_j |beta_j|`.
pub trait Solver: Send + Sync {
    fn name(&self) -> &'static str;

    fn supports(&self, kernel: KernelId) -> bool;

    /// Solve from `init` (zero when `None`).
    fn solve(
        &self,
        data: &Dataset,
        spec: &SmoothSpec,
        weights: &WeightVector,
        init: Option<ArrayView1<'_, f64>>,
    ) -> Result<FitResult>;
}

/// Configuration of every registered solver.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub cd: CdConfig,
    pub admm: AdmmConfig,
}

/// Name-keyed collection of solvers.
pub struct SolverRegistry {
    solvers: Vec<Box<dyn Solver>>,
}

impl SolverRegistry {
    pub fn empty() -> Self {
        SolverRegistry {
            solvers: Vec::new(),
        }
    }

    /// Coordinate descent and ADMM with the given settings.
    pub fn new(settings: &SolverSettings) -> Self {
        let mut reg = Self::empty();
        reg.register(CdSolver::new(settings.cd.clone()));
        reg.register(AdmmSolver::new(settings.admm.clone()));
        reg
    }

    /// Registering a name twice replaces the earlier entry.
    pub fn register<S: Solver + 'static>(&mut self, solver: S) {
        self.solvers.retain(|s| s.name() != solver.name());
        self.solvers.push(Box::new(solver));
    }

    pub fn get(&self, name: &str) -> Option<&dyn Solver> {
        self.solvers
            .iter()
            .find(|s| s.name() == name)
            .map(|s| s.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.solvers.iter().map(|s| s.name()).collect()
    }

    /// Resolves `"auto"` (CD for the uniform kernel, ADMM otherwise) or an
    /// explicit name, checking kernel compatibility.
    pub fn resolve(&self, name: &str, kernel: KernelId) -> Result<&dyn Solver> {
        let name = match name {
            "auto" if kernel == KernelId::Uniform => "cd",
            "auto" => "admm",
            other => other,
        };
        let solver = self.get(name).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "unknown solver '{name}' (available: {})",
                self.names().join(", ")
            ))
        })?;
        if !solver.supports(kernel) {
            return Err(Error::InvalidParameter(format!(
                "solver '{name}' does not support the {kernel} kernel"
            )));
        }
        Ok(solver)
    }
}

impl Default for SolverRegistry {
    fn default() -> Self {
        Self::new(&SolverSettings::default())
    }
}

/// Shared validation of solver inputs.
pub(crate) fn check_inputs(
    data: &Dataset,
    spec: &SmoothSpec,
    weights: &WeightVector,
    init: Option<ArrayView1<'_, f64>>,
) -> Result<()> {
    spec.validate()?;
    data.check_weights(weights)?;
    if let Some(b) = init {
        data.check_beta(b)?;
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("initial coefficients must be finite".into()));
        }
    }
    Ok(())
}
