//! Benchmark estimators behind a common [`Method`] trait, looked up by name.

use std::collections::BTreeSet;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::baseline::{cross_validate_ls_lasso, LsLassoConfig};
use crate::error::{Error, Result};
use crate::irw::{fit_irw, fit_oracle, DEFAULT_STAGES};
use crate::kernels::{KernelId, SmoothSpec};
use crate::model_selection::{
    cross_validate, default_bandwidth, lambda_grid, CvOptions, DEFAULT_FOLDS, DEFAULT_GRID_SIZE, DEFAULT_MIN_RATIO,
    DEFAULT_SATURATION,
};
use crate::objective::Dataset;
use crate::penalties::{PenaltyFamily, PenaltySpec};
use crate::solver::{SolverRegistry, SolverSettings};

/// Shared tuning settings of every method in a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSettings {
    pub tau: f64,
    /// Fixed bandwidth; `None` uses the default rule.
    pub bandwidth: Option<f64>,
    pub stages: usize,
    pub folds: usize,
    pub grid_size: usize,
    pub min_ratio: f64,
    /// Path saturation fraction for cross-validation (see `CvOptions`).
    pub saturation: Option<f64>,
    /// Fixed lambda; `None` tunes lambda by cross-validation.
    pub lambda: Option<f64>,
    pub solvers: SolverSettings,
    pub ls: LsLassoConfig,
}

impl Default for MethodSettings {
    fn default() -> Self {
        MethodSettings {
            tau: 0.5,
            bandwidth: None,
            stages: DEFAULT_STAGES,
            folds: DEFAULT_FOLDS,
            grid_size: DEFAULT_GRID_SIZE,
            min_ratio: DEFAULT_MIN_RATIO,
            saturation: Some(DEFAULT_SATURATION),
            lambda: None,
            solvers: SolverSettings::default(),
            ls: LsLassoConfig::default(),
        }
    }
}

impl MethodSettings {
    /// Bandwidth for `data`, whose dimension counts the intercept column.
    pub fn bandwidth_for(&self, data: &Dataset) -> Result<f64> {
        match self.bandwidth {
            Some(h) => Ok(h),
            None => {
                let features = (data.p() - usize::from(data.has_intercept())).max(1);
                default_bandwidth(data.n(), features, self.tau)
            }
        }
    }

    pub fn smooth_spec(&self, data: &Dataset, kernel: KernelId) -> Result<SmoothSpec> {
        SmoothSpec::new(self.tau, self.bandwidth_for(data)?, kernel)
    }
}

/// Per-replication inputs beyond the training data.
#[derive(Debug, Clone)]
pub struct MethodInput<'a> {
    /// True support including the intercept; used by the oracle only.
    pub support: &'a [usize],
    pub cv_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFit {
    pub beta: Array1<f64>,
    pub lambda: Option<f64>,
    pub converged: bool,
}

pub trait Method: Send + Sync {
    fn name(&self) -> String;

    fn fit(&self, data: &Dataset, input: &MethodInput<'_>, settings: &MethodSettings) -> Result<MethodFit>;
}

/// Cross-validated least-squares lasso.
pub struct LsLasso;

impl Method for LsLasso {
    fn name(&self) -> String {
        "ls-lasso".into()
    }

    fn fit(&self, data: &Dataset, input: &MethodInput<'_>, s: &MethodSettings) -> Result<MethodFit> {
        if let Some(lambda) = s.lambda {
            let fit = super::baseline::solve_ls_lasso(data, lambda, &s.ls, None)?;
            return Ok(MethodFit {
                beta: fit.beta,
                lambda: Some(lambda),
                converged: fit.converged,
            });
        }
        let cv = cross_validate_ls_lasso(data, s.folds, s.grid_size, s.min_ratio, s.saturation, input.cv_seed, &s.ls)?;
        Ok(MethodFit {
            beta: cv.fit.beta,
            lambda: Some(cv.selected_lambda),
            converged: cv.fit.converged,
        })
    }
}

/// Smoothed QR with a penalty family, named `sqr-<penalty>-<kernel>` with
/// `lasso` for the l1 family, solved by iteratively reweighted l1.
pub struct Sqr {
    pub family: PenaltyFamily,
    pub kernel: KernelId,
}

impl Method for Sqr {
    fn name(&self) -> String {
        let penalty = match self.family {
            PenaltyFamily::L1 => "lasso",
            other => other.as_str(),
        };
        format!("sqr-{penalty}-{}", self.kernel)
    }

    fn fit(&self, data: &Dataset, input: &MethodInput<'_>, s: &MethodSettings) -> Result<MethodFit> {
        let spec = s.smooth_spec(data, self.kernel)?;
        let registry = SolverRegistry::new(&s.solvers);
        let solver = registry.resolve("auto", self.kernel)?;
        let stages = if self.family == PenaltyFamily::L1 { 1 } else { s.stages };
        let unpen: BTreeSet<usize> = if data.has_intercept() { [0].into() } else { BTreeSet::new() };
        let template = PenaltySpec::new(self.family, 1.0)?.unpenalized(unpen.iter().copied());
        if let Some(lambda) = s.lambda {
            let pen = PenaltySpec { lambda, ..template };
            let res = fit_irw(data, &spec, &pen, stages, solver)?;
            return Ok(MethodFit {
                converged: res.all_converged(),
                beta: res.beta().clone(),
                lambda: Some(lambda),
            });
        }
        let grid = lambda_grid(data, &spec, s.grid_size, s.min_ratio, &unpen, solver)?;
        let opts = CvOptions {
            folds: s.folds,
            seed: input.cv_seed,
            stages,
            saturation: s.saturation,
        };
        let cv = cross_validate(data, &spec, &template, &grid, &opts, solver)?;
        Ok(MethodFit {
            beta: cv.selected_fit.beta,
            lambda: Some(cv.selected_lambda),
            converged: cv.selected_fit.converged,
        })
    }
}

/// Unpenalized smoothed QR restricted to the true support.
pub struct Oracle {
    pub kernel: KernelId,
}

impl Method for Oracle {
    fn name(&self) -> String {
        if self.kernel == KernelId::Gaussian {
            "oracle".into()
        } else {
            format!("oracle-{}", self.kernel)
        }
    }

    fn fit(&self, data: &Dataset, input: &MethodInput<'_>, s: &MethodSettings) -> Result<MethodFit> {
        let spec = s.smooth_spec(data, self.kernel)?;
        let registry = SolverRegistry::new(&s.solvers);
        let solver = registry.resolve("auto", self.kernel)?;
        let fit = fit_oracle(data, &spec, input.support, solver)?;
        Ok(MethodFit {
            converged: fit.converged,
            beta: fit.beta,
            lambda: None,
        })
    }
}

/// Name-keyed collection of methods.
pub struct MethodRegistry {
    methods: Vec<Box<dyn Method>>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        MethodRegistry { methods: Vec::new() }
    }

    /// Registering a name twice replaces the earlier entry.
    pub fn register<M: Method + 'static>(&mut self, method: M) {
        let name = method.name();
        self.methods.retain(|m| m.name() != name);
        self.methods.push(Box::new(method));
    }

    pub fn get(&self, name: &str) -> Result<&dyn Method> {
        self.methods
            .iter()
            .find(|m| m.name() == name)
            .map(|m| m.as_ref())
            .ok_or_else(|| {
                Error::InvalidParameter(format!("unknown method '{name}' (available: {})", self.names().join(", ")))
            })
    }

    pub fn names(&self) -> Vec<String> {
        self.methods.iter().map(|m| m.name()).collect()
    }
}

impl Default for MethodRegistry {
    /// `ls-lasso`, `sqr-<penalty>-<kernel>` for every pair, `oracle`
    /// (Gaussian kernel) and `oracle-<kernel>` for the rest.
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register(LsLasso);
        for family in PenaltyFamily::ALL {
            for kernel in KernelId::ALL {
                reg.register(Sqr { family, kernel });
            }
        }
        for kernel in KernelId::ALL {
            reg.register(Oracle { kernel });
        }
        reg
    }
}

/// Method roster of the robustness tables.
pub const DEFAULT_ROSTER: [&str; 6] = [
    "ls-lasso",
    "sqr-lasso-uniform",
    "sqr-scad-uniform",
    "sqr-lasso-gaussian",
    "sqr-scad-gaussian",
    "oracle",
];
