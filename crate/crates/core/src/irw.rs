//! Iteratively reweighted l1 estimation, the oracle estimator and the
//! relative-improvement diagnostic.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::SmoothSpec;
use crate::objective::{support, Dataset, FitResult};
use crate::penalties::{reweight, PenaltySpec, WeightVector};
use crate::solver::Solver;

pub const DEFAULT_STAGES: usize = 3;

/// Output of [`fit_irw`].
///
/// `stages` holds the solves that were actually run. When the weight vector
/// repeats, the procedure has reached a fixed point: `converged_at` records
/// the stage whose weights repeated and every later stage equals the last
/// entry of `stages` (see [`IrwResult::beta_at`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrwResult {
    pub stages: Vec<FitResult>,
    pub weights_per_stage: Vec<WeightVector>,
    pub active_sets: Vec<Vec<usize>>,
    pub converged_at: Option<usize>,
    pub n_stages: usize,
}

impl IrwResult {
    /// Estimate after stage `stage` (1-based). Stages past a fixed point
    /// return the fixed point.
    pub fn beta_at(&self, stage: usize) -> &Array1<f64> {
        assert!(stage >= 1, "stages are numbered from 1");
        let idx = (stage - 1).min(self.stages.len() - 1);
        &self.stages[idx].beta
    }

    pub fn final_fit(&self) -> &FitResult {
        self.stages.last().expect("at least one stage")
    }

    pub fn beta(&self) -> &Array1<f64> {
        &self.final_fit().beta
    }

    pub fn all_converged(&self) -> bool {
        self.stages.iter().all(|s| s.converged)
    }
}

#[derive(Debug, Clone, Default)]
pub struct IrwOptions<'a> {
    /// Starting point of the stage-1 solve. The stage-1 weights always come
    /// from the zero initial estimate; this only seeds the solver.
    pub warm_start: Option<ArrayView1<'a, f64>>,
}

/// Runs up to `n_stages` reweighted l1 solves starting from `beta^(0) = 0`.
pub fn fit_irw(
    data: &Dataset,
    spec: &SmoothSpec,
    penalty: &PenaltySpec,
    n_stages: usize,
    solver: &dyn Solver,
) -> Result<IrwResult> {
    fit_irw_with(data, spec, penalty, n_stages, solver, &IrwOptions::default())
}

pub fn fit_irw_with(
    data: &Dataset,
    spec: &SmoothSpec,
    penalty: &PenaltySpec,
    n_stages: usize,
    solver: &dyn Solver,
    opts: &IrwOptions<'_>,
) -> Result<IrwResult> {
    if n_stages < 1 {
        return Err(Error::InvalidParameter("need at least one stage".into()));
    }
    penalty.validate()?;
    spec.validate()?;
    if !solver.supports(spec.kernel) {
        return Err(Error::InvalidParameter(format!(
            "solver '{}' does not support the {} kernel",
            solver.name(),
            spec.kernel
        )));
    }
    if let Some(&j) = penalty.unpenalized.iter().find(|&&j| j >= data.p()) {
        return Err(Error::InvalidParameter(format!(
            "unpenalized index {j} out of range for p = {}",
            data.p()
        )));
    }

    let p = data.p();
    let mut previous = Array1::<f64>::zeros(p);
    let mut result = IrwResult {
        stages: Vec::with_capacity(n_stages),
        weights_per_stage: Vec::with_capacity(n_stages),
        active_sets: Vec::with_capacity(n_stages),
        converged_at: None,
        n_stages,
    };

    for stage in 1..=n_stages {
        let weights = reweight(penalty, previous.view());
        if let Some(last) = result.weights_per_stage.last() {
            if *last == weights {
                result.weights_per_stage.push(weights);
                result.converged_at = Some(stage);
                break;
            }
        }
        let init = if stage == 1 {
            opts.warm_start.map(|w| w.to_owned()).unwrap_or_else(|| previous.clone())
        } else {
            previous.clone()
        };
        let fit = solver
            .solve(data, spec, &weights, Some(init.view()))
            .map_err(|e| e.in_stage(stage))?;
        previous.assign(&fit.beta);
        result.active_sets.push(support(fit.beta.view()));
        result.weights_per_stage.push(weights);
        result.stages.push(fit);
    }
    Ok(result)
}

/// Smoothed QR restricted to `support`: coordinates outside it are fixed at
/// zero. Solved on the reduced design and scattered back to length `p`.
pub fn fit_oracle(
    data: &Dataset,
    spec: &SmoothSpec,
    support: &[usize],
    solver: &dyn Solver,
) -> Result<FitResult> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let mut cols: Vec<usize> = support.to_vec();
    cols.sort_unstable();
    cols.dedup();
    if let Some(&j) = cols.iter().find(|&&j| j >= data.p()) {
        return Err(Error::InvalidParameter(format!(
            "support index {j} out of range for p = {}",
            data.p()
        )));
    }
    if data.has_intercept() && cols[0] != 0 {
        return Err(Error::InvalidParameter(
            "oracle support must include the intercept".into(),
        ));
    }
    let reduced = data.select_columns(&cols)?;
    let mut fit = solver.solve(&reduced, spec, &WeightVector::zeros(cols.len()), None)?;
    let mut beta = Array1::zeros(data.p());
    for (k, &j) in cols.iter().enumerate() {
        beta[j] = fit.beta[k];
    }
    fit.beta = beta;
    Ok(fit)
}

/// Outcome of [`relative_improvement`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    /// Entry `k` is the improvement at stage `k + 2`.
    pub values: Vec<f64>,
    /// Set when the first-stage error is zero and the ratio is undefined.
    pub zero_denominator: bool,
}

/// `(||b^(l-1) - b*||^2 - ||b^(l) - b*||^2) / ||b^(1) - b*||^2` for
/// `l = 2..=n_stages`, with stages beyond a fixed point repeating it.
pub fn relative_improvement(result: &IrwResult, beta_star: ArrayView1<'_, f64>) -> Result<Improvement> {
    if result.n_stages < 2 {
        return Err(Error::InvalidParameter(
            "relative improvement needs at least two stages".into(),
        ));
    }
    let p = result.beta_at(1).len();
    if beta_star.len() != p {
        return Err(Error::DimensionMismatch {
            what: "target coefficient vector",
            expected: p,
            got: beta_star.len(),
        });
    }
    let err = |b: &Array1<f64>| -> f64 {
        b.iter().zip(beta_star).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    let denom = err(result.beta_at(1));
    if denom == 0.0 {
        return Ok(Improvement {
            values: Vec::new(),
            zero_denominator: true,
        });
    }
    let errors: Vec<f64> = (1..=result.n_stages).map(|l| err(result.beta_at(l))).collect();
    Ok(Improvement {
        values: errors.windows(2).map(|w| (w[0] - w[1]) / denom).collect(),
        zero_denominator: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelId;
    use crate::penalties::PenaltyFamily;
    use crate::solver::{CdSolver, SolverRegistry};
    use crate::objective::gradient;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fake_result(betas: Vec<Array1<f64>>, n_stages: usize) -> IrwResult {
        let p = betas[0].len();
        IrwResult {
            stages: betas
                .into_iter()
                .map(|beta| FitResult {
                    beta,
                    objective: 0.0,
                    n_iter: 1,
                    converged: true,
                    kkt_inf: 0.0,
                    trace: vec![],
                    degenerate_updates: 0,
                    primal_residual: None,
                    solver: "test".into(),
                })
                .collect(),
            weights_per_stage: vec![WeightVector::zeros(p)],
            active_sets: vec![],
            converged_at: None,
            n_stages,
        }
    }

    fn data(seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats = Array2::from_shape_fn((80, 5), |_| rng.random_range(-2.0..2.0));
        let y = Array1::from_shape_fn(80, |i| 3.0 * feats[[i, 0]] - 2.0 * feats[[i, 1]] + rng.random_range(-0.5..0.5));
        Dataset::with_intercept(&feats, y).unwrap()
    }

    #[test]
    fn improvement_examples() {
        let star = array![1.0, 2.0];
        let same = fake_result(vec![array![0.0, 0.0], array![0.0, 0.0]], 3);
        assert_eq!(relative_improvement(&same, star.view()).unwrap().values, vec![0.0, 0.0]);

        let exact = fake_result(vec![array![0.0, 0.0], star.clone()], 2);
        assert_eq!(relative_improvement(&exact, star.view()).unwrap().values, vec![1.0]);

        let zero = fake_result(vec![star.clone(), star.clone()], 2);
        let imp = relative_improvement(&zero, star.view()).unwrap();
        assert!(imp.zero_denominator && imp.values.is_empty());

        assert!(relative_improvement(&fake_result(vec![star.clone()], 1), star.view()).is_err());
    }

    #[test]
    fn l1_stops_at_stage_two() {
        let d = data(1);
        let spec = SmoothSpec::new(0.5, 0.5, KernelId::Uniform).unwrap();
        let pen = PenaltySpec::new(PenaltyFamily::L1, 0.05).unwrap();
        let res = fit_irw(&d, &spec, &pen, 3, &CdSolver::default()).unwrap();
        assert_eq!(res.stages.len(), 1);
        assert_eq!(res.converged_at, Some(2));
        assert_eq!(res.weights_per_stage[0], res.weights_per_stage[1]);
        assert_eq!(res.beta_at(3), res.beta_at(1));
    }

    #[test]
    fn scad_drops_weights_on_strong_signals() {
        let d = data(2);
        let spec = SmoothSpec::new(0.5, 0.5, KernelId::Uniform).unwrap();
        let pen = PenaltySpec::new(PenaltyFamily::Scad, 0.1).unwrap();
        let res = fit_irw(&d, &spec, &pen, 3, &CdSolver::default()).unwrap();
        let b1 = res.beta_at(1);
        assert!(b1[1].abs() > 3.7 * 0.1 && b1[2].abs() > 3.7 * 0.1);
        assert_eq!(res.weights_per_stage[1].0[1], 0.0);
        assert_eq!(res.weights_per_stage[1].0[2], 0.0);
        // zero coefficients get the full weight back
        for (j, b) in b1.iter().enumerate().skip(1) {
            if *b == 0.0 {
                assert_eq!(res.weights_per_stage[1].0[j], 0.1);
            }
        }
    }

    #[test]
    fn stage_one_matches_plain_l1() {
        let d = data(3);
        let spec = SmoothSpec::new(0.3, 0.4, KernelId::Uniform).unwrap();
        let solver = CdSolver::default();
        for family in PenaltyFamily::ALL {
            let pen = PenaltySpec::new(family, 0.08).unwrap();
            let res = fit_irw(&d, &spec, &pen, 2, &solver).unwrap();
            let w = WeightVector::constant(d.p(), 0.08, &pen.unpenalized);
            let direct = solver.solve(&d, &spec, &w, None).unwrap();
            assert_eq!(res.stages[0].beta, direct.beta, "{family}");
        }
    }

    #[test]
    fn oracle_examples() {
        let reg = SolverRegistry::default();
        let solver = reg.resolve("auto", KernelId::Gaussian).unwrap();
        let spec = SmoothSpec::new(0.5, 0.5, KernelId::Gaussian).unwrap();
        let sym = Dataset::new(
            array![[1.0, 0.3], [1.0, 1.0], [1.0, -0.7], [1.0, 0.2]],
            array![-2.0, -1.0, 1.0, 2.0],
        )
        .unwrap();
        let fit = fit_oracle(&sym, &spec, &[0], solver).unwrap();
        assert!(fit.beta[0].abs() < 1e-8);
        assert_eq!(fit.beta[1], 0.0);

        let d = data(4);
        let full: Vec<usize> = (0..d.p()).collect();
        let ora = fit_oracle(&d, &spec, &full, solver).unwrap();
        let g = gradient(&d, &spec, ora.beta.view()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-5));

        assert!(matches!(fit_oracle(&d, &spec, &[], solver), Err(Error::EmptySupport)));
        assert!(fit_oracle(&d, &spec, &[1, 2], solver).is_err());
    }

    #[test]
    fn solver_errors_carry_the_stage() {
        let d = Dataset::new(array![[1.0], [1.0]], array![3.0, 5.0]).unwrap();
        let spec = SmoothSpec::new(0.5, 0.5, KernelId::Uniform).unwrap();
        let pen = PenaltySpec::new(PenaltyFamily::Scad, 0.1).unwrap();
        let err = fit_irw(&d, &spec, &pen, 3, &CdSolver::default()).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: 1, .. }));
        assert!(matches!(err.root(), Error::DegenerateBand { .. }));
    }
}
