//! Replication harness: seeded Monte Carlo runs of several methods with
//! mean and standard-error summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::methods::{Method, MethodInput, MethodSettings};
use super::metrics::{metrics, prediction_error, MetricsReport};
use super::scenario::{generate, Scenario};
use crate::error::{Error, Result};
use crate::irw::{fit_irw, relative_improvement};
use crate::kernels::KernelId;
use crate::penalties::{PenaltyFamily, PenaltySpec};
use crate::solver::SolverRegistry;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep`; a pure function of `(master, rep)`.
pub fn child_seed(master: u64, rep: usize) -> u64 {
    mix(mix(master) ^ rep as u64)
}

/// Independent sub-stream `stream` of a replication seed.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    mix(seed ^ mix(stream.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

const STREAM_CV: u64 = 1;
const STREAM_TEST: u64 = 2;

/// Replications failing beyond this fraction abort the run.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub reps: usize,
    pub master_seed: u64,
    /// Size of the held-out set for prediction error; 0 skips it.
    pub n_test: usize,
    pub settings: MethodSettings,
}

/// One method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub seed: u64,
    pub method: String,
    pub lambda: Option<f64>,
    pub converged: bool,
    pub metrics: MetricsReport,
}

/// Mean and standard error of one metric for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub scenario: Scenario,
    pub methods: Vec<String>,
    pub reps: usize,
    /// Replications excluded because some method failed on them.
    pub failed_reps: Vec<usize>,
    pub cells: Vec<Cell>,
    pub records: Vec<RepRecord>,
}

impl BenchmarkTable {
    pub fn cell(&self, method: &str, metric: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.method == method && c.metric == metric)
    }
}

/// Mean and `sd / sqrt(m)` with the `m - 1` sample variance.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

/// Runs one replication of every method.
pub fn run_replication(
    scenario: &Scenario,
    methods: &[&dyn Method],
    rep: usize,
    master_seed: u64,
    cfg: &BenchConfig,
) -> Result<Vec<RepRecord>> {
    let seed = child_seed(master_seed, rep);
    let sc = scenario.with_seed(seed);
    let (data, _) = generate(&sc)?;
    let reference = sc.reference_beta()?;
    let test = if cfg.n_test > 0 {
        let test_sc = Scenario {
            n: cfg.n_test,
            ..sc.with_seed(sub_seed(seed, STREAM_TEST))
        };
        Some(generate(&test_sc)?.0)
    } else {
        None
    };
    let support = sc.true_support();
    let input = MethodInput {
        support: &support,
        cv_seed: sub_seed(seed, STREAM_CV),
    };
    let settings = MethodSettings {
        tau: sc.tau,
        ..cfg.settings.clone()
    };
    methods
        .iter()
        .map(|m| {
            let fit = m.fit(&data, &input, &settings)?;
            let mut report = metrics(fit.beta.view(), reference.view(), true)?;
            if let Some(t) = &test {
                report.pred_error = Some(prediction_error(fit.beta.view(), t, sc.tau)?);
            }
            Ok(RepRecord {
                rep,
                seed,
                method: m.name(),
                lambda: fit.lambda,
                converged: fit.converged,
                metrics: report,
            })
        })
        .collect()
}

/// Runs `cfg.reps` seeded replications in parallel and summarizes each
/// method and metric. A replication where any method errors is excluded;
/// more than 10% excluded aborts with [`Error::TooManyFailures`].
pub fn run_benchmark(scenario: &Scenario, methods: &[&dyn Method], cfg: &BenchConfig) -> Result<BenchmarkTable> {
    scenario.validate()?;
    if cfg.reps < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 replications, got {}", cfg.reps)));
    }
    if methods.is_empty() {
        return Err(Error::InvalidParameter("no methods selected".into()));
    }
    let outcomes: Vec<Result<Vec<RepRecord>>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_replication(scenario, methods, rep, cfg.master_seed, cfg))
        .collect();

    let mut records = Vec::new();
    let mut failed_reps = Vec::new();
    for (rep, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(r) => records.extend(r),
            Err(_) => failed_reps.push(rep),
        }
    }
    if failed_reps.len() as f64 > MAX_FAILURE_FRACTION * cfg.reps as f64 {
        return Err(Error::TooManyFailures {
            failed: failed_reps.len(),
            reps: cfg.reps,
        });
    }
    let names: Vec<String> = methods.iter().map(|m| m.name()).collect();
    let cells = summarize(&names, &records);
    Ok(BenchmarkTable {
        scenario: *scenario,
        methods: names,
        reps: cfg.reps,
        failed_reps,
        cells,
        records,
    })
}

/// Per method and metric summary of replication records.
pub fn summarize(methods: &[String], records: &[RepRecord]) -> Vec<Cell> {
    let mut cells = Vec::new();
    for method in methods {
        for metric in MetricsReport::NAMES {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| &r.method == method)
                .filter_map(|r| r.metrics.get(metric))
                .collect();
            if values.is_empty() {
                continue;
            }
            let (mean, se) = mean_se(&values);
            cells.push(Cell {
                method: method.clone(),
                metric: metric.to_string(),
                mean,
                se,
                count: values.len(),
            });
        }
    }
    cells
}

/// Settings of a relative-improvement study at a fixed lambda.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementConfig {
    pub reps: usize,
    pub master_seed: u64,
    pub stages: usize,
    pub lambda: f64,
    pub family: PenaltyFamily,
    pub kernel: KernelId,
    pub settings: MethodSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementCurves {
    /// Entry `k` is stage `k + 2`.
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    /// One curve per replication that produced one.
    pub curves: Vec<Vec<f64>>,
    /// Replications whose first stage already equalled the target.
    pub skipped: usize,
    pub failed: usize,
}

/// Relative improvement per stage averaged over seeded replications.
pub fn run_improvement(scenario: &Scenario, cfg: &ImprovementConfig) -> Result<ImprovementCurves> {
    scenario.validate()?;
    if cfg.stages < 2 || cfg.reps < 1 {
        return Err(Error::InvalidParameter("need at least 2 stages and 1 replication".into()));
    }
    let registry = SolverRegistry::new(&cfg.settings.solvers);
    let solver = registry.resolve("auto", cfg.kernel)?;
    let outcomes: Vec<Result<Option<Vec<f64>>>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let sc = scenario.with_seed(child_seed(cfg.master_seed, rep));
            let (data, _) = generate(&sc)?;
            let settings = MethodSettings {
                tau: sc.tau,
                ..cfg.settings.clone()
            };
            let spec = settings.smooth_spec(&data, cfg.kernel)?;
            let pen = PenaltySpec::new(cfg.family, cfg.lambda)?;
            let res = fit_irw(&data, &spec, &pen, cfg.stages, solver)?;
            let imp = relative_improvement(&res, sc.reference_beta()?.view())?;
            Ok((!imp.zero_denominator).then_some(imp.values))
        })
        .collect();

    let mut curves = Vec::new();
    let (mut skipped, mut failed) = (0, 0);
    for out in outcomes {
        match out {
            Ok(Some(c)) => curves.push(c),
            Ok(None) => skipped += 1,
            Err(_) => failed += 1,
        }
    }
    if failed as f64 > MAX_FAILURE_FRACTION * cfg.reps as f64 {
        return Err(Error::TooManyFailures { failed, reps: cfg.reps });
    }
    let len = cfg.stages - 1;
    let (mean, se) = (0..len)
        .map(|k| mean_se(&curves.iter().map(|c| c[k]).collect::<Vec<_>>()))
        .unzip();
    Ok(ImprovementCurves {
        mean,
        se,
        curves,
        skipped,
        failed,
    })
}

/// `lambda = c sqrt(log p / n)`, the fixed-lambda scale used in
/// contraction studies.
pub fn theory_lambda(c: f64, n: usize, p: usize) -> f64 {
    c * ((p as f64).ln() / n as f64).sqrt()
}
