//! Synthetic sparse regression scenarios, the least-squares lasso baseline,
//! evaluation metrics and the replication harness.

mod baseline;
mod bench;
pub mod methods;
mod metrics;
mod scenario;

pub use baseline::{cross_validate_ls_lasso, ls_kkt, ls_lambda_max, solve_ls_lasso, LsLassoConfig, LsLassoCv};
pub use bench::{
    child_seed, mean_se, run_benchmark, run_improvement, run_replication, sub_seed, summarize, theory_lambda,
    BenchConfig, BenchmarkTable, Cell, ImprovementConfig, ImprovementCurves, RepRecord, MAX_FAILURE_FRACTION,
};
pub use methods::{Method, MethodFit, MethodInput, MethodRegistry, MethodSettings, DEFAULT_ROSTER};
pub use metrics::{metrics, prediction_error, MetricsReport};
pub use scenario::{ar1_design, beta_star, generate, sample_noise, NoiseFamily, Scenario, DESIGN_RHO, SIGNAL};
