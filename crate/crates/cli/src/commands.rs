use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use sqr::irw::fit_irw;
use sqr::model_selection::{
    cross_validate, default_bandwidth, lambda_grid, CvOptions, DEFAULT_FOLDS, DEFAULT_GRID_SIZE, DEFAULT_MIN_RATIO,
};
use sqr::objective::{kkt_residual, standardize, Scaling};
use sqr::penalties::reweight;
use sqr::simulation::methods::{MethodRegistry, MethodSettings, DEFAULT_ROSTER};
use sqr::simulation::{
    generate, run_benchmark, run_improvement, theory_lambda, BenchConfig, ImprovementConfig, NoiseFamily, Scenario,
};
use sqr::solver::{AdmmConfig, CdConfig, LassoConfig};
use sqr::{Dataset, KernelId, PenaltyFamily, PenaltySpec, SmoothSpec, SolverRegistry, SolverSettings, WeightVector};

use crate::failure::{Failure, Status};
use crate::io::{create, fmt_f64, read_columns, read_dataset, write_columns, write_dataset, INTERCEPT_NAME};
use crate::manifest::{self, Manifest};

/// `auto` or a positive literal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Bandwidth {
    Auto,
    Value(f64),
}

impl FromStr for Bandwidth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim().eq_ignore_ascii_case("auto") {
            return Ok(Bandwidth::Auto);
        }
        match s.trim().parse::<f64>() {
            Ok(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Value(h)),
            _ => Err(format!("bandwidth must be 'auto' or a positive number, got '{s}'")),
        }
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::Auto => f.write_str("auto"),
            Bandwidth::Value(h) => write!(f, "{h}"),
        }
    }
}

impl From<Bandwidth> for String {
    fn from(b: Bandwidth) -> String {
        b.to_string()
    }
}

impl TryFrom<String> for Bandwidth {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl Bandwidth {
    fn as_option(self) -> Option<f64> {
        match self {
            Bandwidth::Auto => None,
            Bandwidth::Value(h) => Some(h),
        }
    }

    /// `data` carries an intercept, which the default rule does not count.
    fn resolve(self, data: &Dataset, tau: f64) -> Result<f64, Failure> {
        match self {
            Bandwidth::Value(h) => Ok(h),
            Bandwidth::Auto => {
                let features = (data.p() - usize::from(data.has_intercept())).max(1);
                Ok(default_bandwidth(data.n(), features, tau)?)
            }
        }
    }
}

pub fn parse_penalty(s: &str) -> Result<PenaltyFamily, String> {
    if s.trim().eq_ignore_ascii_case("lasso") {
        return Ok(PenaltyFamily::L1);
    }
    s.parse().map_err(|e: sqr::Error| e.to_string())
}

fn parse_kernel(s: &str) -> Result<KernelId, String> {
    s.parse().map_err(|e: sqr::Error| e.to_string())
}

fn parse_noise(s: &str) -> Result<NoiseFamily, String> {
    s.parse().map_err(|e: sqr::Error| e.to_string())
}

fn default_out() -> PathBuf {
    PathBuf::from("sqr-out")
}

const SEED_MAX: u64 = i64::MAX as u64;

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// Comma-separated file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the response column; every other column is a feature.
    #[arg(long, default_value = "y")]
    pub target: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SolverArgs {
    /// Solver name: auto (cd for the uniform kernel, admm otherwise), cd or admm.
    #[arg(long, default_value = "auto")]
    pub solver: String,
    /// Step tolerance on successive iterates.
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
    /// KKT residual the solvers refine towards.
    #[arg(long, default_value_t = 1e-6)]
    pub kkt_tol: f64,
    /// ADMM penalty parameter.
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
}

impl SolverArgs {
    fn settings(&self) -> Result<SolverSettings, Failure> {
        let s = SolverSettings {
            cd: CdConfig {
                epsilon: self.epsilon,
                max_iter: self.max_iter,
                kkt_tol: self.kkt_tol,
            },
            admm: AdmmConfig {
                rho: self.rho,
                epsilon: self.epsilon,
                max_iter: self.max_iter,
                kkt_tol: self.kkt_tol,
                inner: LassoConfig::default(),
            },
        };
        s.cd.validate()?;
        s.admm.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    /// Quantile level in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, default_value = "gaussian", value_parser = parse_kernel)]
    pub kernel: KernelId,
    /// `auto` for the default rule or a positive value.
    #[arg(long, default_value = "auto")]
    pub bandwidth: Bandwidth,
    /// l1 (or lasso), scad, mcp or capped-l1.
    #[arg(long, default_value = "scad", value_parser = parse_penalty)]
    pub penalty: PenaltyFamily,
    /// Concavity parameter; the family default when omitted.
    #[arg(long)]
    pub a: Option<f64>,
    /// Reweighting stages; l1 always runs one.
    #[arg(long, default_value_t = 3)]
    pub stages: usize,
    /// Center and scale features before fitting; coefficients are reported
    /// on the original scale.
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

/// Validated pieces of [`ModelArgs`] that do not depend on the data.
struct Model {
    penalty: PenaltySpec,
    stages: usize,
    settings: SolverSettings,
}

impl ModelArgs {
    /// Checks every parameter before any data is read.
    fn validate(&self, lambda: f64) -> Result<Model, Failure> {
        SmoothSpec::new(self.tau, self.bandwidth.as_option().unwrap_or(1.0), self.kernel)?;
        let a = self.a.unwrap_or_else(|| self.penalty.default_a());
        let penalty = PenaltySpec::with_a(self.penalty, lambda, a)?;
        if self.stages < 1 {
            return Err(Failure::Usage("stages must be at least 1".into()));
        }
        let settings = self.solver.settings()?;
        SolverRegistry::new(&settings).resolve(&self.solver.solver, self.kernel)?;
        let stages = if self.penalty == PenaltyFamily::L1 { 1 } else { self.stages };
        Ok(Model {
            penalty,
            stages,
            settings,
        })
    }

    fn prepare(&self, data: Dataset) -> Result<(Dataset, Option<Scaling>), Failure> {
        if self.standardize {
            let (d, s) = standardize(&data)?;
            Ok((d, Some(s)))
        } else {
            Ok((data, None))
        }
    }
}

fn back_transform(scaling: &Option<Scaling>, beta: &Array1<f64>) -> Array1<f64> {
    match scaling {
        Some(s) => s.back_transform(beta.view()),
        None => beta.clone(),
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Penalty level.
    #[arg(long)]
    pub lambda: f64,
    /// Output directory.
    #[arg(long, env = "SQR_OUT_DIR", default_value_os_t = default_out())]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct StageDiagnostics {
    stage: usize,
    converged: bool,
    n_iter: usize,
    objective: f64,
    kkt_residual: f64,
    active: usize,
    degenerate_updates: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    primal_residual: Option<f64>,
}

#[derive(Serialize)]
struct FitEffective {
    n: usize,
    p: usize,
    terms: Vec<String>,
    h: f64,
    lambda: f64,
    a: f64,
    solver: String,
    stages_run: usize,
    converged_at: Option<usize>,
    solver_settings: SolverSettings,
}

pub fn fit(args: &FitArgs) -> Result<Status, Failure> {
    let model = args.model.validate(args.lambda)?;
    let loaded = read_dataset(&args.data.data, &args.data.target)?;
    let (data, scaling) = args.model.prepare(loaded.data)?;
    let h = args.model.bandwidth.resolve(&data, args.model.tau)?;
    let spec = SmoothSpec::new(args.model.tau, h, args.model.kernel)?;
    let registry = SolverRegistry::new(&model.settings);
    let solver = registry.resolve(&args.model.solver.solver, args.model.kernel)?;
    let res = fit_irw(&data, &spec, &model.penalty, model.stages, solver)?;

    let stage_names: Vec<String> = (1..=res.stages.len()).map(|l| format!("stage_{l}")).collect();
    let cols: Vec<(&str, _)> = stage_names
        .iter()
        .zip(&res.stages)
        .map(|(name, s)| (name.as_str(), s.beta.view()))
        .collect();
    write_columns(&args.out.join("stages.csv"), &loaded.terms, &cols)?;
    let coef = back_transform(&scaling, res.beta());
    write_columns(&args.out.join("coefficients.csv"), &loaded.terms, &[("estimate", coef.view())])?;

    let stages: Vec<StageDiagnostics> = res
        .stages
        .iter()
        .enumerate()
        .map(|(k, s)| StageDiagnostics {
            stage: k + 1,
            converged: s.converged,
            n_iter: s.n_iter,
            objective: s.objective,
            kkt_residual: s.kkt_inf,
            active: s.beta.iter().skip(1).filter(|&&b| b != 0.0).count(),
            degenerate_updates: s.degenerate_updates,
            primal_residual: s.primal_residual,
        })
        .collect();
    let converged = res.all_converged();
    let mut diag = toml::Table::new();
    diag.insert("converged".into(), converged.into());
    diag.insert("kkt_residual".into(), res.final_fit().kkt_inf.into());
    diag.insert("stage".into(), toml::Value::try_from(&stages).expect("serializable"));
    write_toml(&args.out.join("diagnostics.toml"), &diag)?;

    let effective = FitEffective {
        n: data.n(),
        p: data.p(),
        terms: loaded.terms.clone(),
        h,
        lambda: args.lambda,
        a: model.penalty.a,
        solver: solver.name().into(),
        stages_run: res.stages.len(),
        converged_at: res.converged_at,
        solver_settings: model.settings.clone(),
    };
    Manifest::new("fit", 0, converged, args, manifest::table(&effective)).write(&args.out)?;

    let mut out = std::io::stdout().lock();
    writeln!(out, "n = {}, p = {} (intercept + {} features), h = {h:.6}", data.n(), data.p(), data.p() - 1)?;
    writeln!(out, "{} stage(s) with {} solver", res.stages.len(), solver.name())?;
    for s in &stages {
        writeln!(
            out,
            "stage {}: active = {}, kkt = {:.3e}, iterations = {}{}",
            s.stage,
            s.active,
            s.kkt_residual,
            s.n_iter,
            if s.converged { "" } else { " (not converged)" }
        )?;
    }
    writeln!(out, "wrote {}", args.out.display())?;
    Ok(Status::from_converged(converged))
}

fn write_toml(path: &Path, table: &toml::Table) -> Result<(), Failure> {
    let text = toml::to_string_pretty(table).map_err(|e| Failure::Data(format!("cannot encode {}: {e}", path.display())))?;
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub grid_size: usize,
    /// Smallest lambda as a fraction of lambda_max.
    #[arg(long, default_value_t = DEFAULT_MIN_RATIO)]
    pub min_ratio: f64,
    /// Stop a path once its final-stage fit has more than this fraction of the
    /// training rows as nonzero slopes; 0 disables the rule.
    #[arg(long, default_value_t = sqr::model_selection::DEFAULT_SATURATION)]
    pub saturation: f64,
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u64).range(..=SEED_MAX))]
    pub seed: u64,
    #[arg(long, env = "SQR_OUT_DIR", default_value_os_t = default_out())]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct CvEffective {
    n: usize,
    p: usize,
    h: f64,
    a: f64,
    solver: String,
    stages: usize,
    lambda_max: f64,
    selected_lambda: f64,
    selected_index: usize,
    solver_settings: SolverSettings,
}

pub fn cv(args: &CvArgs) -> Result<Status, Failure> {
    let model = args.model.validate(1.0)?;
    if !(args.saturation >= 0.0) {
        return Err(Failure::Usage(format!("saturation must be >= 0, got {}", args.saturation)));
    }
    if args.folds < 2 {
        return Err(Failure::Usage(format!("folds must be at least 2, got {}", args.folds)));
    }
    let loaded = read_dataset(&args.data.data, &args.data.target)?;
    let (data, scaling) = args.model.prepare(loaded.data)?;
    let h = args.model.bandwidth.resolve(&data, args.model.tau)?;
    let spec = SmoothSpec::new(args.model.tau, h, args.model.kernel)?;
    let registry = SolverRegistry::new(&model.settings);
    let solver = registry.resolve(&args.model.solver.solver, args.model.kernel)?;
    let unpen = BTreeSet::from([0]);
    let grid = lambda_grid(&data, &spec, args.grid_size, args.min_ratio, &unpen, solver)?;
    let opts = CvOptions {
        folds: args.folds,
        seed: args.seed,
        stages: model.stages,
        saturation: (args.saturation > 0.0).then_some(args.saturation),
    };
    let res = cross_validate(&data, &spec, &model.penalty, &grid, &opts, solver)?;

    let mut w = create(&args.out.join("cv_path.csv"))?;
    write!(w, "lambda,mean_error")?;
    for k in 1..=args.folds {
        write!(w, ",fold_{k}")?;
    }
    writeln!(w)?;
    for (g, lambda) in res.grid.iter().enumerate() {
        write!(w, "{},{}", fmt_f64(*lambda), res.mean_error[g].map(fmt_f64).unwrap_or_default())?;
        for fold in &res.fold_errors {
            write!(w, ",{}", fold[g].map(fmt_f64).unwrap_or_default())?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    let coef = back_transform(&scaling, &res.selected_fit.beta);
    write_columns(&args.out.join("coefficients.csv"), &loaded.terms, &[("estimate", coef.view())])?;

    let converged = res.selected_fit.converged;
    let effective = CvEffective {
        n: data.n(),
        p: data.p(),
        h,
        a: model.penalty.a,
        solver: solver.name().into(),
        stages: model.stages,
        lambda_max: grid[0],
        selected_lambda: res.selected_lambda,
        selected_index: res.selected_index,
        solver_settings: model.settings.clone(),
    };
    let mut report = manifest::table(&effective);
    report.insert("converged".into(), converged.into());
    report.insert("kkt_residual".into(), res.selected_fit.kkt_inf.into());
    write_toml(&args.out.join("cv_report.toml"), &report)?;
    Manifest::new("cv", args.seed, converged, args, manifest::table(&effective)).write(&args.out)?;

    println!(
        "selected lambda = {} (index {} of {}), kkt = {:.3e}",
        fmt_f64(res.selected_lambda),
        res.selected_index,
        grid.len(),
        res.selected_fit.kkt_inf
    );
    println!("wrote {}", args.out.display());
    Ok(Status::from_converged(converged))
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScenarioArgs {
    /// Noise law: gaussian, t (1.5 df), t<df>, cauchy or mixture.
    #[arg(long, default_value = "gaussian", value_parser = parse_noise)]
    pub scenario: NoiseFamily,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Number of features, excluding the intercept.
    #[arg(long, default_value_t = 400)]
    pub p: usize,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u64).range(..=SEED_MAX))]
    pub seed: u64,
}

impl ScenarioArgs {
    fn scenario(&self) -> Result<Scenario, Failure> {
        Ok(Scenario::new(self.n, self.p, self.scenario, self.tau, self.seed)?)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, env = "SQR_OUT_DIR", default_value_os_t = default_out())]
    pub out: PathBuf,
}

fn feature_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

pub fn simulate(args: &SimulateArgs) -> Result<Status, Failure> {
    let sc = args.scenario.scenario()?;
    let (data, beta_star) = generate(&sc)?;
    let names = feature_names(sc.p);
    write_dataset(&args.out.join("data.csv"), &data, &names)?;
    let terms: Vec<String> = std::iter::once(INTERCEPT_NAME.to_string()).chain(names).collect();
    let reference = sc.reference_beta()?;
    write_columns(
        &args.out.join("truth.csv"),
        &terms,
        &[("beta_star", beta_star.view()), ("quantile_beta", reference.view())],
    )?;
    let mut effective = toml::Table::new();
    effective.insert("support".into(), toml::Value::try_from(sc.true_support()).expect("serializable"));
    Manifest::new("simulate", sc.seed, true, args, effective).write(&args.out)?;
    println!("wrote {} rows x {} features to {}", sc.n, sc.p, args.out.display());
    Ok(Status::Ok)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ROSTER.map(String::from))]
    pub methods: Vec<String>,
    #[arg(long, default_value = "auto")]
    pub bandwidth: Bandwidth,
    #[arg(long, default_value_t = 3)]
    pub stages: usize,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub grid_size: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_RATIO)]
    pub min_ratio: f64,
    /// Path saturation fraction for cross-validation; 0 disables the rule.
    #[arg(long, default_value_t = sqr::model_selection::DEFAULT_SATURATION)]
    pub saturation: f64,
    /// Fixed lambda for every penalized method instead of cross-validation.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Held-out rows per replication for prediction error; 0 skips it.
    #[arg(long, default_value_t = 0)]
    pub n_test: usize,
    #[arg(long, env = "SQR_OUT_DIR", default_value_os_t = default_out())]
    pub out: PathBuf,
}

pub fn bench(args: &BenchArgs) -> Result<Status, Failure> {
    let sc = args.scenario.scenario()?;
    let registry = MethodRegistry::default();
    let methods = args
        .methods
        .iter()
        .map(|m| registry.get(m.trim()))
        .collect::<sqr::Result<Vec<_>>>()?;
    if args.lambda.is_some_and(|l| !(l > 0.0)) || !(args.saturation >= 0.0) {
        return Err(Failure::Usage("lambda must be positive and saturation non-negative".into()));
    }
    let settings = MethodSettings {
        tau: sc.tau,
        bandwidth: args.bandwidth.as_option(),
        stages: args.stages,
        folds: args.folds,
        grid_size: args.grid_size,
        min_ratio: args.min_ratio,
        saturation: (args.saturation > 0.0).then_some(args.saturation),
        lambda: args.lambda,
        ..MethodSettings::default()
    };
    let cfg = BenchConfig {
        reps: args.reps,
        master_seed: sc.seed,
        n_test: args.n_test,
        settings,
    };
    let table = run_benchmark(&sc, &methods, &cfg)?;

    let mut w = create(&args.out.join("results.csv"))?;
    writeln!(w, "method,metric,mean,se,count")?;
    for c in &table.cells {
        writeln!(w, "{},{},{},{},{}", c.method, c.metric, fmt_f64(c.mean), fmt_f64(c.se), c.count)?;
    }
    w.flush()?;
    let mut w = create(&args.out.join("replications.csv"))?;
    writeln!(w, "rep,seed,method,lambda,converged,tpr,fpr,sse,model_size,pred_error")?;
    for r in &table.records {
        let m = &r.metrics;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.rep,
            r.seed,
            r.method,
            r.lambda.map(fmt_f64).unwrap_or_default(),
            r.converged,
            fmt_f64(m.tpr),
            fmt_f64(m.fpr),
            fmt_f64(m.sse),
            m.model_size,
            m.pred_error.map(fmt_f64).unwrap_or_default()
        )?;
    }
    w.flush()?;

    let converged = table.records.iter().all(|r| r.converged);
    let mut effective = toml::Table::new();
    effective.insert("failed_reps".into(), toml::Value::try_from(&table.failed_reps).expect("serializable"));
    effective.insert("method_settings".into(), toml::Value::try_from(&cfg.settings).expect("serializable"));
    Manifest::new("bench", sc.seed, converged, args, effective).write(&args.out)?;

    let mut out = std::io::stdout().lock();
    writeln!(out, "{:<22} {:>14} {:>14} {:>14} {:>10}", "method", "tpr", "fpr", "sse", "size")?;
    for m in &table.methods {
        let cell = |k: &str| {
            table
                .cell(m, k)
                .map(|c| format!("{:.3} ({:.3})", c.mean, c.se))
                .unwrap_or_default()
        };
        writeln!(
            out,
            "{:<22} {:>14} {:>14} {:>14} {:>10}",
            m,
            cell("tpr"),
            cell("fpr"),
            cell("sse"),
            table.cell(m, "model_size").map(|c| format!("{:.1}", c.mean)).unwrap_or_default()
        )?;
    }
    if !table.failed_reps.is_empty() {
        writeln!(out, "excluded replications: {:?}", table.failed_reps)?;
    }
    writeln!(out, "wrote {}", args.out.display())?;
    Ok(Status::from_converged(converged))
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ImprovementArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 7)]
    pub stages: usize,
    /// Fixed lambda; defaults to `lambda_c * sqrt(log p / n)`.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub lambda_c: f64,
    #[arg(long, default_value = "uniform", value_parser = parse_kernel)]
    pub kernel: KernelId,
    #[arg(long, default_value = "scad", value_parser = parse_penalty)]
    pub penalty: PenaltyFamily,
    #[arg(long, default_value = "auto")]
    pub bandwidth: Bandwidth,
    #[arg(long, env = "SQR_OUT_DIR", default_value_os_t = default_out())]
    pub out: PathBuf,
}

pub fn improvement(args: &ImprovementArgs) -> Result<Status, Failure> {
    let sc = args.scenario.scenario()?;
    let lambda = args.lambda.unwrap_or_else(|| theory_lambda(args.lambda_c, sc.n, sc.p));
    PenaltySpec::new(args.penalty, lambda)?;
    let cfg = ImprovementConfig {
        reps: args.reps,
        master_seed: sc.seed,
        stages: args.stages,
        lambda,
        family: args.penalty,
        kernel: args.kernel,
        settings: MethodSettings {
            tau: sc.tau,
            bandwidth: args.bandwidth.as_option(),
            ..MethodSettings::default()
        },
    };
    let curves = run_improvement(&sc, &cfg)?;

    let mut w = create(&args.out.join("improvement.csv"))?;
    writeln!(w, "stage,mean,se")?;
    for (k, (m, s)) in curves.mean.iter().zip(&curves.se).enumerate() {
        writeln!(w, "{},{},{}", k + 2, fmt_f64(*m), fmt_f64(*s))?;
    }
    w.flush()?;
    let mut w = create(&args.out.join("curves.csv"))?;
    write!(w, "curve")?;
    for l in 2..=args.stages {
        write!(w, ",stage_{l}")?;
    }
    writeln!(w)?;
    for (i, c) in curves.curves.iter().enumerate() {
        write!(w, "{}", i + 1)?;
        for v in c {
            write!(w, ",{}", fmt_f64(*v))?;
        }
        writeln!(w)?;
    }
    w.flush()?;

    let mut effective = toml::Table::new();
    effective.insert("lambda".into(), lambda.into());
    effective.insert("skipped".into(), (curves.skipped as i64).into());
    effective.insert("failed".into(), (curves.failed as i64).into());
    Manifest::new("improvement", sc.seed, true, args, effective).write(&args.out)?;

    println!("lambda = {lambda:.6}");
    for (k, (m, s)) in curves.mean.iter().zip(&curves.se).enumerate() {
        println!("stage {}: {:.5} ({:.5})", k + 2, m, s);
    }
    println!("wrote {}", args.out.display());
    Ok(Status::Ok)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct KktArgs {
    /// Output directory of a `fit` run.
    #[arg(long)]
    pub fit: PathBuf,
    /// Dataset to check against; defaults to the one recorded in the manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Exit with status 3 when the final residual exceeds this value.
    #[arg(long)]
    pub tol: Option<f64>,
}

/// Residual of every stage of a stored fit. Stage `l` is checked against
/// the weights implied by stage `l - 1`, on the scale the fit was computed.
pub fn kkt_check(args: &KktArgs) -> Result<Status, Failure> {
    let (command, table) = manifest::read_raw(&args.fit.join(manifest::FILE_NAME))?;
    if command != "fit" {
        return Err(Failure::Usage(format!("kkt-check needs the output of 'fit', got '{command}'")));
    }
    let fit_args: FitArgs = manifest::args_from(&table)?;
    let model = fit_args.model.validate(fit_args.lambda)?;
    let h = table
        .get("effective")
        .and_then(|e| e.get("h"))
        .and_then(|h| h.as_float())
        .ok_or_else(|| Failure::Data("manifest has no effective bandwidth".into()))?;
    let path = args.data.clone().unwrap_or(fit_args.data.data.clone());
    let loaded = read_dataset(&path, &fit_args.data.target)?;
    let (data, _) = fit_args.model.prepare(loaded.data)?;
    let spec = SmoothSpec::new(fit_args.model.tau, h, fit_args.model.kernel)?;
    let (terms, stages) = read_columns(&args.fit.join("stages.csv"))?;
    if terms.len() != data.p() {
        return Err(Failure::Data(format!(
            "stored fit has {} coefficients but the data has {} columns",
            terms.len(),
            data.p()
        )));
    }
    let mut prev = Array1::<f64>::zeros(data.p());
    let mut last = 0.0;
    for (k, (_, beta)) in stages.iter().enumerate() {
        let weights: WeightVector = if k == 0 {
            WeightVector::constant(data.p(), fit_args.lambda, &model.penalty.unpenalized)
        } else {
            reweight(&model.penalty, prev.view())
        };
        last = kkt_residual(&data, &spec, &weights, beta.view())?;
        println!("stage {}: kkt_residual = {}", k + 1, fmt_f64(last));
        prev = beta.clone();
    }
    println!("kkt_residual {}", fmt_f64(last));
    Ok(match args.tol {
        Some(t) if last > t => Status::NotConverged,
        _ => Status::Ok,
    })
}
