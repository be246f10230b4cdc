//! Randomized invariants of the public API.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sqr::irw::fit_irw;
use sqr::kernels::{kernel_cdf, smoothed_loss, smoothed_loss_derivative};
use sqr::model_selection::{cross_validate, lambda_grid, lambda_max, CvOptions};
use sqr::objective::{check_loss, gradient, hessian, kkt_residual, mean_check_loss, penalized_objective, smoothed_objective};
use sqr::penalties::{penalty_derivative, reweight};
use sqr::simulation::methods::{MethodRegistry, MethodSettings};
use sqr::simulation::{metrics, run_benchmark, run_replication, BenchConfig, NoiseFamily, Scenario};
use sqr::solver::{r_update_root, solve_admm, solve_cd, AdmmConfig, CdConfig};
use sqr::{Dataset, KernelId, PenaltyFamily, PenaltySpec, SmoothSpec, SolverRegistry, WeightVector};

fn kernel() -> impl Strategy<Value = KernelId> {
    prop::sample::select(KernelId::ALL.to_vec())
}

fn family() -> impl Strategy<Value = PenaltyFamily> {
    prop::sample::select(PenaltyFamily::ALL.to_vec())
}

/// Sparse linear model with heavy-ish noise; intercept prepended.
fn instance(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feats = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.5..1.5));
    let y = Array1::from_shape_fn(n, |i| {
        let e: f64 = rng.random_range(-1.0..1.0);
        0.5 + 1.5 * feats[[i, 0]] - feats[[i, 1 % p]] + e * e.abs()
    });
    Dataset::with_intercept(&feats, y).unwrap()
}

fn random_beta(p: usize, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array1::from_shape_fn(p, |_| rng.random_range(-1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn smoothed_loss_majorizes_check_loss(k in kernel(), tau in 0.05f64..0.95, h in 0.01f64..2.0, u in -6.0f64..6.0) {
        let spec = SmoothSpec::new(tau, h, k).unwrap();
        let l = smoothed_loss(&spec, u);
        prop_assert!(l >= check_loss(tau, u) - 1e-12);
        if matches!(k, KernelId::Uniform | KernelId::Epanechnikov) && u.abs() >= h {
            prop_assert!((l - check_loss(tau, u)).abs() <= 1e-12 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn tiny_bandwidth_recovers_check_loss(k in kernel(), tau in 0.05f64..0.95, u in prop_oneof![-5.0f64..-0.01, 0.01f64..5.0]) {
        let spec = SmoothSpec::new(tau, 1e-8, k).unwrap();
        prop_assert!((smoothed_loss(&spec, u) - check_loss(tau, u)).abs() <= 1e-6);
    }

    #[test]
    fn kernel_cdf_is_monotone(k in kernel(), a in -8.0f64..8.0, d in 0.0f64..4.0) {
        let (lo, hi) = (kernel_cdf(k, a), kernel_cdf(k, a + d));
        prop_assert!(lo <= hi);
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
    }

    #[test]
    fn loss_derivative_matches_finite_differences(k in kernel(), tau in 0.1f64..0.9, h in 0.1f64..1.5, u in -4.0f64..4.0) {
        // stay h/10 away from the kinks of compactly supported kernels
        if matches!(k, KernelId::Uniform | KernelId::Epanechnikov) {
            prop_assume!((u.abs() - h).abs() >= h / 10.0);
        }
        let spec = SmoothSpec::new(tau, h, k).unwrap();
        let step = 1e-6 * u.abs().max(1.0);
        let fd = (smoothed_loss(&spec, u + step) - smoothed_loss(&spec, u - step)) / (2.0 * step);
        let an = smoothed_loss_derivative(&spec, u);
        prop_assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "fd {fd} analytic {an}");
    }

    #[test]
    fn penalty_weights_are_bounded_and_nonincreasing(f in family(), lambda in 0.01f64..3.0, t in 0.0f64..10.0, d in 0.0f64..5.0) {
        let spec = PenaltySpec::new(f, lambda).unwrap();
        let (a, b) = (penalty_derivative(&spec, t).unwrap(), penalty_derivative(&spec, t + d).unwrap());
        prop_assert!((0.0..=lambda).contains(&a));
        prop_assert!(b <= a);
    }

    #[test]
    fn root_solves_the_scalar_equation(k in kernel(), tau in 0.05f64..0.95, h in 0.02f64..3.0,
                                       eta in -5.0f64..5.0, rho in 0.05f64..20.0, c in -20.0f64..20.0) {
        let spec = SmoothSpec::new(tau, h, k).unwrap();
        let r = r_update_root(&spec, eta, rho, c);
        let resid = tau - kernel_cdf(k, -r / h) + eta + rho * (r - c);
        prop_assert!(resid.abs() <= 1e-10, "residual {resid}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn objective_is_convex_along_segments(k in kernel(), seed in any::<u64>(), t in 0.01f64..0.99) {
        let d = instance(40, 6, seed);
        let spec = SmoothSpec::new(0.4, 0.3, k).unwrap();
        let (b1, b2) = (random_beta(7, seed ^ 1), random_beta(7, seed ^ 2));
        let mid = &b1 * t + &b2 * (1.0 - t);
        let lhs = smoothed_objective(&d, &spec, mid.view()).unwrap();
        let rhs = t * smoothed_objective(&d, &spec, b1.view()).unwrap()
            + (1.0 - t) * smoothed_objective(&d, &spec, b2.view()).unwrap();
        prop_assert!(lhs <= rhs + 1e-10);
    }

    #[test]
    fn objective_dominates_check_objective(k in kernel(), seed in any::<u64>(), h in 0.05f64..2.0) {
        let d = instance(40, 6, seed);
        let spec = SmoothSpec::new(0.7, h, k).unwrap();
        let b = random_beta(7, seed);
        let r = d.residuals(b.view()).unwrap();
        prop_assert!(smoothed_objective(&d, &spec, b.view()).unwrap() >= mean_check_loss(0.7, r.view()) - 1e-12);
    }

    #[test]
    fn gradient_and_hessian_agree(seed in any::<u64>()) {
        let d = instance(50, 5, seed);
        let spec = SmoothSpec::new(0.5, 0.5, KernelId::Gaussian).unwrap();
        let b = random_beta(6, seed);
        let dir = random_beta(6, seed.wrapping_add(7));
        let eps = 1e-6;
        let fd = (gradient(&d, &spec, (&b + &(&dir * eps)).view()).unwrap()
            - gradient(&d, &spec, (&b - &(&dir * eps)).view()).unwrap()) / (2.0 * eps);
        let hv = hessian(&d, &spec, b.view()).unwrap().dot(&dir);
        let scale = hv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, e) in fd.iter().zip(&hv) {
            prop_assert!((a - e).abs() <= 1e-4 * scale);
        }
    }

    #[test]
    fn cd_descends_and_is_idempotent(seed in any::<u64>(), lambda in 0.01f64..0.2) {
        let d = instance(80, 12, seed);
        let spec = SmoothSpec::new(0.5, 0.4, KernelId::Uniform).unwrap();
        let w = WeightVector::constant(13, lambda, &BTreeSet::from([0]));
        let cfg = CdConfig::default();
        let fit = match solve_cd(&d, &spec, &w, &cfg, None) {
            Ok(f) => f,
            // an all-degenerate sweep is a documented error, not a property violation
            Err(sqr::Error::DegenerateBand { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        for pair in fit.trace.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-12, "trace rose: {:?}", pair);
        }
        if fit.converged {
            prop_assert!(kkt_residual(&d, &spec, &w, fit.beta.view()).unwrap() <= 1e-4);
            let again = solve_cd(&d, &spec, &w, &cfg, Some(fit.beta.view())).unwrap();
            prop_assert!(again.n_iter <= 2);
            let step = (&again.beta - &fit.beta).mapv(|v| v * v).sum().sqrt();
            prop_assert!(step <= cfg.epsilon);
        }
    }

    #[test]
    fn admm_fixed_point_does_not_depend_on_rho(k in kernel(), seed in any::<u64>()) {
        let d = instance(60, 8, seed);
        let spec = SmoothSpec::new(0.5, 0.5, k).unwrap();
        let w = WeightVector::constant(9, 0.05, &BTreeSet::from([0]));
        let objs: Vec<f64> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&rho| {
                let fit = solve_admm(&d, &spec, &w, &AdmmConfig { rho, ..AdmmConfig::default() }, None).unwrap();
                assert!(fit.converged);
                assert!(fit.primal_residual.unwrap() <= 1e-6 * (d.n() as f64).sqrt());
                penalized_objective(&d, &spec, &w, fit.beta.view()).unwrap()
            })
            .collect();
        for o in &objs[1..] {
            prop_assert!((o - objs[0]).abs() <= 1e-5 * objs[0].abs());
        }
    }

    #[test]
    fn irw_weights_and_stage_one(f in family(), seed in any::<u64>()) {
        let d = instance(80, 10, seed);
        let spec = SmoothSpec::new(0.5, 0.4, KernelId::Gaussian).unwrap();
        let reg = SolverRegistry::default();
        let solver = reg.resolve("auto", KernelId::Gaussian).unwrap();
        let pen = PenaltySpec::new(f, 0.08).unwrap();
        let res = fit_irw(&d, &spec, &pen, 4, solver).unwrap();

        // stage 1 is the plain l1 solve with constant weight lambda
        let w1 = WeightVector::constant(11, 0.08, &pen.unpenalized);
        let direct = solver.solve(&d, &spec, &w1, None).unwrap();
        prop_assert_eq!(&res.stages[0].beta, &direct.beta);

        for l in 1..res.stages.len() {
            let prev = &res.stages[l - 1].beta;
            prop_assert_eq!(&res.weights_per_stage[l], &reweight(&pen, prev.view()));
            if matches!(f, PenaltyFamily::Scad | PenaltyFamily::Mcp) {
                for j in 1..11 {
                    if prev[j] == 0.0 {
                        prop_assert_eq!(res.weights_per_stage[l].0[j], 0.08);
                    }
                }
            }
        }
        // repeated weights end the iteration, and the padded stages repeat it
        if let Some(at) = res.converged_at {
            prop_assert_eq!(res.beta_at(at), res.beta_at(4));
        }
    }

    #[test]
    fn null_model_above_lambda_max(k in kernel(), seed in any::<u64>(), scale in 1.0f64..3.0) {
        let d = instance(60, 8, seed);
        let spec = SmoothSpec::new(0.5, 0.3, k).unwrap();
        let reg = SolverRegistry::default();
        let solver = reg.resolve("auto", k).unwrap();
        let unpen = BTreeSet::from([0]);
        let lmax = lambda_max(&d, &spec, &unpen, solver).unwrap();
        let w = WeightVector::constant(9, lmax * scale * 1.001, &unpen);
        let fit = solver.solve(&d, &spec, &w, None).unwrap();
        prop_assert!(fit.beta.iter().skip(1).all(|&b| b == 0.0));
    }

    #[test]
    fn metrics_stay_in_range(seed in any::<u64>(), p in 19usize..40) {
        let star = sqr::simulation::beta_star(p);
        let b = random_beta(p + 1, seed).mapv(|v| if v.abs() < 0.5 { 0.0 } else { v });
        let m = metrics(b.view(), star.view(), true).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.tpr) && (0.0..=1.0).contains(&m.fpr));
        prop_assert!(m.sse >= 0.0 && m.model_size <= p);
    }
}

#[test]
fn path_stays_stationary() {
    let d = instance(100, 30, 5);
    let spec = SmoothSpec::new(0.5, 0.3, KernelId::Uniform).unwrap();
    let reg = SolverRegistry::default();
    let solver = reg.resolve("auto", KernelId::Uniform).unwrap();
    let unpen = BTreeSet::from([0]);
    let grid = lambda_grid(&d, &spec, 15, 0.02, &unpen, solver).unwrap();
    let path = sqr::model_selection::irw_path(&d, &spec, &PenaltySpec::new(PenaltyFamily::Scad, 1.0).unwrap(), 3, &grid, None, solver);
    for (lambda, res) in grid.iter().zip(path) {
        let res = res.unwrap();
        let pen = PenaltySpec::new(PenaltyFamily::Scad, *lambda).unwrap();
        for l in 0..res.stages.len() {
            assert!(kkt_residual(&d, &spec, &res.weights_per_stage[l], res.stages[l].beta.view()).unwrap() <= 1e-4);
        }
        assert_eq!(res.weights_per_stage[0], WeightVector::constant(31, pen.lambda, &unpen));
    }
}

#[test]
fn cv_is_deterministic_in_serialized_form() {
    let d = instance(90, 15, 8);
    let spec = SmoothSpec::new(0.5, 0.4, KernelId::Gaussian).unwrap();
    let reg = SolverRegistry::default();
    let solver = reg.resolve("auto", KernelId::Gaussian).unwrap();
    let grid = lambda_grid(&d, &spec, 8, 0.05, &BTreeSet::from([0]), solver).unwrap();
    let pen = PenaltySpec::new(PenaltyFamily::Mcp, 1.0).unwrap();
    let opts = CvOptions { folds: 4, seed: 3, ..CvOptions::default() };
    let a = serde_json::to_string(&cross_validate(&d, &spec, &pen, &grid, &opts, solver).unwrap()).unwrap();
    let b = serde_json::to_string(&cross_validate(&d, &spec, &pen, &grid, &opts, solver).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn benchmark_is_seeded_and_order_free() {
    let sc = Scenario::new(100, 25, NoiseFamily::T15, 0.5, 0).unwrap();
    let reg = MethodRegistry::default();
    let methods = [reg.get("ls-lasso").unwrap(), reg.get("sqr-mcp-uniform").unwrap(), reg.get("oracle").unwrap()];
    let cfg = BenchConfig {
        reps: 4,
        master_seed: 31,
        n_test: 50,
        settings: MethodSettings { grid_size: 6, folds: 3, ..MethodSettings::default() },
    };
    let t1 = run_benchmark(&sc, &methods, &cfg).unwrap();
    let t2 = run_benchmark(&sc, &methods, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&t1).unwrap(), serde_json::to_string(&t2).unwrap());

    // replications run in reverse order give the same records
    let mut rev: Vec<_> = (0..4)
        .rev()
        .map(|rep| run_replication(&sc, &methods, rep, 31, &cfg).unwrap())
        .collect();
    rev.reverse();
    assert_eq!(rev.concat(), t1.records);
}
