use std::path::Path;
use std::process::{Command, Output};

use sqr::simulation::{generate, NoiseFamily, Scenario};

fn sqr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqr"))
        .args(args)
        .env_remove("SQR_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Simulated data under `dir/sim`.
fn simulate(dir: &Path, n: usize, p: usize, seed: u64) -> std::path::PathBuf {
    let out = dir.join("sim");
    let o = sqr(&[
        "simulate", "--n", &n.to_string(), "--p", &p.to_string(), "--seed", &seed.to_string(), "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out.join("data.csv")
}

#[test]
fn fit_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), 150, 25, 1);
    let out = dir.path().join("fit");
    let o = sqr(&[
        "fit", "--data", s(&data), "--tau", "0.5", "--kernel", "gaussian", "--penalty", "scad", "--lambda", "0.1",
        "--stages", "3", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let coef = String::from_utf8(read(&out.join("coefficients.csv"))).unwrap();
    let lines: Vec<&str> = coef.lines().collect();
    assert_eq!(lines[0], "term,estimate");
    assert_eq!(lines.len(), 1 + 26);
    assert!(lines[1].starts_with("(intercept),"));
    let diag: toml::Table = String::from_utf8(read(&out.join("diagnostics.toml"))).unwrap().parse().unwrap();
    assert_eq!(diag["converged"].as_bool(), Some(true));
    assert!(diag["kkt_residual"].as_float().unwrap() <= 1e-4);
    let manifest: toml::Table = String::from_utf8(read(&out.join("manifest.toml"))).unwrap().parse().unwrap();
    assert_eq!(manifest["command"].as_str(), Some("fit"));
    // defaults are recorded, not just the flags given
    assert_eq!(manifest["args"]["model"]["solver"]["max_iter"].as_integer(), Some(5000));
    assert_eq!(manifest["effective"]["solver"].as_str(), Some("admm"));
}

#[test]
fn tau_out_of_range_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    // validation happens before the (absent) data file is touched
    let o = sqr(&["fit", "--data", "absent.csv", "--tau", "1.5", "--lambda", "0.1", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("(0, 1)"), "{}", stderr(&o));
    assert!(!out.exists());

    assert_eq!(code(&sqr(&["fit", "--data", "a.csv", "--lambda", "-1"])), 1);
    assert_eq!(code(&sqr(&["fit", "--data", "a.csv", "--lambda", "0.1", "--bandwidth", "0"])), 1);
    assert_eq!(code(&sqr(&["fit", "--data", "a.csv", "--lambda", "0.1", "--kernel", "box"])), 1);
    assert_eq!(
        code(&sqr(&["fit", "--data", "a.csv", "--lambda", "0.1", "--kernel", "gaussian", "--solver", "cd"])),
        1
    );
    assert_eq!(code(&sqr(&["bench", "--methods", "nope"])), 1);
    assert_eq!(code(&sqr(&["frobnicate"])), 1);
    assert_eq!(code(&sqr(&["--help"])), 0);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let nan = dir.path().join("nan.csv");
    std::fs::write(&nan, "y,x1,x2\n1,2,3\n4,NaN,6\n7,8,9\n").unwrap();
    let o = sqr(&["fit", "--data", s(&nan), "--lambda", "0.1", "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("row 2, column 'x1'"), "{}", stderr(&o));

    let miss = dir.path().join("miss.csv");
    std::fs::write(&miss, "resp,x1\n1,2\n3,4\n").unwrap();
    let o = sqr(&["fit", "--data", s(&miss), "--lambda", "0.1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("resp, x1"), "{}", stderr(&o));

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(code(&sqr(&["fit", "--data", s(&empty), "--lambda", "0.1"])), 2);
}

#[test]
fn simulate_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), 40, 20, 9);
    let sc = Scenario::new(40, 20, NoiseFamily::Gaussian, 0.5, 9).unwrap();
    let (expect, _) = generate(&sc).unwrap();
    let mut rdr = csv::Reader::from_path(&data).unwrap();
    assert_eq!(rdr.headers().unwrap().len(), 21);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.unwrap();
        assert_eq!(rec[0].parse::<f64>().unwrap().to_bits(), expect.y()[i].to_bits());
        for j in 1..=20 {
            assert_eq!(rec[j].parse::<f64>().unwrap().to_bits(), expect.x()[[i, j]].to_bits());
        }
    }
}

#[test]
fn kkt_check_reads_a_fit() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), 120, 20, 2);
    let out = dir.path().join("fit");
    let o = sqr(&[
        "fit", "--data", s(&data), "--kernel", "uniform", "--penalty", "mcp", "--lambda", "0.08", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = sqr(&["kkt-check", "--fit", s(&out), "--tol", "1e-4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let last = text.lines().last().unwrap();
    let value: f64 = last.strip_prefix("kkt_residual ").unwrap().parse().unwrap();
    assert!(value <= 1e-4);
    assert_eq!(code(&sqr(&["kkt-check", "--fit", s(&out), "--tol", "0"])), if value > 0.0 { 3 } else { 0 });
}

#[test]
fn non_convergence_writes_flagged_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), 100, 20, 4);
    let out = dir.path().join("fit");
    let o = sqr(&["fit", "--data", s(&data), "--lambda", "0.05", "--max-iter", "1", "--out", s(&out)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let diag: toml::Table = String::from_utf8(read(&out.join("diagnostics.toml"))).unwrap().parse().unwrap();
    assert_eq!(diag["converged"].as_bool(), Some(false));
    assert!(out.join("coefficients.csv").exists());
}

#[test]
fn replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), 120, 20, 5);
    let first = dir.path().join("cv1");
    let o = sqr(&[
        "cv", "--data", s(&data), "--kernel", "uniform", "--penalty", "scad", "--grid-size", "6", "--folds", "3",
        "--seed", "11", "--out", s(&first),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let second = dir.path().join("cv2");
    let o = sqr(&["replay", "--manifest", s(&first.join("manifest.toml")), "--out", s(&second)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["cv_path.csv", "coefficients.csv", "cv_report.toml"] {
        assert_eq!(read(&first.join(f)), read(&second.join(f)), "{f}");
    }

    let sim2 = dir.path().join("sim2");
    let o = sqr(&["replay", "--manifest", s(&dir.path().join("sim/manifest.toml")), "--out", s(&sim2)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read(&data), read(&sim2.join("data.csv")));
}

#[test]
fn bench_is_deterministic_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = sqr(&[
            "--threads", threads, "bench", "--scenario", "cauchy", "--n", "120", "--p", "25", "--reps", "3", "--seed",
            "7", "--grid-size", "6", "--folds", "3", "--methods", "ls-lasso,sqr-scad-uniform,oracle", "--out",
            s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "3");
    for f in ["results.csv", "replications.csv"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
        assert_eq!(read(&a.join(f)), read(&c.join(f)), "{f}");
    }
    let results = String::from_utf8(read(&a.join("results.csv"))).unwrap();
    assert!(results.starts_with("method,metric,mean,se,count\n"));
    assert!(results.contains("\noracle,tpr,1.0000000000000000e0,"));
}

#[test]
fn improvement_emits_one_row_per_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("imp");
    let o = sqr(&[
        "improvement", "--scenario", "t", "--n", "150", "--p", "30", "--reps", "3", "--stages", "5", "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(read(&out.join("improvement.csv"))).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "stage,mean,se");
    assert_eq!(rows.len(), 1 + 4);
    assert!(rows[1].starts_with("2,"));
}
