use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sim_spline::model::{predict, SingleIndexFit};
use sim_spline::simulation::{gen_dataset, ErrorMode, SimSetting};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim-spline"))
        .args(args)
        .env_remove("SIM_SPLINE_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_sim_csv(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let (d, _) = gen_dataset(&SimSetting::new(n, ErrorMode::Normal, seed).unwrap()).unwrap();
    let mut s = String::from("y,x1,x2,x3,x4,x5,x6,z1\n");
    for i in 0..n {
        let row: Vec<String> =
            std::iter::once(d.y[i]).chain(d.x[i].iter().copied()).chain(d.z[i].iter().copied()).map(|v| format!("{v:e}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    let path = dir.join("data.csv");
    fs::write(&path, s).unwrap();
    path
}

fn fitted(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    let csv = write_sim_csv(dir, n, 11);
    let fit = dir.join("fit.json");
    let o = run(&["fit", csv.to_str().unwrap(), "--seed", "4", "-o", fit.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    (csv, fit)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ten_row_csv_fits() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("small.csv");
    let rows = [
        "y,x1,x2",
        "0.31,0.1,0.9",
        "0.12,0.4,0.2",
        "0.95,0.8,0.5",
        "0.40,0.3,0.7",
        "0.77,0.9,0.1",
        "0.05,0.2,0.3",
        "0.66,0.6,0.8",
        "0.52,0.5,0.4",
        "0.20,0.7,0.6",
        "0.88,1.0,0.0",
    ];
    fs::write(&path, rows.join("\n")).unwrap();
    let o = run(&["fit", s(&path)]);
    assert!(code(&o) == 0 || code(&o) == 2, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).expect("valid JSON");
    assert_eq!(v["schema"], "sim-spline/1");
    assert_eq!(v["n"], 10);
    assert_eq!(code(&o) == 0, v["converged"] == true);
}

#[test]
fn missing_column_is_named() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("noy.csv");
    fs::write(&path, "x1,x2\n1,2\n3,4\n").unwrap();
    let o = run(&["fit", s(&path)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing column `y`"), "{}", stderr(&o));
}

#[test]
fn bad_cell_reports_line() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "y,x1,x2\n1,2,3\n4,5,6\n7,,9\n").unwrap();
    let o = run(&["fit", s(&path)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
    assert!(stderr(&o).contains("`x1`"), "{}", stderr(&o));

    fs::write(&path, "y,x1,x2\n1,2,3\n4,5,nan\n").unwrap();
    let o = run(&["fit", s(&path)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&["simulate", "--experiment", "bogus", "--out", "x"])), 1);
    assert_eq!(code(&run(&["fit"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn fit_is_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    let csv = write_sim_csv(dir.path(), 200, 3);
    let a = run(&["fit", s(&csv), "--seed", "9"]);
    let b = run(&["fit", s(&csv), "--seed", "9"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert!(stderr(&a).contains("iterations"));
}

#[test]
fn non_convergence_exits_two_with_flagged_output() {
    let dir = TempDir::new().unwrap();
    let csv = write_sim_csv(dir.path(), 200, 3);
    let o = run(&["fit", s(&csv), "--max-iter", "1", "--tol", "1e-14"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["converged"], false);
}

#[test]
fn band_csv_schema_and_nesting() {
    let dir = TempDir::new().unwrap();
    let (csv, fit) = fitted(dir.path(), 200);
    let band = |alpha: &str| {
        let o = run(&["band", s(&fit), s(&csv), "--alpha", alpha, "--B", "100", "--grid-size", "51", "--format", "csv"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        String::from_utf8(o.stdout).unwrap()
    };
    let wide = band("0.05");
    let narrow = band("0.2");
    let mut lines = wide.lines();
    assert_eq!(lines.next(), Some("s,center,lower,upper"));
    assert_eq!(lines.count(), 51);
    for (w, n) in wide.lines().skip(1).zip(narrow.lines().skip(1)) {
        let w: Vec<f64> = w.split(',').map(|c| c.parse().unwrap()).collect();
        let n: Vec<f64> = n.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(w[1], n[1]);
        assert!(w[2] <= n[2] && n[3] <= w[3]);
    }
}

#[test]
fn band_rejects_mismatched_data() {
    let dir = TempDir::new().unwrap();
    let (_, fit) = fitted(dir.path(), 200);
    let other = dir.path().join("other");
    fs::create_dir(&other).unwrap();
    let csv = write_sim_csv(&other, 150, 1);
    let o = run(&["band", s(&fit), s(&csv), "--B", "100"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn band_and_tests_ignore_thread_count() {
    let dir = TempDir::new().unwrap();
    let (csv, fit) = fitted(dir.path(), 200);
    let args = |t: &'static str| vec!["band", s(&fit), s(&csv), "--B", "100", "--grid-size", "41", "--threads", t];
    let one = run(&args("1"));
    let three = run(&args("3"));
    assert_eq!(code(&one), 0, "{}", stderr(&one));
    assert_eq!(one.stdout, three.stdout);
}

#[test]
fn relevant_sweep_is_monotone() {
    let dir = TempDir::new().unwrap();
    let (csv, fit) = fitted(dir.path(), 200);
    let o = run(&["test-relevant", s(&fit), s(&csv), "--gstar", "poly:0,0,1", "--sweep", "0:1.5:16", "--B", "100"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let decisions = v["sweep"]["decisions"].as_array().unwrap();
    assert_eq!(decisions.len(), 16);
    let rejects: Vec<bool> = decisions.iter().map(|d| d[1].as_bool().unwrap()).collect();
    assert!(rejects.windows(2).all(|w| w[0] >= w[1]), "{rejects:?}");
    assert!(v["sweep"]["delta_hat_exact"].as_f64().unwrap() >= 0.0);

    let inv = run(&["test-relevant", s(&fit), s(&csv), "--sweep", "1:0:5", "--B", "100"]);
    assert_eq!(code(&inv), 1);
    assert!(stderr(&inv).contains("inverted"));
}

#[test]
fn gstar_table_must_cover_range() {
    let dir = TempDir::new().unwrap();
    let (csv, fit) = fitted(dir.path(), 200);
    let table = dir.path().join("g.csv");
    fs::write(&table, "s,g\n-0.1,0\n0.1,0\n").unwrap();
    let spec = format!("csv:{}", s(&table));
    let o = run(&["test-relevant", s(&fit), s(&csv), "--gstar", &spec, "--delta", "0.5", "--B", "100"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));

    fs::write(&table, "s,g\n-5,0\n5,0\n").unwrap();
    let o = run(&["test-relevant", s(&fit), s(&csv), "--gstar", &spec, "--delta", "0.5", "--B", "100"]);
    let z = run(&["test-relevant", s(&fit), s(&csv), "--gstar", "zero", "--delta", "0.5", "--B", "100"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(o.stdout, z.stdout);
}

#[test]
fn joint_accepts_fitted_value() {
    let dir = TempDir::new().unwrap();
    let (csv, fit) = fitted(dir.path(), 200);
    let f = SingleIndexFit::from_json(&fs::read_to_string(&fit).unwrap()).unwrap();
    let x0 = [0.0, 0.0, 1.0, 0.0, 1.0, 1.0];
    let y0 = predict(&f, &[x0.to_vec()], &[vec![1.0]]).unwrap()[0];
    let x0s = "0,0,1,0,1,1";
    let y0s = format!("{y0:e}");
    let o = run(&["test-joint", s(&fit), s(&csv), "--x0", x0s, "--z0", "1", "--y0", &y0s, "--B", "100"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["reject"], false);
    assert!(v["t_hat"].as_f64().unwrap().abs() < 1e-9);

    let far = format!("{:e}", y0 + 50.0);
    let o = run(&["test-joint", s(&fit), s(&csv), "--x0", x0s, "--z0", "1", "--y0", &far, "--B", "100"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["reject"], true);

    let o = run(&["test-joint", s(&fit), s(&csv), "--x0", "0,1", "--z0", "1", "--y0", "0", "--B", "100"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn simulate_writes_reproducible_reports() {
    let dir = TempDir::new().unwrap();
    let out = |name: &str| dir.path().join(name);
    let sim = |o: &Path, threads: &str| {
        let r = run(&["simulate", "--experiment", "risk", "--n", "100", "--reps", "3", "--seed", "5", "--threads", threads, "--out", s(o)]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
    };
    sim(&out("a"), "1");
    sim(&out("b"), "2");
    for f in ["risk.json", "risk.csv"] {
        assert_eq!(fs::read(out("a").join(f)).unwrap(), fs::read(out("b").join(f)).unwrap());
    }
    let csv = fs::read_to_string(out("a").join("risk.csv")).unwrap();
    assert!(csv.starts_with("setting,n,statistic,"));
    assert_eq!(csv.lines().count(), 2);
}
