use sim_spline::model::{dot, FitConfig};
use sim_spline::simulation::{
    beta0, g0, g0_sup, gen_dataset, run_coverage, run_joint, run_power_curve, run_risk, ErrorMode, ExperimentConfig,
    SimSetting, SUPPORT,
};

fn setting(n: usize, mode: ErrorMode, seed: u64) -> SimSetting {
    SimSetting::new(n, mode, seed).unwrap()
}

/// `ε = y − g₀(xᵀβ₀) − z` per row, with the index.
fn errors(s: &SimSetting) -> Vec<(f64, f64, f64)> {
    let (d, t) = gen_dataset(s).unwrap();
    (0..d.n())
        .map(|i| {
            let u = dot(&d.x[i], &t.beta);
            (u, d.z[i][0], d.y[i] - g0(u) - d.z[i][0] * t.gamma[0])
        })
        .collect()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

#[test]
fn covariates_have_their_stated_ranges() {
    let (d, t) = gen_dataset(&setting(100_000, ErrorMode::Normal, 1)).unwrap();
    assert_eq!((d.p(), d.q()), (6, 1));
    assert_eq!(t.beta, beta0());
    assert!((dot(&t.beta, &t.beta) - 1.0).abs() < 1e-15);
    for (x, z) in d.x.iter().zip(&d.z) {
        assert!(x[0].abs() <= 1.0 && x[1].abs() <= 1.0);
        assert!(x[4] == 0.0 || x[4] == 1.0);
        assert!(x[5] == 0.0 || x[5] == 1.0);
        assert!(z[0] == 1.0 || z[0] == -1.0);
    }
    let u = d.index(&t.beta);
    let (lo, hi) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    assert!((lo - SUPPORT.0).abs() < 0.05 && (hi - SUPPORT.1).abs() < 0.05, "[{lo}, {hi}]");
    assert_eq!(g0_sup(), SUPPORT.0 * SUPPORT.0);
}

#[test]
fn error_laws() {
    let normal = errors(&setting(100_000, ErrorMode::Normal, 2));
    assert!(mean(normal.iter().map(|e| e.2)).abs() < 0.01);
    assert!((mean(normal.iter().map(|e| e.2 * e.2)) - 1.0).abs() < 0.02);

    let hetero = errors(&setting(100_000, ErrorMode::HeteroscedasticLognormalVariance, 2));
    assert!(mean(hetero.iter().map(|e| e.2)).abs() < 0.01);
    let standardized = mean(hetero.iter().map(|(u, z, e)| e * e / (2.0 + u * u + z).ln()));
    assert!((standardized - 1.0).abs() < 0.02, "{standardized}");
}

#[test]
fn signed_beta_centering() {
    let centered = setting(100_000, ErrorMode::SignedBeta, 3);
    let raw = SimSetting { center_signed_beta: false, ..centered };
    let (c, r) = (errors(&centered), errors(&raw));
    assert!(mean(c.iter().map(|e| e.2)).abs() < 0.01);
    assert!(c.iter().all(|e| e.2.abs() <= 1.0 + 0.4));
    for ((u, z, ec), (_, _, er)) in c.iter().zip(&r) {
        let pr = 1.0 / (1.0 + (-(u + z)).exp());
        assert!((er - ec - 0.4 * (1.0 - 2.0 * pr)).abs() < 1e-12);
    }
    // The raw error's conditional mean is nonzero, so its correlation with the
    // index is visible at this size.
    assert!(mean(r.iter().map(|e| e.2 * e.0)).abs() > 0.01);
}

#[test]
fn small_samples_are_rejected() {
    assert!(SimSetting::new(49, ErrorMode::Normal, 0).is_err());
    assert!(ErrorMode::from_setting(4).is_err());
    assert_eq!(ErrorMode::from_setting(2).unwrap().setting(), 2);
}

fn quick() -> ExperimentConfig {
    ExperimentConfig { mc_reps: 3, b: 100, grid_size: 101, threads: Some(1), fit: FitConfig::default(), ..ExperimentConfig::default() }
}

#[test]
fn reports_are_consistent_and_thread_invariant() {
    let cfg = quick();
    let cov = run_coverage(&[ErrorMode::Normal], &[100], &[0.05, 0.2], &cfg).unwrap();
    let cov4 = run_coverage(&[ErrorMode::Normal], &[100], &[0.05, 0.2], &ExperimentConfig { threads: Some(4), ..quick() }).unwrap();
    assert_eq!(cov.to_json().unwrap(), cov4.to_json().unwrap());
    assert_eq!(cov.cells.len(), 2);
    for c in &cov.cells {
        assert_eq!(c.reps + c.failures, 3);
        let k = c.count.unwrap();
        let p = k as f64 / c.reps as f64;
        assert_eq!(c.rate, Some(p));
        assert!((c.se.unwrap() - (p * (1.0 - p) / c.reps as f64).sqrt()).abs() < 1e-15);
    }
    assert!(cov.cells[0].count >= cov.cells[1].count);

    let csv = cov.to_csv();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("setting,n,statistic,alpha,delta,y0,reps,failures,count,rate,se,"));
}

#[test]
fn power_curve_is_monotone_and_relevant_dominates() {
    let grid: Vec<f64> = (0..6).map(|k| k as f64 * 0.3).collect();
    let r = run_power_curve(ErrorMode::Normal, &[100], &grid, 0.05, &quick()).unwrap();
    let rel: Vec<usize> = r.cells_named("relevant").map(|c| c.count.unwrap()).collect();
    let dual: Vec<usize> = r.cells_named("duality").map(|c| c.count.unwrap()).collect();
    assert_eq!((rel.len(), dual.len()), (6, 6));
    assert!(rel.windows(2).all(|w| w[0] >= w[1]));
    assert!(dual.windows(2).all(|w| w[0] >= w[1]));
    assert!(rel.iter().zip(&dual).all(|(a, b)| a >= b));
    assert!(run_power_curve(ErrorMode::Normal, &[100], &[], 0.05, &quick()).is_err());
}

#[test]
fn joint_cells_cover_every_level_and_value() {
    let r = run_joint(ErrorMode::Normal, &[100], &[1.0, 0.0], &[0.05, 0.1], &quick()).unwrap();
    let keys: Vec<(f64, f64)> = r.cells.iter().map(|c| (c.y0.unwrap(), c.alpha.unwrap())).collect();
    assert_eq!(keys, vec![(1.0, 0.05), (1.0, 0.1), (0.0, 0.05), (0.0, 0.1)]);
    for pair in r.cells.chunks(2) {
        assert!(pair[0].count <= pair[1].count);
    }
    assert!(run_joint(ErrorMode::Normal, &[100], &[f64::NAN], &[0.05], &quick()).is_err());
}

#[test]
fn risk_replications_are_stable_under_extension() {
    let one = run_risk(&[ErrorMode::Normal], &[100], &ExperimentConfig { mc_reps: 1, ..quick() }).unwrap();
    let two = run_risk(&[ErrorMode::Normal], &[100], &ExperimentConfig { mc_reps: 2, ..quick() }).unwrap();
    let first = one.cells[0].summary.unwrap().median;
    let s = two.cells[0].summary.unwrap();
    assert!(first > 0.0);
    assert!(first == s.min || first == s.max);
    assert!(run_risk(&[ErrorMode::Normal], &[10], &quick()).is_err());
    assert!(run_coverage(&[ErrorMode::Normal], &[100], &[0.6], &quick()).is_err());
}
