use std::f64::consts::PI;

use sim_spline::eigen::{build_with_pencil, pencil_residuals, projection_residual, Sigma0Sq};
use sim_spline::{apply_m_lambda, build_eigensystem, estimate_density, kernel_eval, DensityEstimate, EigenSystem, Error, Interval, KernelHandle};

fn flat(lo: f64, hi: f64) -> DensityEstimate {
    let interval = Interval::new(lo, hi).unwrap();
    let v = 1.0 / interval.width();
    DensityEstimate { interval, grid: interval.linspace(2), values: vec![v, v], floor: 0.0, bandwidth: 0.0, raw_mass: 1.0 }
}

fn unit_system(m: usize, num_basis: usize, v: usize) -> EigenSystem {
    build_eigensystem(&flat(0.0, 1.0), &Sigma0Sq::Constant(1.0), m, num_basis, v).unwrap()
}

/// k-th positive root of `cos β cosh β = 1`, by bisection on `[kπ, (k+1)π]`.
fn free_beam_root(k: usize) -> f64 {
    let f = |b: f64| b.cos() - 1.0 / b.cosh();
    let (mut lo, mut hi) = (k as f64 * PI, (k + 1) as f64 * PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn log_log_slope(rho: &[f64], js: std::ops::RangeInclusive<usize>) -> f64 {
    let pts: Vec<(f64, f64)> = js.map(|j| ((j as f64).ln(), rho[j - 1].ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn flat_weight_m2_matches_free_beam() {
    // With w ≡ 1 and m = 2 the natural boundary conditions φ'' = φ''' = 0 are
    // those of a free–free beam: ρ_{2+k} = β_k⁴ with cos β_k cosh β_k = 1.
    let e = unit_system(2, 128, 40);
    assert_eq!(&e.rho[..2], &[0.0, 0.0]);
    for k in 1..=12 {
        let exact = free_beam_root(k).powi(4);
        let rel = (e.rho[1 + k] - exact).abs() / exact;
        assert!(rel < 2e-5, "mode {k}: {} vs {exact} ({rel:e})", e.rho[1 + k]);
    }
}

#[test]
fn growth_slope_follows_exact_spectrum() {
    let e = unit_system(2, 128, 64);
    let mut exact = vec![0.0, 0.0];
    exact.extend((1..=62).map(|k| free_beam_root(k).powi(4)));
    let (s_fit, s_exact) = (log_log_slope(&e.rho, 5..=22), log_log_slope(&exact, 5..=22));
    assert!((s_fit - s_exact).abs() < 1e-3, "{s_fit} vs {s_exact}");
    // The offset in ρ_j ≈ (π(j − 3/2))⁴ fades with j and the slope approaches 2m.
    let far = log_log_slope(&e.rho, 40..=60);
    assert!((far - 4.0).abs() < 0.15, "{far}");
    assert!(far < s_fit);
}

#[test]
fn flat_weight_m3_modes_are_cosine_like() {
    // For m = 3 the nonzero spectrum sits at ρ_{3+k} ≈ ((k+1)π)⁶, so the first
    // one is (2π)⁶ and the next (3π)⁶: there is no degenerate pair.
    let e = unit_system(3, 128, 12);
    assert_eq!(&e.rho[..3], &[0.0, 0.0, 0.0]);
    for k in 1..=4 {
        let beta = e.rho[2 + k].powf(1.0 / 6.0) / PI;
        assert!((beta - (k + 1) as f64).abs() < 5e-3, "mode {k}: {beta}");
    }
    assert!((e.rho[3] / (2.0 * PI).powi(6) - 1.0).abs() < 1e-3);
}

#[test]
fn pencil_identities_hold_for_kde_weight() {
    let samples: Vec<f64> = (0..400).map(|i| ((i as f64 * 0.618_033_988_7).fract() - 0.5).powi(3) * 4.0).collect();
    let interval = Interval::covering(&samples, 0.05).unwrap();
    let dens = estimate_density(&samples, interval, 256).unwrap();
    for m in [2, 3] {
        let (e, pencil) = build_with_pencil(&dens, &Sigma0Sq::Constant(1.7), m, 64, 30).unwrap();
        let (rv, rj) = pencil_residuals(&e, &pencil);
        assert!(rv < 1e-8 && rj < 1e-8, "m={m}: {rv:e} {rj:e}");
        assert!(e.grid_orthonormality() < 1e-6);
        assert!(e.rho.windows(2).all(|w| w[0] <= w[1]));
        let top = e.rho[e.len() - 1];
        assert_eq!(e.rho.iter().filter(|&&r| r < 1e-8 * top).count(), m);
        assert!(e.phi.iter().flatten().all(|v| v.is_finite()));
        for k in 0..m {
            let target: Vec<f64> = e.grid.iter().map(|s| s.powi(k as i32)).collect();
            assert!(projection_residual(&e, m, &target) < 1e-5);
        }
    }
}

#[test]
fn refinement_converges() {
    let coarse = unit_system(3, 64, 20);
    let fine = unit_system(3, 128, 20);
    for j in 3..10 {
        let rel = (coarse.rho[j] - fine.rho[j]).abs() / fine.rho[j];
        assert!(rel < 1e-2, "j={j}: {rel:e}");
    }
}

#[test]
fn eval_basis_nodes_midpoints_and_domain() {
    let e = unit_system(2, 128, 8);
    let (vals, ders) = e.eval_basis(&e.grid).unwrap();
    assert_eq!(vals, e.phi);
    assert_eq!(ders, e.dphi);

    let (empty, _) = e.eval_basis(&[]).unwrap();
    assert!(empty.iter().all(|row| row.is_empty()));
    assert!(matches!(e.eval_basis(&[1.5]), Err(Error::Domain { .. })));
    assert!(e.eval_basis(&[1.0 + 1e-14, -1e-14]).is_ok());

    // Interpolated midpoints against a system on a 4× finer basis.
    let fine = unit_system(2, 512, 8);
    let mids: Vec<f64> = e.grid.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let (a, _) = e.eval_basis(&mids).unwrap();
    let (b, _) = fine.eval_basis(&mids).unwrap();
    for j in 0..8 {
        let sign = if a[j].iter().zip(&b[j]).map(|(x, y)| x * y).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        let worst = a[j].iter().zip(&b[j]).fold(0.0f64, |m, (x, y)| m.max((x - sign * y).abs()));
        assert!(worst < 1e-4, "phi{j}: {worst:e}");
    }
}

#[test]
fn kernel_symmetry_psd_and_limits() {
    let e = unit_system(3, 64, 20);
    let k = KernelHandle::new(&e, 1e-4).unwrap();
    for i in 0..100 {
        let s = (i as f64 * 0.381_966).fract();
        let t = (i as f64 * 0.723_607 + 0.1).fract();
        assert_eq!(kernel_eval(&k, s, t).unwrap(), kernel_eval(&k, t, s).unwrap());
    }

    let pts = Interval::new(0.0, 1.0).unwrap().linspace(40);
    let gram = nalgebra::DMatrix::from_fn(40, 40, |i, j| kernel_eval(&k, pts[i], pts[j]).unwrap());
    let min_eig = gram.clone().symmetric_eigenvalues().min();
    assert!(min_eig >= -1e-8 * gram.trace() / 40.0, "{min_eig:e}");

    let big = KernelHandle::new(&e, 1e12).unwrap();
    let (phi, _) = e.eval_basis(&[0.2, 0.7]).unwrap();
    let null: f64 = (0..3).map(|j| phi[j][0] * phi[j][1]).sum();
    assert!((kernel_eval(&big, 0.2, 0.7).unwrap() - null).abs() < 1e-6);

    assert!(KernelHandle::new(&e, 0.0).is_err());
    assert!(matches!(kernel_eval(&k, 0.5, 2.0), Err(Error::Domain { .. })));
}

#[test]
fn kernel_reproduces_span() {
    // g(s) = Σⱼ (1 + λρⱼ) V(K_s, φⱼ) aⱼ with V evaluated by the grid quadrature.
    let e = unit_system(2, 32, 10);
    let lambda = 1e-3;
    let k = KernelHandle::new(&e, lambda).unwrap();
    let a: Vec<f64> = (0..10).map(|j| ((j * 7 + 3) % 11) as f64 / 11.0 - 0.5).collect();
    let g = e.combine(&a);
    for &s in &[0.05, 0.33, 0.5, 0.91] {
        let ks: Vec<f64> = e.grid.iter().map(|&t| kernel_eval(&k, s, t).unwrap()).collect();
        let rebuilt: f64 = (0..10)
            .map(|j| {
                let v: f64 = (0..e.grid.len()).map(|i| e.quad[i] * e.weight[i] * ks[i] * e.phi[j][i]).sum();
                (1.0 + lambda * e.rho[j]) * v * a[j]
            })
            .sum();
        assert!((rebuilt - g.value(s)).abs() < 1e-8, "s={s}: {rebuilt} vs {}", g.value(s));
    }
}

#[test]
fn m_lambda_is_diagonal_shrinkage() {
    let rho = [0.0, 0.5, 2.0, 1e3];
    assert_eq!(apply_m_lambda(&[1.0, 0.0, 0.0, 0.0], 3.0, &rho).unwrap()[0], 0.0);
    assert_eq!(apply_m_lambda(&[0.0, 1.0, 0.0, 0.0], 2.0, &rho).unwrap()[1], 0.5);
    for j in 0..4 {
        let mut ej = [0.0; 4];
        ej[j] = 1.0;
        let out = apply_m_lambda(&ej, 0.7, &rho).unwrap();
        let lr = 0.7 * rho[j];
        for (i, v) in out.iter().enumerate() {
            assert_eq!(*v, if i == j { lr / (1.0 + lr) } else { 0.0 });
        }
    }
    let a = [0.3, -1.2, 2.5, 0.8];
    let out = apply_m_lambda(&a, 0.1, &rho).unwrap();
    assert!(out.iter().zip(&a).all(|(o, x)| o.abs() <= x.abs()));
    assert!(apply_m_lambda(&a, 0.1, &rho[..3]).is_err());
}

#[test]
fn construction_rejects_bad_inputs() {
    let d = flat(0.0, 1.0);
    assert!(build_eigensystem(&d, &Sigma0Sq::Constant(1.0), 1, 32, 10).is_err());
    assert!(build_eigensystem(&d, &Sigma0Sq::Constant(1.0), 3, 32, 3).is_err());
    assert!(build_eigensystem(&d, &Sigma0Sq::Constant(1.0), 3, 32, 40).is_err());
    assert!(build_eigensystem(&d, &Sigma0Sq::Constant(-1.0), 2, 32, 10).is_err());
    assert!(build_eigensystem(&d, &Sigma0Sq::Grid(vec![1.0; 3]), 2, 32, 10).is_err());
    let ok = build_eigensystem(&d, &Sigma0Sq::Grid(vec![1.0, 2.0]), 2, 32, 10).unwrap();
    assert!(ok.grid_orthonormality() < 1e-6);
}
