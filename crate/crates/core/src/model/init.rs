//! Random-direction initializer for the index.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::{norm, sign_normalize, Dataset, FitConfig};
use crate::bspline::BSplineBasis;
use crate::error::{Error, Result};
use crate::rng::{substream, TAG_INIT};

const INTERIOR_KNOTS: usize = 8;

/// Draws `config.n_init_directions` uniform directions and keeps the one whose
/// partially linear cubic-spline fit (fewer knots on small samples) has the smallest median absolute residual.
pub fn initial_beta(data: &Dataset, config: &FitConfig) -> Result<Vec<f64>> {
    rank_directions(data, config)?.into_iter().next().map(|(_, k)| k).ok_or(Error::Initialization)
}

/// All usable candidate directions of [`initial_beta`] with their scores,
/// best first; ties keep the draw order.
pub fn rank_directions(data: &Dataset, config: &FitConfig) -> Result<Vec<(f64, Vec<f64>)>> {
    let mut rng = substream(config.seed, &[TAG_INIT]);
    let p = data.p();
    let mut scored = Vec::new();
    for _ in 0..config.n_init_directions {
        let mut kappa: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        let nk = norm(&kappa);
        if !(nk > 0.0) {
            continue;
        }
        kappa.iter_mut().for_each(|v| *v /= nk);
        sign_normalize(&mut kappa);
        if let Some(score) = median_abs_residual(data, &kappa) {
            scored.push((score, kappa));
        }
    }
    if scored.is_empty() {
        return Err(Error::Initialization);
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(scored)
}

fn median_abs_residual(data: &Dataset, kappa: &[f64]) -> Option<f64> {
    let u = data.index(kappa);
    let mut sorted = u.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if !(hi > lo) {
        return None;
    }
    let knots = INTERIOR_KNOTS.min(data.n().saturating_sub(data.q() + 7));
    let mut interior: Vec<f64> = (1..=knots)
        .map(|k| quantile_sorted(&sorted, k as f64 / (knots + 1) as f64))
        .collect();
    let basis = BSplineBasis::with_interior(lo, hi, &mut interior, 4).ok()?;
    let (n, nb, q) = (data.n(), basis.num_basis(), data.q());
    let k = nb + q;
    if n <= k {
        return None;
    }
    let mut design = DMatrix::zeros(n, k);
    for (i, &s) in u.iter().enumerate() {
        let span = basis.span(s);
        let vals = basis.derivatives(span, s, 0);
        for (j, v) in vals[0].iter().enumerate() {
            design[(i, span + 1 - 4 + j)] = *v;
        }
        for j in 0..q {
            design[(i, nb + j)] = data.z[i][j];
        }
    }
    let y = DVector::from_column_slice(&data.y);
    let gram = design.tr_mul(&design);
    let scale = gram.diagonal().amax().max(f64::MIN_POSITIVE);
    let chol = gram.cholesky()?;
    let diag_min = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b * b));
    if diag_min < 1e-12 * scale {
        return None;
    }
    let coef = chol.solve(&design.tr_mul(&y));
    let mut res: Vec<f64> = (y - design * coef).iter().map(|r| r.abs()).collect();
    if res.iter().any(|r| !r.is_finite()) {
        return None;
    }
    res.sort_by(|a, b| a.total_cmp(b));
    let m = res.len();
    Some(if m % 2 == 1 { res[m / 2] } else { 0.5 * (res[m / 2 - 1] + res[m / 2]) })
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let i = h.floor() as usize;
    let t = h - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - t) + sorted[i + 1] * t
    } else {
        sorted[i]
    }
}
