//! Index-direction update along a norm-preserving curve on the unit sphere.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{dot, sign_normalize, Dataset, WeightVector};
use crate::eigen::GridFunction;
use crate::error::{Error, Result};

/// Weighted loss `ℓₙ = (1/n) Σ wᵢ (yᵢ − g(xᵢᵀβ) − zᵢᵀγ)²`.
pub fn loss(data: &Dataset, g: &GridFunction, beta: &[f64], gamma: &[f64], weights: &WeightVector) -> f64 {
    let w = weights.as_slice();
    let s: f64 = (0..data.n())
        .map(|i| {
            let r = data.y[i] - g.value(dot(&data.x[i], beta)) - dot(&data.z[i], gamma);
            w[i] * r * r
        })
        .sum();
    s / data.n() as f64
}

/// Gradient of [`loss`] in `β`: `−(2/n) Σ wᵢ g′(xᵢᵀβ) rᵢ xᵢ`.
pub fn grad_beta(data: &Dataset, g: &GridFunction, beta: &[f64], gamma: &[f64], weights: &WeightVector) -> Vec<f64> {
    let w = weights.as_slice();
    let mut grad = vec![0.0; data.p()];
    for i in 0..data.n() {
        let (gv, gd) = g.eval(dot(&data.x[i], beta));
        let r = data.y[i] - gv - dot(&data.z[i], gamma);
        let c = w[i] * gd * r;
        for (gj, xj) in grad.iter_mut().zip(&data.x[i]) {
            *gj += c * xj;
        }
    }
    let scale = -2.0 / data.n() as f64;
    grad.iter_mut().for_each(|v| *v *= scale);
    grad
}

/// Point `β_τ` on the curve through `β` with initial direction `−(I − ββᵀ)b`.
pub fn beta_path(beta: &[f64], b: &[f64], tau: f64) -> Result<Vec<f64>> {
    let bb = dot(beta, b);
    let b2 = dot(b, b);
    let t2 = tau * tau;
    let denom = 4.0 - t2 * bb * bb + t2 * b2;
    if !(denom.abs() >= 1e-12) {
        return Err(Error::PathDegenerate(denom));
    }
    let cb = (4.0 + t2 * (bb * bb - b2) + 4.0 * tau * bb) / denom;
    let cg = 4.0 * tau / denom;
    let mut out: Vec<f64> = beta.iter().zip(b).map(|(x, y)| cb * x - cg * y).collect();
    let nrm = dot(&out, &out).sqrt();
    out.iter_mut().for_each(|v| *v /= nrm);
    Ok(out)
}

/// Bracket `(τ⁻, τ⁺)` between the two parameters where the first nonzero
/// coordinate of `β_τ` vanishes; `[−1, 1]` when `b` is (nearly) parallel to `β`.
pub fn tau_bounds(beta: &[f64], b: &[f64]) -> (f64, f64) {
    let bb = dot(beta, b);
    let b2 = dot(b, b);
    let d = b2 - bb * bb;
    let Some(i) = beta.iter().position(|v| *v != 0.0) else {
        return (-1.0, 1.0);
    };
    if !(d > 1e-14 * b2) || b2 == 0.0 {
        return (-1.0, 1.0);
    }
    let k = bb - b[i] / beta[i];
    let root = (k * k + d).sqrt();
    // τ⁻ = (2k − 2√(k²+D))/D computed without cancellation
    if k >= 0.0 {
        let tp = 2.0 * (k + root) / d;
        (-4.0 / (d * tp), tp)
    } else {
        let tm = 2.0 * (k - root) / d;
        (tm, -4.0 / (d * tm))
    }
}

const GOLDEN_ITERS: usize = 60;

/// One line search along [`beta_path`] in the direction of the loss gradient.
/// Returns the better of the searched point and `β` itself, sign-normalized,
/// together with its loss.
pub fn update_beta(
    data: &Dataset,
    g: &GridFunction,
    beta: &[f64],
    gamma: &[f64],
    weights: &WeightVector,
) -> Result<(Vec<f64>, f64)> {
    update_beta_with(data, g, beta, gamma, weights, BetaDirection::Gradient)
}

/// Vector fed to [`beta_path`] by [`update_beta_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaDirection {
    /// The loss gradient itself.
    Gradient,
    /// The gradient scaled by the inverse Gauss–Newton Hessian on the
    /// tangent space of the sphere.
    #[default]
    GaussNewton,
}

/// [`update_beta`] with a choice of search vector.
pub fn update_beta_with(
    data: &Dataset,
    g: &GridFunction,
    beta: &[f64],
    gamma: &[f64],
    weights: &WeightVector,
    direction: BetaDirection,
) -> Result<(Vec<f64>, f64)> {
    let f0 = loss(data, g, beta, gamma, weights);
    let grad = grad_beta(data, g, beta, gamma, weights);
    let b = match direction {
        BetaDirection::Gradient => grad,
        BetaDirection::GaussNewton => gauss_newton_direction(data, g, beta, weights, &grad).unwrap_or(grad),
    };
    Ok(search_path(beta, &b, f0, |bt| loss(data, g, bt, gamma, weights)))
}

/// Solves `(PHP + εI) d = P∇` with `H = (2/n) Σ wᵢ g′(uᵢ)² xᵢxᵢᵀ` and
/// `P = I − ββᵀ`. `None` when the system is numerically singular.
pub fn gauss_newton_direction(
    data: &Dataset,
    g: &GridFunction,
    beta: &[f64],
    weights: &WeightVector,
    grad: &[f64],
) -> Option<Vec<f64>> {
    let p = data.p();
    let w = weights.as_slice();
    let mut h = DMatrix::<f64>::zeros(p, p);
    for i in 0..data.n() {
        let d = g.eval(dot(&data.x[i], beta)).1;
        let c = w[i] * d * d;
        let xi = DVector::from_column_slice(&data.x[i]);
        h.ger(c, &xi, &xi, 1.0);
    }
    h *= 2.0 / data.n() as f64;
    let bv = DVector::from_column_slice(beta);
    let proj = DMatrix::identity(p, p) - &bv * bv.transpose();
    let mut hp = &proj * h * &proj;
    let eps = 1e-10 * hp.trace().max(f64::MIN_POSITIVE);
    for j in 0..p {
        hp[(j, j)] += eps;
    }
    let rhs = &proj * DVector::from_column_slice(grad);
    let d = hp.cholesky()?.solve(&rhs);
    let d = &proj * d;
    (d.iter().all(|v| v.is_finite()) && d.dot(&rhs) > 0.0).then(|| d.iter().copied().collect())
}

/// Golden-section search of `f` over the bracket of [`tau_bounds`] along
/// [`beta_path`]. Never returns a point worse than `(β, f0)`.
pub fn search_path<F: Fn(&[f64]) -> f64>(beta: &[f64], b: &[f64], f0: f64, f: F) -> (Vec<f64>, f64) {
    let bb = dot(beta, b);
    let tangent = dot(b, b) - bb * bb;
    if !(tangent > 0.0) {
        return (beta.to_vec(), f0);
    }
    let (tm, tp) = tau_bounds(beta, b);
    let eps = 1e-9 * (tp - tm);
    let (mut lo, mut hi) = (tm + eps, tp - eps);
    let mut best = (f0, beta.to_vec());
    let mut eval = |tau: f64| -> f64 {
        match beta_path(beta, b, tau) {
            Ok(bt) => {
                let v = f(&bt);
                if v < best.0 {
                    best = (v, bt);
                }
                v
            }
            Err(_) => f64::INFINITY,
        }
    };
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    for _ in 0..GOLDEN_ITERS {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = eval(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = eval(x2);
        }
    }
    let (fbest, mut bnew) = best;
    if sign_normalize(&mut bnew) {
        let flipped = f(&bnew);
        if !(flipped <= f0) {
            return (beta.to_vec(), f0);
        }
        return (bnew, flipped);
    }
    (bnew, fbest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_identity_and_parallel_gradient() {
        let beta = [0.6, 0.0, 0.8];
        assert_eq!(beta_path(&beta, &[1.0, 2.0, 3.0], 0.0).unwrap(), beta.to_vec());
        let b: Vec<f64> = beta.iter().map(|v| -2.5 * v).collect();
        for &t in &[-0.7, 0.3, 5.0] {
            let bt = beta_path(&beta, &b, t).unwrap();
            for (x, y) in bt.iter().zip(&beta) {
                assert!((x - y).abs() < 1e-14);
            }
        }
        assert_eq!(tau_bounds(&beta, &b), (-1.0, 1.0));
    }

    #[test]
    fn bracket_endpoints_zero_leading_coordinate() {
        let beta = [0.0, 0.6, -0.8];
        let b = [0.3, -1.0, 0.2];
        let (tm, tp) = tau_bounds(&beta, &b);
        assert!(tm < 0.0 && tp > 0.0);
        for t in [tm, tp] {
            let bt = beta_path(&beta, &b, t).unwrap();
            assert!(bt[1].abs() < 1e-12, "{bt:?}");
        }
    }
}
