//! Eigenbasis ridge solve and GCV for a fixed index direction.
//!
//! With `D = [Φ, Z]`, weights `W` and `P = diag(ρ, 0)` the coefficients solve
//! `(DᵀWD + nλP) c = DᵀWy`. For λ selection the system is reduced once to a
//! diagonal form: with `DᵀWD = LLᵀ` and `L⁻¹PL⁻ᵀ = UΣUᵀ`, every λ costs only
//! `O(nk)` and `tr(H) = Σ 1/(1 + nλσᵢ)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use super::{Dataset, WeightVector};
use crate::eigen::EigenSystem;
use crate::error::{Error, Result};

/// Normal equations of the ridge problem for one design.
#[derive(Debug, Clone)]
pub struct RidgeSystem {
    design: DMatrix<f64>,
    y: DVector<f64>,
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    penalty: Vec<f64>,
    spectral: Option<Spectral>,
}

#[derive(Debug, Clone)]
struct Spectral {
    /// `L⁻ᵀU`
    t: DMatrix<f64>,
    /// `D L⁻ᵀU`
    dt: DMatrix<f64>,
    sigma: Vec<f64>,
    /// `Uᵀ L⁻¹ DᵀWy`
    c: DVector<f64>,
}

impl RidgeSystem {
    /// `phi` is `n × v`, `z` is `n × q` (possibly zero columns).
    pub fn new(phi: &DMatrix<f64>, z: &DMatrix<f64>, y: &[f64], weights: &[f64], rho: &[f64]) -> Result<Self> {
        let mut sys = Self::unreduced(phi, z, y, weights, rho)?;
        sys.spectral = sys.reduce();
        Ok(sys)
    }

    /// Same as [`Self::new`] without the reduction used by [`Self::gcv`]
    /// (which then falls back to a direct solve per λ).
    pub fn unreduced(phi: &DMatrix<f64>, z: &DMatrix<f64>, y: &[f64], weights: &[f64], rho: &[f64]) -> Result<Self> {
        let n = y.len();
        let (v, q) = (phi.ncols(), z.ncols());
        if phi.nrows() != n || z.nrows() != n || weights.len() != n || rho.len() != v {
            return Err(Error::InvalidInput("ridge system dimensions disagree".into()));
        }
        let mut design = DMatrix::zeros(n, v + q);
        design.view_mut((0, 0), (n, v)).copy_from(phi);
        design.view_mut((0, v), (n, q)).copy_from(z);
        let mut scaled = design.clone();
        for (i, &w) in weights.iter().enumerate() {
            let sw = w.sqrt();
            scaled.row_mut(i).scale_mut(sw);
        }
        let gram = scaled.tr_mul(&scaled);
        let wy = DVector::from_iterator(n, y.iter().zip(weights).map(|(a, w)| a * w));
        let rhs = design.tr_mul(&wy);
        let mut penalty = rho.to_vec();
        penalty.resize(v + q, 0.0);
        Ok(Self { design, y: DVector::from_column_slice(y), gram, rhs, penalty, spectral: None })
    }

    fn reduce(&self) -> Option<Spectral> {
        let k = self.gram.ncols();
        let chol = cholesky_checked(self.gram.clone())?;
        let l = chol.l();
        // S = L⁻¹ P L⁻ᵀ
        let mut linv = DMatrix::identity(k, k);
        if !l.solve_lower_triangular_mut(&mut linv) {
            return None;
        }
        let mut lp = linv.clone();
        for (j, &p) in self.penalty.iter().enumerate() {
            lp.column_mut(j).scale_mut(p);
        }
        let s = lp * linv.transpose();
        let s = (&s + s.transpose()) * 0.5;
        let eig = SymmetricEigen::new(s);
        let t = linv.tr_mul(&eig.eigenvectors);
        let dt = &self.design * &t;
        let c = t.tr_mul(&self.rhs);
        let sigma = eig.eigenvalues.iter().map(|&x| x.max(0.0)).collect();
        Some(Spectral { t, dt, sigma, c })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn num_coef(&self) -> usize {
        self.gram.ncols()
    }

    /// Exact minimizer via a Cholesky solve; returns the stacked `(a, γ)`.
    pub fn solve(&self, lambda: f64) -> Result<DVector<f64>> {
        let nl = self.n() as f64 * lambda;
        let mut a = self.gram.clone();
        for (j, &p) in self.penalty.iter().enumerate() {
            a[(j, j)] += nl * p;
        }
        let chol = cholesky_checked(a).ok_or(Error::SingularDesign)?;
        let c = chol.solve(&self.rhs);
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularDesign);
        }
        Ok(c)
    }

    /// GCV score `n⁻¹‖y − ŷ‖² / (1 − tr(H)/n)²`; infinite when `tr(H) ≥ n`
    /// or the system is singular at this λ.
    pub fn gcv(&self, lambda: f64) -> f64 {
        let n = self.n() as f64;
        let (fitted, trace) = match &self.spectral {
            Some(sp) => {
                let nl = n * lambda;
                let f: Vec<f64> = sp.sigma.iter().map(|&s| 1.0 / (1.0 + nl * s)).collect();
                let scaled = DVector::from_iterator(f.len(), f.iter().zip(sp.c.iter()).map(|(a, b)| a * b));
                (&sp.dt * scaled, f.iter().sum::<f64>())
            }
            None => match self.direct_fit(lambda) {
                Some(r) => r,
                None => return f64::INFINITY,
            },
        };
        gcv_formula(&self.y, &fitted, trace)
    }

    fn direct_fit(&self, lambda: f64) -> Option<(DVector<f64>, f64)> {
        let nl = self.n() as f64 * lambda;
        let mut a = self.gram.clone();
        for (j, &p) in self.penalty.iter().enumerate() {
            a[(j, j)] += nl * p;
        }
        let chol = cholesky_checked(a)?;
        let coef = chol.solve(&self.rhs);
        let trace = chol.solve(&self.gram).trace();
        Some((&self.design * coef, trace))
    }

    /// Coefficients at λ through the reduced form; agrees with [`Self::solve`]
    /// up to rounding and is cheaper when many λ are tried.
    pub fn solve_reduced(&self, lambda: f64) -> Result<DVector<f64>> {
        match &self.spectral {
            Some(sp) => {
                let nl = self.n() as f64 * lambda;
                let scaled = DVector::from_iterator(
                    sp.sigma.len(),
                    sp.sigma.iter().zip(sp.c.iter()).map(|(&s, &c)| c / (1.0 + nl * s)),
                );
                Ok(&sp.t * scaled)
            }
            None => self.solve(lambda),
        }
    }

    /// Minimizes GCV over `grid`; ties go to the earliest entry.
    pub fn select_lambda(&self, grid: &[f64]) -> Result<(f64, f64)> {
        let mut best = (f64::NAN, f64::INFINITY);
        for &l in grid {
            let s = self.gcv(l);
            if s < best.1 {
                best = (l, s);
            }
        }
        if best.1.is_finite() {
            Ok(best)
        } else {
            Err(Error::SingularDesign)
        }
    }

    /// `(1/n) Σ wᵢ rᵢ² + λ Σ ρⱼ aⱼ²` at the stacked coefficients `c`.
    pub fn penalized_objective(&self, c: &DVector<f64>, weights: &[f64], lambda: f64) -> f64 {
        let r = &self.y - &self.design * c;
        let n = self.n() as f64;
        let loss: f64 = r.iter().zip(weights).map(|(r, w)| w * r * r).sum::<f64>() / n;
        let pen: f64 = self.penalty.iter().zip(c.iter()).map(|(p, a)| p * a * a).sum();
        loss + lambda * pen
    }
}

/// Relative pivot size below which a factorization counts as singular.
const PIVOT_TOL: f64 = 1e-13;

/// Cholesky factor of `a`, or `None` when a squared pivot is negligible
/// against the matching diagonal entry.
fn cholesky_checked(a: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let diag: Vec<f64> = a.diagonal().iter().copied().collect();
    let chol = a.cholesky()?;
    let l = chol.l_dirty();
    let ok = diag.iter().enumerate().all(|(i, &d)| l[(i, i)] * l[(i, i)] > PIVOT_TOL * d.abs() && d > 0.0);
    ok.then_some(chol)
}

fn gcv_formula(y: &DVector<f64>, fitted: &DVector<f64>, trace: f64) -> f64 {
    let n = y.len() as f64;
    let denom = 1.0 - trace / n;
    if !(denom > 1e-12) {
        return f64::INFINITY;
    }
    let rss = (y - fitted).norm_squared();
    rss / n / (denom * denom)
}

/// Solves the eigenbasis ridge problem and splits the result into `(a, γ)`.
pub fn solve_ridge(
    phi: &DMatrix<f64>,
    z: &DMatrix<f64>,
    y: &[f64],
    weights: &WeightVector,
    lambda: f64,
    rho: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let sys = RidgeSystem::new(phi, z, y, weights.as_slice(), rho)?;
    let c = sys.solve(lambda)?;
    let v = phi.ncols();
    Ok((c.rows(0, v).iter().copied().collect(), c.rows(v, z.ncols()).iter().copied().collect()))
}

/// `n × v` matrix of eigenfunction values at the index points, linearly
/// extended outside the eigensystem interval.
pub fn basis_matrix(eig: &EigenSystem, u: &[f64]) -> DMatrix<f64> {
    let v = eig.len();
    let mut m = DMatrix::zeros(u.len(), v);
    let mut row = vec![0.0; v];
    for (i, &s) in u.iter().enumerate() {
        eig.basis_row_extended(s, &mut row);
        for j in 0..v {
            m[(i, j)] = row[j];
        }
    }
    m
}

/// `n × q` matrix of the linear covariates.
pub fn z_matrix(data: &Dataset) -> DMatrix<f64> {
    let (n, q) = (data.n(), data.q());
    DMatrix::from_fn(n, q, |i, j| data.z[i][j])
}

/// GCV score of the ridge fit at direction `beta` and level `lambda`.
pub fn gcv_score(data: &Dataset, beta: &[f64], lambda: f64, eig: &EigenSystem, weights: &WeightVector) -> Result<f64> {
    let u = data.index(beta);
    let sys = RidgeSystem::new(&basis_matrix(eig, &u), &z_matrix(data), &data.y, weights.as_slice(), &eig.rho)?;
    Ok(sys.gcv(lambda))
}
