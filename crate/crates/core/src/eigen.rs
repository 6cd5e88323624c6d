//! Data-adaptive eigenbasis simultaneously diagonalizing the weighted `L²`
//! form `V(f, g) = ∫ f g w` and the roughness penalty `J(f, g) = ∫ f⁽ᵐ⁾ g⁽ᵐ⁾`.
//!
//! The pair is discretized in a clamped B-spline basis and solved as the
//! symmetric-definite pencil `J_B c = ρ V_B c`. The polynomial null space of
//! `J` (degree `< m`) is split off exactly before the eigensolve, so the
//! leading `m` eigenvalues are exactly zero.
//!
//! Eigenfunctions are stored as values and first derivatives on a grid made of
//! the knots plus the quadrature nodes; off-grid evaluation is cubic Hermite
//! interpolation of those samples.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bspline::{BSplineBasis, GAUSS_LEGENDRE_4};
use crate::density::{DensityEstimate, Interval};
use crate::error::{Error, Result};

/// Working conditional variance `σ₀²(s)` entering the weight `w = σ₀² f`.
#[derive(Debug, Clone, PartialEq)]
pub enum Sigma0Sq {
    Constant(f64),
    /// Values on the density grid, linearly interpolated.
    Grid(Vec<f64>),
}

impl Default for Sigma0Sq {
    fn default() -> Self {
        Sigma0Sq::Constant(1.0)
    }
}

/// Grid-sampled eigensystem `{(φⱼ, ρⱼ)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    pub interval: Interval,
    pub m: usize,
    pub num_eigen: usize,
    pub grid: Vec<f64>,
    /// Quadrature weights on `grid` (zero at knots).
    pub quad: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub dphi: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
    pub weight: Vec<f64>,
}

/// Raw pencil in B-spline coordinates together with the eigenvector
/// coefficients, kept for invariant checks.
#[derive(Debug, Clone)]
pub struct Pencil {
    pub v_b: DMatrix<f64>,
    pub j_b: DMatrix<f64>,
    /// `num_basis × num_eigen` coefficient matrix Φ.
    pub coef: DMatrix<f64>,
}

/// Builds the eigensystem for the weight `sigma0sq · density`.
pub fn build_eigensystem(
    density: &DensityEstimate,
    sigma0sq: &Sigma0Sq,
    m: usize,
    num_basis: usize,
    num_eigen: usize,
) -> Result<EigenSystem> {
    build_with_pencil(density, sigma0sq, m, num_basis, num_eigen).map(|(e, _)| e)
}

/// Same as [`build_eigensystem`], also returning the discretized pencil.
pub fn build_with_pencil(
    density: &DensityEstimate,
    sigma0sq: &Sigma0Sq,
    m: usize,
    num_basis: usize,
    num_eigen: usize,
) -> Result<(EigenSystem, Pencil)> {
    if m < 2 {
        return Err(Error::InvalidInput("penalty order m must be at least 2".into()));
    }
    if num_eigen < m + 1 || num_eigen > num_basis {
        return Err(Error::InvalidInput(format!(
            "num_eigen must lie in [m+1, num_basis] (got {num_eigen}, m={m}, num_basis={num_basis})"
        )));
    }
    if let Sigma0Sq::Grid(v) = sigma0sq {
        if v.len() != density.grid.len() {
            return Err(Error::InvalidInput("sigma0sq grid length differs from density grid".into()));
        }
    }
    let interval = density.interval;
    let order = (m + 1).max(4);
    let basis = BSplineBasis::uniform(interval.lo, interval.hi, num_basis, order)?;
    let p = order - 1;

    // Storage grid: breakpoints plus four Gauss–Legendre nodes per span.
    let bp = basis.breakpoints();
    let mut grid = Vec::with_capacity(bp.len() * 5);
    let mut quad = Vec::with_capacity(bp.len() * 5);
    for w in bp.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        grid.push(a);
        quad.push(0.0);
        for &(x, wt) in GAUSS_LEGENDRE_4.iter() {
            grid.push(mid + half * x);
            quad.push(half * wt);
        }
    }
    grid.push(interval.hi);
    quad.push(0.0);

    let sigma_table = match sigma0sq {
        Sigma0Sq::Grid(vals) => Some(DensityEstimate { values: vals.clone(), ..density.clone() }),
        Sigma0Sq::Constant(_) => None,
    };
    let sigma_at = |x: f64| -> f64 {
        match (sigma0sq, &sigma_table) {
            (Sigma0Sq::Constant(c), _) => *c,
            (_, Some(t)) => t.eval(x),
            _ => unreachable!(),
        }
    };
    let weight: Vec<f64> = grid.iter().map(|&x| sigma_at(x) * density.eval(x)).collect();
    if weight.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput("weight sigma0sq * density must be strictly positive".into()));
    }

    let nd = m.max(1);
    let mut spans = Vec::with_capacity(grid.len());
    let mut ders = Vec::with_capacity(grid.len());
    for &x in &grid {
        let s = basis.span(x);
        spans.push(s);
        ders.push(basis.derivatives(s, x, nd));
    }

    let nb = basis.num_basis();
    let mut v_b = DMatrix::<f64>::zeros(nb, nb);
    let mut j_b = DMatrix::<f64>::zeros(nb, nb);
    for (k, &qw) in quad.iter().enumerate() {
        if qw == 0.0 {
            continue;
        }
        let first = spans[k] - p;
        let d = &ders[k];
        let wv = qw * weight[k];
        for a in 0..=p {
            for b in 0..=p {
                v_b[(first + a, first + b)] += wv * d[0][a] * d[0][b];
                j_b[(first + a, first + b)] += qw * d[m][a] * d[m][b];
            }
        }
    }
    symmetrize(&mut v_b);
    symmetrize(&mut j_b);

    let chol = v_b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("weighted Gram matrix is not positive definite".into()))?;
    let l = chol.l();

    // C = L⁻¹ J L⁻ᵀ
    let lj = l
        .solve_lower_triangular(&j_b)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let mut c = l
        .solve_lower_triangular(&lj.transpose())
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    symmetrize(&mut c);

    // Null space: V-projections of the scaled monomials 1, t, ..., t^(m-1).
    let (mid, half) = (0.5 * (interval.lo + interval.hi), 0.5 * interval.width());
    let mut rhs = DMatrix::<f64>::zeros(nb, m);
    for (k, &qw) in quad.iter().enumerate() {
        if qw == 0.0 {
            continue;
        }
        let first = spans[k] - p;
        let t = (grid[k] - mid) / half;
        let wv = qw * weight[k];
        for a in 0..=p {
            let mut tp = 1.0;
            for d in 0..m {
                rhs[(first + a, d)] += wv * ders[k][0][a] * tp;
                tp *= t;
            }
        }
    }
    let poly_coef = chol.solve(&rhs);
    let null_y = l.transpose() * poly_coef;
    let qr = null_y.qr();
    let mut q_full = DMatrix::<f64>::identity(nb, nb);
    qr.q_tr_mul(&mut q_full);
    let q_full = q_full.transpose();
    let q1 = q_full.columns(0, m).into_owned();
    let q2 = q_full.columns(m, nb - m).into_owned();

    let mut c2 = q2.transpose() * &c * &q2;
    symmetrize(&mut c2);
    let eig = c2.symmetric_eigen();
    let mut order_idx: Vec<usize> = (0..nb - m).collect();
    order_idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

    let mut y = DMatrix::<f64>::zeros(nb, num_eigen);
    let mut rho = vec![0.0; num_eigen];
    y.columns_mut(0, m).copy_from(&q1);
    for (j, &idx) in order_idx.iter().take(num_eigen - m).enumerate() {
        let u = eig.eigenvectors.column(idx);
        y.set_column(m + j, &(&q2 * u));
        rho[m + j] = eig.eigenvalues[idx].max(0.0);
    }
    orthonormalize_clusters(&mut y, &rho, m);

    let mut coef = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;

    // Sample on the storage grid.
    let g = grid.len();
    let mut phi = vec![vec![0.0; g]; num_eigen];
    let mut dphi = vec![vec![0.0; g]; num_eigen];
    for j in 0..num_eigen {
        for k in 0..g {
            let first = spans[k] - p;
            let (mut v, mut dv) = (0.0, 0.0);
            for a in 0..=p {
                v += coef[(first + a, j)] * ders[k][0][a];
                dv += coef[(first + a, j)] * ders[k][1][a];
            }
            phi[j][k] = v;
            dphi[j][k] = dv;
        }
        // Sign convention: positive at the left endpoint, or positive slope there
        // when the value vanishes.
        let scale = phi[j].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let flip = if phi[j][0].abs() > 1e-3 * scale { phi[j][0] < 0.0 } else { dphi[j][0] < 0.0 };
        if flip {
            phi[j].iter_mut().for_each(|v| *v = -*v);
            dphi[j].iter_mut().for_each(|v| *v = -*v);
            coef.column_mut(j).neg_mut();
        }
    }

    let sys = EigenSystem { interval, m, num_eigen, grid, quad, phi, dphi, rho, weight };
    Ok((sys, Pencil { v_b, j_b, coef }))
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
}

/// Modified Gram–Schmidt inside blocks of (numerically) repeated eigenvalues.
fn orthonormalize_clusters(y: &mut DMatrix<f64>, rho: &[f64], start: usize) {
    let v = rho.len();
    let mut j = start;
    while j < v {
        let mut end = j + 1;
        while end < v && (rho[end] - rho[j]).abs() <= 1e-8 * rho[j].abs().max(1.0) {
            end += 1;
        }
        if end - j > 1 {
            for a in j..end {
                for b in j..a {
                    let proj = y.column(a).dot(&y.column(b));
                    let col_b = y.column(b).into_owned();
                    let mut col_a = y.column_mut(a);
                    col_a.axpy(-proj, &col_b, 1.0);
                }
                let norm = y.column(a).norm();
                y.column_mut(a).scale_mut(1.0 / norm);
            }
        }
        j = end;
    }
}

/// Locates the grid cell for `s` and returns `(k, t, h)` with `s = grid[k] + t h`.
fn locate(grid: &[f64], s: f64) -> (usize, f64, f64) {
    let last = grid.len() - 1;
    let k = grid.partition_point(|&g| g <= s).saturating_sub(1).min(last - 1);
    let h = grid[k + 1] - grid[k];
    (k, (s - grid[k]) / h, h)
}

/// Cubic Hermite value and derivative on cell `(k, t, h)`.
#[inline]
fn hermite(y: &[f64], dy: &[f64], k: usize, t: f64, h: f64) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let v = h00 * y[k] + h10 * h * dy[k] + h01 * y[k + 1] + h11 * h * dy[k + 1];
    let d = (6.0 * t2 - 6.0 * t) / h * y[k]
        + (3.0 * t2 - 4.0 * t + 1.0) * dy[k]
        + (6.0 * t - 6.0 * t2) / h * y[k + 1]
        + (3.0 * t2 - 2.0 * t) * dy[k + 1];
    (v, d)
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    fn check_point(&self, s: f64) -> Result<f64> {
        let tol = 1e-12 * self.interval.width().max(1.0);
        if !(s >= self.interval.lo - tol && s <= self.interval.hi + tol) {
            return Err(Error::Domain { value: s, lo: self.interval.lo, hi: self.interval.hi });
        }
        Ok(s.clamp(self.interval.lo, self.interval.hi))
    }

    /// Values and first derivatives of all eigenfunctions at `points`
    /// (`v × P` each). Points must lie in the interval.
    pub fn eval_basis(&self, points: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let v = self.len();
        let mut vals = vec![Vec::with_capacity(points.len()); v];
        let mut ders = vec![Vec::with_capacity(points.len()); v];
        for &s in points {
            let s = self.check_point(s)?;
            let (k, t, h) = locate(&self.grid, s);
            for j in 0..v {
                let (a, b) = hermite(&self.phi[j], &self.dphi[j], k, t, h);
                vals[j].push(a);
                ders[j].push(b);
            }
        }
        Ok((vals, ders))
    }

    /// Row of eigenfunction values at `s`, linearly extrapolated outside the interval.
    pub fn basis_row_extended(&self, s: f64, out: &mut [f64]) {
        let Interval { lo, hi } = self.interval;
        let last = self.grid.len() - 1;
        if s < lo {
            for j in 0..self.len() {
                out[j] = self.phi[j][0] + self.dphi[j][0] * (s - lo);
            }
        } else if s > hi {
            for j in 0..self.len() {
                out[j] = self.phi[j][last] + self.dphi[j][last] * (s - hi);
            }
        } else {
            let (k, t, h) = locate(&self.grid, s);
            for j in 0..self.len() {
                out[j] = hermite(&self.phi[j], &self.dphi[j], k, t, h).0;
            }
        }
    }

    /// `Σ cⱼ φⱼ` sampled on the storage grid, for fast repeated evaluation.
    pub fn combine(&self, coeffs: &[f64]) -> GridFunction {
        let g = self.grid.len();
        let mut values = vec![0.0; g];
        let mut derivs = vec![0.0; g];
        for (j, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for k in 0..g {
                values[k] += c * self.phi[j][k];
                derivs[k] += c * self.dphi[j][k];
            }
        }
        GridFunction { grid: self.grid.clone(), values, derivs, interval: self.interval }
    }

    /// The first `v` eigenpairs.
    pub fn truncated(&self, v: usize) -> Result<EigenSystem> {
        if v <= self.m || v > self.len() {
            return Err(Error::InvalidInput(format!("cannot truncate {} eigenpairs to {v}", self.len())));
        }
        Ok(EigenSystem {
            num_eigen: v,
            phi: self.phi[..v].to_vec(),
            dphi: self.dphi[..v].to_vec(),
            rho: self.rho[..v].to_vec(),
            ..self.clone()
        })
    }

    /// Largest entry of `|G - I|` where `G` is the grid-quadrature Gram matrix
    /// of the eigenfunctions under the weight.
    pub fn grid_orthonormality(&self) -> f64 {
        let v = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..v {
            for j in 0..=i {
                let s: f64 = (0..self.grid.len())
                    .map(|k| self.quad[k] * self.weight[k] * self.phi[i][k] * self.phi[j][k])
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }
}

/// A single function tabulated on an eigensystem grid, with Hermite evaluation.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
    derivs: Vec<f64>,
    interval: Interval,
}

impl GridFunction {
    /// Value and derivative at `s`; linear extrapolation outside the interval.
    #[inline]
    pub fn eval(&self, s: f64) -> (f64, f64) {
        let last = self.grid.len() - 1;
        if s < self.interval.lo {
            return (self.values[0] + self.derivs[0] * (s - self.interval.lo), self.derivs[0]);
        }
        if s > self.interval.hi {
            return (self.values[last] + self.derivs[last] * (s - self.interval.hi), self.derivs[last]);
        }
        let (k, t, h) = locate(&self.grid, s);
        hermite(&self.values, &self.derivs, k, t, h)
    }

    pub fn value(&self, s: f64) -> f64 {
        self.eval(s).0
    }
}

/// Reproducing kernel of `⟨f, g⟩_K = V(f, g) + λ J(f, g)` truncated at `v` terms.
#[derive(Debug, Clone, Copy)]
pub struct KernelHandle<'a> {
    pub eig: &'a EigenSystem,
    pub lambda: f64,
}

impl<'a> KernelHandle<'a> {
    pub fn new(eig: &'a EigenSystem, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidInput("lambda must be positive".into()));
        }
        Ok(Self { eig, lambda })
    }
}

/// `K(s, t) = Σⱼ φⱼ(s) φⱼ(t) / (1 + λ ρⱼ)`.
pub fn kernel_eval(k: &KernelHandle<'_>, s: f64, t: f64) -> Result<f64> {
    let (ps, _) = k.eig.eval_basis(&[s])?;
    let (pt, _) = k.eig.eval_basis(&[t])?;
    Ok(ps
        .iter()
        .zip(&pt)
        .zip(&k.eig.rho)
        .map(|((a, b), r)| a[0] * b[0] / (1.0 + k.lambda * r))
        .sum())
}

/// Coefficients of `M_λ g` for `g = Σ aⱼ φⱼ`: component-wise `λρⱼaⱼ / (1 + λρⱼ)`.
pub fn apply_m_lambda(a: &[f64], lambda: f64, rho: &[f64]) -> Result<Vec<f64>> {
    if a.len() != rho.len() {
        return Err(Error::InvalidInput(format!(
            "coefficient length {} differs from eigenvalue length {}",
            a.len(),
            rho.len()
        )));
    }
    Ok(a.iter()
        .zip(rho)
        .map(|(&aj, &r)| {
            let lr = lambda * r;
            if lr.is_infinite() {
                aj
            } else {
                aj * lr / (1.0 + lr)
            }
        })
        .collect())
}

/// Writes `(grid, φ₁..φᵥ)` rows followed by a `rho` row as CSV.
pub fn debug_csv(eig: &EigenSystem) -> String {
    let mut out = String::from("s");
    for j in 0..eig.len() {
        out.push_str(&format!(",phi{}", j + 1));
    }
    out.push('\n');
    for (k, s) in eig.grid.iter().enumerate() {
        out.push_str(&format!("{s:.16e}"));
        for j in 0..eig.len() {
            out.push_str(&format!(",{:.16e}", eig.phi[j][k]));
        }
        out.push('\n');
    }
    out.push_str("rho");
    for r in &eig.rho {
        out.push_str(&format!(",{r:.16e}"));
    }
    out.push('\n');
    out
}

/// Returns `(max |ΦᵀV_BΦ - I|, max |ΦᵀJ_BΦ - diag ρ| / ρ_v)`.
pub fn pencil_residuals(eig: &EigenSystem, pencil: &Pencil) -> (f64, f64) {
    let c = &pencil.coef;
    let vv = c.transpose() * &pencil.v_b * c;
    let jj = c.transpose() * &pencil.j_b * c;
    let v = eig.len();
    let top = eig.rho[v - 1].max(1.0);
    let mut rv: f64 = 0.0;
    let mut rj: f64 = 0.0;
    for i in 0..v {
        for j in 0..v {
            let iv = if i == j { 1.0 } else { 0.0 };
            let ij = if i == j { eig.rho[i] } else { 0.0 };
            rv = rv.max((vv[(i, j)] - iv).abs());
            rj = rj.max((jj[(i, j)] - ij).abs() / top);
        }
    }
    (rv, rj)
}

/// Convenience: least-squares residual of projecting `target` (sampled on the
/// grid) onto the span of the first `k` eigenfunctions, in the `V` norm.
pub fn projection_residual(eig: &EigenSystem, k: usize, target: &[f64]) -> f64 {
    let g = eig.grid.len();
    let w: Vec<f64> = (0..g).map(|i| eig.quad[i] * eig.weight[i]).collect();
    let mut resid = target.to_vec();
    for j in 0..k {
        let c: f64 = (0..g).map(|i| w[i] * target[i] * eig.phi[j][i]).sum();
        for i in 0..g {
            resid[i] -= c * eig.phi[j][i];
        }
    }
    let num: f64 = (0..g).map(|i| w[i] * resid[i] * resid[i]).sum();
    let den: f64 = (0..g).map(|i| w[i] * target[i] * target[i]).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}
