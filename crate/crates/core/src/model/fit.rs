//! Alternating fit of the link coefficients, λ and the index direction.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::index::{loss, update_beta_with};
use super::ridge::{basis_matrix, z_matrix, RidgeSystem};
use super::{dot, norm, rank_directions, sign_normalize, Dataset, FitConfig, LambdaChoice, NumEigen, Truth, WeightVector};
use crate::density::{estimate_density, Interval};
use crate::eigen::{build_eigensystem, EigenSystem, GridFunction, Sigma0Sq};
use crate::error::{Error, Result};
use crate::rng::{substream, TAG_CV};

pub const SCHEMA: &str = "sim-spline/1";
const CV_FOLDS: usize = 5;

/// Fitted `(ĝ, β̂, γ̂)` with the eigensystem the link is expressed in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingleIndexFit {
    pub schema: String,
    /// Eigenbasis coefficients of `ĝ`.
    pub a: Vec<f64>,
    /// Bias-adjusted coefficients of `ĝ + M_λ ĝ`.
    pub a_adjusted: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub lambda: f64,
    pub gcv: f64,
    pub num_eigen: usize,
    /// Interval of the eigensystem.
    pub interval: Interval,
    /// Observed range of `xᵢᵀβ̂`.
    pub index_range: Interval,
    pub objective_trace: Vec<f64>,
    pub beta_trace: Vec<Vec<f64>>,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub converged: bool,
    pub iterations: usize,
    pub config: FitConfig,
    pub eig: Arc<EigenSystem>,
}

impl SingleIndexFit {
    /// `ĝ + M_λ ĝ` tabulated on the eigensystem grid.
    pub fn link(&self) -> GridFunction {
        self.eig.combine(&self.a_adjusted)
    }

    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string(self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let fit: Self = serde_json::from_str(s)?;
        if fit.schema != SCHEMA {
            return Err(Error::InvalidInput(format!("unsupported schema {}", fit.schema)));
        }
        Ok(fit)
    }

    /// Checks that `data` has the dimensions this fit was computed on.
    pub fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.n() != self.n || data.p() != self.p || data.q() != self.q {
            return Err(Error::InvalidInput(format!(
                "fit has (n, p, q) = ({}, {}, {}), data has ({}, {}, {})",
                self.n,
                self.p,
                self.q,
                data.n(),
                data.p(),
                data.q()
            )));
        }
        Ok(())
    }
}

/// `ãⱼ = aⱼ + λρⱼaⱼ / (1 + λρⱼ)`.
pub fn bias_adjust_coeffs(a: &[f64], lambda: f64, rho: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(rho)
        .map(|(&aj, &r)| {
            let lr = lambda * r;
            if lr.is_infinite() {
                2.0 * aj
            } else {
                aj + aj * lr / (1.0 + lr)
            }
        })
        .collect()
}

pub fn bias_adjust(fit: &SingleIndexFit) -> Vec<f64> {
    bias_adjust_coeffs(&fit.a, fit.lambda, &fit.eig.rho)
}

/// `ĝ + M_λ ĝ` at the given index values (linearly extended outside the interval).
pub fn predict_g(fit: &SingleIndexFit, s: &[f64]) -> Vec<f64> {
    let g = fit.link();
    s.iter().map(|&t| g.value(t)).collect()
}

/// Regression function `ĝ̃(xᵀβ̂) + zᵀγ̂` for the given rows.
pub fn predict(fit: &SingleIndexFit, x: &[Vec<f64>], z: &[Vec<f64>]) -> Result<Vec<f64>> {
    if x.iter().any(|r| r.len() != fit.p) {
        return Err(Error::InvalidInput(format!("x rows must have {} entries", fit.p)));
    }
    let empty = Vec::new();
    if !(z.is_empty() && fit.q == 0) && (z.len() != x.len() || z.iter().any(|r| r.len() != fit.q)) {
        return Err(Error::InvalidInput(format!("z must have {} rows of {} entries", x.len(), fit.q)));
    }
    let g = fit.link();
    Ok(x.iter()
        .enumerate()
        .map(|(i, xi)| {
            let zi = z.get(i).unwrap_or(&empty);
            g.value(dot(xi, &fit.beta)) + dot(zi, &fit.gamma)
        })
        .collect())
}

/// `√(∫(ĝ̃ − g₀)² + ‖β̂ − β₀‖² + ‖γ̂ − γ₀‖²)`, the integral by a 256-point
/// trapezoid rule over the true support when known, else over the observed
/// index range.
pub fn l2_risk(fit: &SingleIndexFit, truth: &Truth) -> f64 {
    let g = fit.link();
    let range = truth.support.unwrap_or(fit.index_range);
    let pts = range.linspace(256);
    let h = range.width() / 255.0;
    let sq: Vec<f64> = pts.iter().map(|&s| (g.value(s) - (truth.link)(s)).powi(2)).collect();
    let integral = h * (sq.iter().sum::<f64>() - 0.5 * (sq[0] + sq[255]));
    let db: f64 = fit.beta.iter().zip(&truth.beta).map(|(a, b)| (a - b).powi(2)).sum();
    let dg: f64 = fit.gamma.iter().zip(&truth.gamma).map(|(a, b)| (a - b).powi(2)).sum();
    (integral + db + dg).sqrt()
}

struct State {
    beta: Vec<f64>,
    a: Vec<f64>,
    a_adjusted: Vec<f64>,
    gamma: Vec<f64>,
    lambda: f64,
    gcv: f64,
    eig: Arc<EigenSystem>,
    objective: f64,
}

enum Basis<'a> {
    Rebuild,
    Frozen(&'a Arc<EigenSystem>),
}

/// Fits the model. `weights` default to ones.
pub fn fit(data: &Dataset, config: &FitConfig, weights: Option<&WeightVector>) -> Result<SingleIndexFit> {
    config.validate()?;
    let ones;
    let w = match weights {
        Some(w) => w,
        None => {
            ones = WeightVector::ones(data.n());
            &ones
        }
    };
    let starts = match &config.init_beta {
        Some(b) => vec![normalized_start(b, data.p())?],
        None => rank_directions(data, config)?.into_iter().take(config.n_starts.max(1)).map(|(_, b)| b).collect(),
    };
    let mut best: Option<SingleIndexFit> = None;
    let mut last_err = None;
    for start in starts {
        match run(data, config, w, start, Basis::Rebuild, config.lambda) {
            Ok(f) => {
                if best.as_ref().is_none_or(|b| f.gcv < b.gcv) {
                    best = Some(f);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::Initialization))
}

/// Refit with new case weights, starting from `base.beta` and keeping its
/// eigensystem. λ is reselected by GCV unless `reuse_lambda` is set.
pub fn refit_warm(data: &Dataset, base: &SingleIndexFit, weights: &WeightVector, reuse_lambda: bool) -> Result<SingleIndexFit> {
    base.check_data(data)?;
    if weights.len() != data.n() {
        return Err(Error::InvalidInput("weight length differs from n".into()));
    }
    let lambda = if reuse_lambda { LambdaChoice::Fixed(base.lambda) } else { base.config.lambda };
    run(data, &base.config, weights, base.beta.clone(), Basis::Frozen(&base.eig), lambda)
}

fn normalized_start(b: &[f64], p: usize) -> Result<Vec<f64>> {
    if b.len() != p {
        return Err(Error::InvalidInput(format!("init_beta must have {p} entries")));
    }
    let nb = norm(b);
    if !(nb > 0.0) || !nb.is_finite() {
        return Err(Error::InvalidInput("init_beta must be nonzero".into()));
    }
    let mut out: Vec<f64> = b.iter().map(|v| v / nb).collect();
    sign_normalize(&mut out);
    Ok(out)
}

fn run(
    data: &Dataset,
    config: &FitConfig,
    w: &WeightVector,
    start: Vec<f64>,
    basis: Basis<'_>,
    lambda_choice: LambdaChoice,
) -> Result<SingleIndexFit> {
    let z = z_matrix(data);
    let sigma = Sigma0Sq::Constant(config.sigma0sq);
    let mut v_chosen = match (&basis, config.num_eigen) {
        (Basis::Frozen(e), _) => Some(e.len()),
        (_, NumEigen::Fixed(v)) => Some(v),
        (_, NumEigen::Auto) => None,
    };
    let mut beta = start;
    let mut best: Option<State> = None;
    let mut trace = Vec::new();
    let mut beta_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..config.max_outer_iter {
        let u = data.index(&beta);
        let eig = match &basis {
            Basis::Frozen(e) => Arc::clone(e),
            Basis::Rebuild => {
                let interval = Interval::covering(&u, config.interval_extension)?;
                let density = estimate_density(&u, interval, config.density_grid)?;
                let v_build = v_chosen.unwrap_or_else(|| max_candidate(config));
                Arc::new(build_eigensystem(&density, &sigma, config.m, config.num_basis, v_build)?)
            }
        };
        let mut phi = basis_matrix(&eig, &u);
        let eig = match v_chosen {
            Some(_) => eig,
            None => {
                let v = select_v(data, config, w, &phi, &z, &eig.rho)?;
                v_chosen = Some(v);
                phi = phi.columns(0, v).into_owned();
                Arc::new(eig.truncated(v)?)
            }
        };
        let sys = RidgeSystem::new(&phi, &z, &data.y, w.as_slice(), &eig.rho)?;
        let (lambda, gcv) = match lambda_choice {
            LambdaChoice::Gcv => sys.select_lambda(&config.gcv_grid)?,
            LambdaChoice::Fixed(l) => (l, sys.gcv(l)),
        };
        let coef = sys.solve(lambda)?;
        let v = eig.len();
        let a: Vec<f64> = coef.rows(0, v).iter().copied().collect();
        let gamma: Vec<f64> = coef.rows(v, data.q()).iter().copied().collect();
        let a_adjusted = bias_adjust_coeffs(&a, lambda, &eig.rho);
        let g = eig.combine(&a_adjusted);
        let before = loss(data, &g, &beta, &gamma, w);
        if let Some(prev) = &best {
            if before > prev.objective + config.tol * prev.objective.abs() {
                converged = true;
                break;
            }
        }
        let (mut beta_new, mut objective) = update_beta_with(data, &g, &beta, &gamma, w, config.beta_direction)?;
        for _ in 1..config.beta_steps {
            let (b, f) = update_beta_with(data, &g, &beta_new, &gamma, w, config.beta_direction)?;
            let gain = objective - f;
            beta_new = b;
            objective = f;
            if !(gain > config.tol * objective.abs()) {
                break;
            }
        }
        iterations += 1;
        trace.push(objective);
        beta_trace.push(beta_new.clone());
        let rel = best.as_ref().map(|p| (p.objective - objective).abs() / p.objective.abs().max(f64::MIN_POSITIVE));
        best = Some(State { beta: beta_new.clone(), a, a_adjusted, gamma, lambda, gcv, eig, objective });
        beta = beta_new;
        if rel.is_some_and(|r| r < config.tol) {
            converged = true;
            break;
        }
    }

    let s = best.ok_or_else(|| Error::Numerical("no outer iteration completed".into()))?;
    let u = data.index(&s.beta);
    let (lo, hi) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let index_range = Interval::new(lo, hi).map_err(|_| Error::DegenerateSample)?;
    Ok(SingleIndexFit {
        schema: SCHEMA.into(),
        num_eigen: s.eig.len(),
        interval: s.eig.interval,
        a: s.a,
        a_adjusted: s.a_adjusted,
        beta: s.beta,
        gamma: s.gamma,
        lambda: s.lambda,
        gcv: s.gcv,
        index_range,
        objective_trace: trace,
        beta_trace,
        n: data.n(),
        p: data.p(),
        q: data.q(),
        converged,
        iterations,
        config: config.clone(),
        eig: s.eig,
    })
}

fn admissible(config: &FitConfig) -> Vec<usize> {
    let mut c: Vec<usize> = config
        .v_candidates
        .iter()
        .copied()
        .filter(|&v| v > config.m && v <= config.num_basis)
        .collect();
    c.sort_unstable();
    c.dedup();
    c
}

fn max_candidate(config: &FitConfig) -> usize {
    admissible(config).last().copied().unwrap_or(config.m + 1)
}

/// Five-fold CV over the candidate truncation levels. Each candidate uses the
/// λ its full-data GCV selects; ties go to the smaller `v`.
fn select_v(
    data: &Dataset,
    config: &FitConfig,
    w: &WeightVector,
    phi: &DMatrix<f64>,
    z: &DMatrix<f64>,
    rho: &[f64],
) -> Result<usize> {
    let n = data.n();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut substream(config.seed, &[TAG_CV]));
    let mut fold = vec![0usize; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold[i] = pos % CV_FOLDS;
    }
    let ws = w.as_slice();
    let mut best: Option<(f64, usize)> = None;
    for v in admissible(config) {
        let phi_v = phi.columns(0, v).into_owned();
        let lambda = match config.lambda {
            LambdaChoice::Fixed(l) => l,
            LambdaChoice::Gcv => match RidgeSystem::new(&phi_v, z, &data.y, ws, &rho[..v])?.select_lambda(&config.gcv_grid) {
                Ok((l, _)) => l,
                Err(_) => continue,
            },
        };
        let mut err = 0.0;
        let mut ok = true;
        for f in 0..CV_FOLDS {
            let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
            let sub = |m: &DMatrix<f64>| m.select_rows(train.iter());
            let y_tr: Vec<f64> = train.iter().map(|&i| data.y[i]).collect();
            let w_tr: Vec<f64> = train.iter().map(|&i| ws[i]).collect();
            let sys = RidgeSystem::new(&sub(&phi_v), &sub(z), &y_tr, &w_tr, &rho[..v])?;
            let Ok(coef) = sys.solve(lambda) else {
                ok = false;
                break;
            };
            for i in (0..n).filter(|&i| fold[i] == f) {
                let pred: f64 = (0..v).map(|j| phi_v[(i, j)] * coef[j]).sum::<f64>()
                    + (0..z.ncols()).map(|j| z[(i, j)] * coef[v + j]).sum::<f64>();
                err += ws[i] * (data.y[i] - pred).powi(2);
            }
        }
        if ok && best.is_none_or(|(e, _)| err < e) {
            best = Some((err, v));
        }
    }
    best.map(|(_, v)| v).ok_or(Error::SingularDesign)
}
