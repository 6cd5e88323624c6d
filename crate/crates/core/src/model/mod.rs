//! Penalized least-squares fit of `(g, β, γ)`.
//!
//! The link is expanded in the eigenbasis of [`crate::eigen`]; for a fixed
//! index direction the coefficients solve a ridge problem ([`ridge`]), and
//! the direction is then moved along a norm-preserving curve on the sphere
//! ([`index`]). [`fit`] alternates the two.

pub mod fit;
pub mod index;
pub mod init;
pub mod ridge;

use serde::{Deserialize, Serialize};

use crate::density::Interval;
use crate::error::{Error, Result};

pub use fit::{bias_adjust, bias_adjust_coeffs, fit, l2_risk, predict, predict_g, refit_warm, SingleIndexFit, SCHEMA};
pub use index::{
    beta_path, gauss_newton_direction, grad_beta, loss, search_path, tau_bounds, update_beta, update_beta_with,
    BetaDirection,
};
pub use init::{initial_beta, rank_directions};
pub use ridge::{basis_matrix, gcv_score, solve_ridge, z_matrix, RidgeSystem};

/// Observations `(yᵢ, xᵢ, zᵢ)`, stored row-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
}

impl Dataset {
    /// Validates shapes and values. `z` may be empty (`q = 0`), in which case
    /// it is expanded to `n` empty rows.
    pub fn new(y: Vec<f64>, x: Vec<Vec<f64>>, mut z: Vec<Vec<f64>>) -> Result<Self> {
        let n = y.len();
        if x.len() != n {
            return Err(Error::InvalidInput(format!("x has {} rows, y has {n}", x.len())));
        }
        if z.is_empty() {
            z = vec![Vec::new(); n];
        }
        if z.len() != n {
            return Err(Error::InvalidInput(format!("z has {} rows, y has {n}", z.len())));
        }
        let p = x.first().map_or(0, |r| r.len());
        let q = z.first().map_or(0, |r| r.len());
        if p == 0 {
            return Err(Error::InvalidInput("x needs at least one column".into()));
        }
        if x.iter().any(|r| r.len() != p) || z.iter().any(|r| r.len() != q) {
            return Err(Error::InvalidInput("ragged covariate rows".into()));
        }
        if n <= p + q + 5 {
            return Err(Error::InvalidInput(format!("need n > p + q + 5 (n={n}, p={p}, q={q})")));
        }
        let finite = y.iter().all(|v| v.is_finite())
            && x.iter().flatten().all(|v| v.is_finite())
            && z.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("non-finite entries".into()));
        }
        if (0..p).all(|j| x.iter().all(|r| r[j] == x[0][j])) {
            return Err(Error::InvalidInput("all columns of x are constant".into()));
        }
        Ok(Self { y, x, z })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x[0].len()
    }

    pub fn q(&self) -> usize {
        self.z[0].len()
    }

    /// Index values `xᵢᵀβ`.
    pub fn index(&self, beta: &[f64]) -> Vec<f64> {
        self.x.iter().map(|r| dot(r, beta)).collect()
    }

    /// Copy with rows reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            y: perm.iter().map(|&i| self.y[i]).collect(),
            x: perm.iter().map(|&i| self.x[i].clone()).collect(),
            z: perm.iter().map(|&i| self.z[i].clone()).collect(),
        }
    }
}

/// Case weights of the (multiplier-bootstrap) weighted loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub const MAX: f64 = 1.0 + std::f64::consts::SQRT_2 + 1e-12;

    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|&v| !(v > 0.0 && v <= Self::MAX)) {
            return Err(Error::InvalidInput("weights must lie in (0, 1 + sqrt 2]".into()));
        }
        Ok(Self(w))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Truncation level of the eigenbasis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumEigen {
    /// Five-fold cross-validation over the candidate list.
    Auto,
    Fixed(usize),
}

/// Regularization parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaChoice {
    /// Minimize GCV over the grid at every outer iteration.
    Gcv,
    Fixed(f64),
}

/// Tuning of [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub m: usize,
    pub num_basis: usize,
    pub num_eigen: NumEigen,
    pub v_candidates: Vec<usize>,
    pub lambda: LambdaChoice,
    pub gcv_grid: Vec<f64>,
    pub max_outer_iter: usize,
    pub tol: f64,
    pub n_init_directions: usize,
    pub seed: u64,
    /// Fraction of the index range added on each side of the fit interval.
    pub interval_extension: f64,
    pub density_grid: usize,
    /// Constant working variance `σ₀²`.
    pub sigma0sq: f64,
    /// Starting direction; skips the random-direction initializer when set.
    #[serde(default)]
    pub init_beta: Option<Vec<f64>>,
    /// Number of best-ranked initial directions the alternation is started
    /// from; the fit with the smallest GCV score is kept.
    pub n_starts: usize,
    /// Upper bound on line searches for `β` per outer iteration, with the
    /// link held fixed.
    #[serde(default = "default_beta_steps")]
    pub beta_steps: usize,
    /// Search vector of the line searches.
    #[serde(default)]
    pub beta_direction: BetaDirection,
}

fn default_beta_steps() -> usize {
    1
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            m: 3,
            num_basis: 128,
            num_eigen: NumEigen::Auto,
            v_candidates: vec![10, 15, 20, 30, 40],
            lambda: LambdaChoice::Gcv,
            gcv_grid: log_grid(1e-8, 1.0, 30),
            max_outer_iter: 50,
            tol: 1e-6,
            n_init_directions: 100,
            seed: 0,
            interval_extension: 0.05,
            density_grid: 512,
            sigma0sq: 1.0,
            init_beta: None,
            n_starts: 1,
            beta_steps: default_beta_steps(),
            beta_direction: BetaDirection::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::InvalidInput(s.into()));
        if self.m < 2 {
            return bad("m must be at least 2");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.max_outer_iter == 0 || self.n_init_directions == 0 || self.n_starts == 0 || self.beta_steps == 0 {
            return bad("max_outer_iter, n_init_directions, n_starts and beta_steps must be positive");
        }
        match self.lambda {
            LambdaChoice::Gcv if self.gcv_grid.is_empty() || self.gcv_grid.iter().any(|&l| !(l > 0.0)) => {
                return bad("gcv_grid must be nonempty and positive")
            }
            LambdaChoice::Fixed(l) if !(l >= 0.0) => return bad("lambda must be nonnegative"),
            _ => {}
        }
        match self.num_eigen {
            NumEigen::Auto if self.v_candidates.iter().all(|&v| v <= self.m || v > self.num_basis) => {
                return bad("no admissible v candidate")
            }
            NumEigen::Fixed(v) if v <= self.m || v > self.num_basis => return bad("v must lie in (m, num_basis]"),
            _ => {}
        }
        if !(self.sigma0sq > 0.0) || !(self.interval_extension >= 0.0) || self.density_grid < 2 {
            return bad("sigma0sq, interval_extension or density_grid out of range");
        }
        Ok(())
    }
}

/// True parameters, for risk evaluation.
#[derive(Debug, Clone)]
pub struct Truth {
    pub link: fn(f64) -> f64,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Support of the true index, when known.
    pub support: Option<Interval>,
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Flips `beta` so that its first nonzero entry is positive.
pub fn sign_normalize(beta: &mut [f64]) -> bool {
    if let Some(&first) = beta.iter().find(|v| **v != 0.0) {
        if first < 0.0 {
            beta.iter_mut().for_each(|v| *v = -*v);
            return true;
        }
    }
    false
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
