//! Synthetic data of the single-index simulation design.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::density::Interval;
use crate::error::{Error, Result};
use crate::model::{dot, Dataset, Truth};
use crate::rng::{substream, TAG_DATA};

/// Error distribution of the simulation design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    /// `ε ∼ N(0, 1)`.
    Normal,
    /// `ε | X, Z ∼ N(0, log(2 + (Xᵀβ₀)² + Zγ₀))`.
    HeteroscedasticLognormalVariance,
    /// `ε = (−1)^ξ Beta(2, 3)` with `ξ ∼ Bernoulli(logistic(Xᵀβ₀ + Zγ₀))`.
    SignedBeta,
}

impl ErrorMode {
    /// Setting number 1, 2 or 3.
    pub fn from_setting(k: u32) -> Result<Self> {
        match k {
            1 => Ok(Self::Normal),
            2 => Ok(Self::HeteroscedasticLognormalVariance),
            3 => Ok(Self::SignedBeta),
            _ => Err(Error::InvalidInput(format!("unknown setting {k} (expected 1, 2 or 3)"))),
        }
    }

    pub fn setting(self) -> u32 {
        match self {
            Self::Normal => 1,
            Self::HeteroscedasticLognormalVariance => 2,
            Self::SignedBeta => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSetting {
    pub n: usize,
    pub error_mode: ErrorMode,
    pub seed: u64,
    /// Subtract the conditional mean of the signed-Beta error so that
    /// `E(ε | X, Z) = 0`.
    pub center_signed_beta: bool,
}

impl SimSetting {
    pub fn new(n: usize, error_mode: ErrorMode, seed: u64) -> Result<Self> {
        if n < 50 {
            return Err(Error::InvalidInput("simulation needs n >= 50".into()));
        }
        Ok(Self { n, error_mode, seed, center_signed_beta: true })
    }
}

pub const BETA0_RAW: [f64; 6] = [1.3, -1.3, 1.0, -0.5, -0.5, -0.5];
pub const GAMMA0: f64 = 1.0;

pub fn beta0() -> Vec<f64> {
    let nrm = dot(&BETA0_RAW, &BETA0_RAW).sqrt();
    BETA0_RAW.iter().map(|v| v / nrm).collect()
}

pub fn g0(s: f64) -> f64 {
    s * s
}

/// Support of `Xᵀβ₀` as reported for this design.
pub const SUPPORT: (f64, f64) = (-1.04, 1.00);

pub fn support() -> Interval {
    Interval { lo: SUPPORT.0, hi: SUPPORT.1 }
}

/// `sup |g₀|` over the support.
pub fn g0_sup() -> f64 {
    g0(SUPPORT.0).max(g0(SUPPORT.1))
}

pub fn truth() -> Truth {
    Truth { link: g0, beta: beta0(), gamma: vec![GAMMA0], support: Some(support()) }
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Draws one dataset (`p = 6`, `q = 1`) and returns it with the true parameters.
pub fn gen_dataset(setting: &SimSetting) -> Result<(Dataset, Truth)> {
    if setting.n < 50 {
        return Err(Error::InvalidInput("simulation needs n >= 50".into()));
    }
    let mut rng = substream(setting.seed, &[TAG_DATA]);
    let b0 = beta0();
    let beta_dist = Beta::new(2.0, 3.0).expect("valid Beta parameters");
    let n = setting.n;
    let (mut y, mut xs, mut zs) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let x1: f64 = rng.random_range(-1.0..=1.0);
        let x2: f64 = rng.random_range(-1.0..=1.0);
        let u1: f64 = rng.random_range(-1.0..=1.0);
        let u2: f64 = rng.random_range(-1.0..=1.0);
        let x3 = 0.2 * x1 + 0.2 * (x2 + 2.0f64).powi(2) + 0.2 * u1;
        let x4 = 0.1 + 0.1 * (x1 + x2) + 0.3 * (x1 + 1.5f64).powi(2) + 0.2 * u2;
        let x5 = if rng.random::<f64>() < logistic(x1) { 1.0 } else { 0.0 };
        let x6 = if rng.random::<f64>() < logistic(x2) { 1.0 } else { 0.0 };
        let x = vec![x1, x2, x3, x4, x5, x6];
        let s = dot(&x, &b0);
        let z = if rng.random::<f64>() < logistic(s) { 1.0 } else { -1.0 };
        let eps = match setting.error_mode {
            ErrorMode::Normal => rng.sample::<f64, _>(StandardNormal),
            ErrorMode::HeteroscedasticLognormalVariance => {
                let sd = (2.0 + s * s + z * GAMMA0).ln().sqrt();
                sd * rng.sample::<f64, _>(StandardNormal)
            }
            ErrorMode::SignedBeta => {
                let pr = logistic(s + z * GAMMA0);
                let xi = rng.random::<f64>() < pr;
                let b = beta_dist.sample(&mut rng);
                let raw = if xi { -b } else { b };
                if setting.center_signed_beta {
                    raw - 0.4 * (1.0 - 2.0 * pr)
                } else {
                    raw
                }
            }
        };
        y.push(g0(s) + z * GAMMA0 + eps);
        xs.push(x);
        zs.push(vec![z]);
    }
    Ok((Dataset::new(y, xs, zs)?, truth()))
}
