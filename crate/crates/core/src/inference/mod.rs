//! Multiplier-bootstrap inference for the link function.
//!
//! Every procedure starts from the same [`BootstrapDraws`]: `B` weighted
//! refits of the main fit and the scaled deviations
//! `𝔾*_b(s) = √n λ̂^{1/(4m)} (ĝ̃*_b − ĝ̃)(s)` on an equispaced grid over the
//! observed index range, where `ĝ̃ = ĝ + M_λ ĝ`. Drawing them once and
//! reusing them keeps bands at different levels nested and lets a Δ-sweep
//! cost a single bootstrap pass.

mod procedures;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::density::Interval;
use crate::eigen::GridFunction;
use crate::error::{Error, Result};
use crate::model::{dot, refit_warm, Dataset, SingleIndexFit, WeightVector};
use crate::parallel::map_indexed;
use crate::rng::{substream, TAG_BOOT};

pub use procedures::{
    band_duality_test, band_from_draws, bootstrap_band, joint_from_draws, joint_test, pointwise_from_draws,
    pointwise_interval, relevant_from_draws, relevant_sweep, relevant_test, sweep_decisions, BandResult,
    JointTestResult, RelevantTestResult, Sweep,
};

/// Low multiplier value `1 − 1/√2`, drawn with probability 2/3.
pub const W_LOW: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
/// High multiplier value `1 + √2`, drawn with probability 1/3.
pub const W_HIGH: f64 = 1.0 + std::f64::consts::SQRT_2;

/// Largest fraction of replicates that may fail before the bootstrap errors.
pub const MAX_DROP_FRACTION: f64 = 0.05;

/// Bootstrap settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of replicates `B`.
    #[serde(rename = "B")]
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Points of the grid the sup over the index range is taken on.
    pub grid_size: usize,
    /// Keep the main fit's λ in every replicate instead of reselecting it.
    pub reuse_lambda: bool,
    /// Use the uncentered joint-test replicate statistic, which subtracts `y₀`
    /// instead of the main-fit plug-in value.
    #[serde(default)]
    pub literal_tnb: bool,
    /// Range spanned by the grid; the observed index range of the fit when unset.
    #[serde(default)]
    pub interval: Option<Interval>,
    /// Worker threads; `None` uses every core.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { b: 200, alpha: 0.05, seed: 0, grid_size: 401, reuse_lambda: false, literal_tnb: false, interval: None, threads: None }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b < 100 {
            return Err(Error::InvalidInput(format!("B must be at least 100, got {}", self.b)));
        }
        check_alpha(self.alpha)?;
        if self.grid_size < 2 {
            return Err(Error::InvalidInput("grid_size must be at least 2".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidInput("threads must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 0.5), got {alpha}")));
    }
    Ok(())
}

/// `n` i.i.d. two-point multipliers with unit mean and variance.
pub fn draw_multipliers<R: Rng + ?Sized>(n: usize, rng: &mut R) -> WeightVector {
    let w = (0..n).map(|_| if rng.random_range(0..3u8) < 2 { W_LOW } else { W_HIGH }).collect();
    WeightVector::new(w).expect("multiplier values are admissible weights")
}

/// `inf{τ : #{vᵢ ≤ τ} ≥ level·B}`, the `⌈B·level⌉`-th order statistic.
pub fn empirical_quantile(values: &[f64], level: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("quantile of an empty sample".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("quantile level must lie in (0, 1), got {level}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(sorted[order_index(sorted.len(), level)])
}

/// Zero-based index of the `⌈B·level⌉`-th order statistic. The product is
/// nudged down by a few ulps so that e.g. `10 × 0.9` lands on 9, not 10.
fn order_index(b: usize, level: f64) -> usize {
    let x = b as f64 * level;
    let k = (x - x.abs() * 4.0 * f64::EPSILON).ceil() as usize;
    k.clamp(1, b) - 1
}

/// One retained bootstrap replicate.
#[derive(Debug, Clone)]
pub struct Replicate {
    /// Replicate index `b` (0-based) before dropping.
    pub index: usize,
    /// Whether the first weight draw failed and this is the retry.
    pub retried: bool,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub lambda: f64,
    /// `ĝ*_b + M_λ ĝ*_b`.
    pub link: GridFunction,
    /// `𝔾*_b` on the grid.
    pub curve: Vec<f64>,
}

/// Replicates shared by all bootstrap procedures.
#[derive(Debug, Clone)]
pub struct BootstrapDraws {
    pub grid: Vec<f64>,
    /// `ĝ̃` on the grid.
    pub center: Vec<f64>,
    /// `√n λ̂^{1/(4m)}`.
    pub root_scale: f64,
    pub replicates: Vec<Replicate>,
    /// Replicates that failed twice.
    pub dropped: usize,
    pub requested: usize,
}

impl BootstrapDraws {
    /// `n^{−1/2} λ̂^{−1/(4m)}`, the factor turning a quantile into a half-width.
    pub fn scale(&self) -> f64 {
        1.0 / self.root_scale
    }

    /// `T̂*_b = max_s |𝔾*_b(s)|` for every retained replicate.
    pub fn sup_stats(&self) -> Vec<f64> {
        self.replicates.iter().map(|r| r.curve.iter().fold(0.0, |m: f64, v| m.max(v.abs()))).collect()
    }
}

/// `√n λ̂^{1/(4m)}` for a fit; errors when λ̂ is not positive.
pub fn root_scale(fit: &SingleIndexFit) -> Result<f64> {
    if !(fit.lambda > 0.0) || !fit.lambda.is_finite() {
        return Err(Error::InvalidInput(format!("bootstrap inference needs λ > 0, fit has {}", fit.lambda)));
    }
    Ok((fit.n as f64).sqrt() * fit.lambda.powf(1.0 / (4.0 * fit.config.m as f64)))
}

/// Draws the `B` weighted refits. Replicate `b` uses the stream
/// `(seed, b, attempt)`; a failed or non-converged refit is retried once with
/// a fresh draw and then dropped.
pub fn bootstrap_draws(data: &Dataset, fit: &SingleIndexFit, config: &BootstrapConfig) -> Result<BootstrapDraws> {
    config.validate()?;
    fit.check_data(data)?;
    let root = root_scale(fit)?;
    let grid = config.interval.unwrap_or(fit.index_range).linspace(config.grid_size);
    let g_hat = fit.link();
    let center: Vec<f64> = grid.iter().map(|&s| g_hat.value(s)).collect();

    let attempt = |b: usize, k: u64| -> Option<Replicate> {
        let mut rng = substream(config.seed, &[TAG_BOOT, b as u64, k]);
        let w = draw_multipliers(data.n(), &mut rng);
        let r = refit_warm(data, fit, &w, config.reuse_lambda).ok().filter(|f| f.converged)?;
        let link = r.link();
        let curve = grid.iter().zip(&center).map(|(&s, &c)| root * (link.value(s) - c)).collect();
        Some(Replicate { index: b, retried: k > 0, beta: r.beta, gamma: r.gamma, lambda: r.lambda, link, curve })
    };
    let results = map_indexed(config.b, config.threads, |b| attempt(b, 0).or_else(|| attempt(b, 1)));

    let requested = config.b;
    let replicates: Vec<Replicate> = results.into_iter().flatten().collect();
    let dropped = requested - replicates.len();
    if dropped as f64 > MAX_DROP_FRACTION * requested as f64 {
        return Err(Error::BootstrapInstability { dropped, total: requested });
    }
    Ok(BootstrapDraws { grid, center, root_scale: root, replicates, dropped, requested })
}

/// `ĝ̃(xᵀβ) + zᵀγ` with the index clamped to the fit's eigensystem interval.
pub(crate) fn plug_in(link: &GridFunction, fit: &SingleIndexFit, beta: &[f64], gamma: &[f64], x0: &[f64], z0: &[f64]) -> f64 {
    let s = dot(x0, beta).clamp(fit.interval.lo, fit.interval.hi);
    link.value(s) + dot(z0, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantile_examples() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(empirical_quantile(&v, 0.9).unwrap(), 9.0);
        assert_eq!(empirical_quantile(&v, 1.0 - 1e-12).unwrap(), 10.0);
        assert_eq!(empirical_quantile(&[2.5; 7], 0.3).unwrap(), 2.5);
        assert!(empirical_quantile(&[], 0.5).is_err());
    }

    fn brute_force(values: &[f64], level: f64) -> f64 {
        let mut cands = values.to_vec();
        cands.sort_by(|a, b| a.total_cmp(b));
        let b = values.len() as f64;
        *cands
            .iter()
            .find(|&&t| values.iter().filter(|&&v| v <= t).count() as f64 / b >= level)
            .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn quantile_matches_inf_definition(
            values in prop::collection::vec(-100.0f64..100.0, 1..60),
            level in 0.01f64..0.99,
        ) {
            prop_assert_eq!(empirical_quantile(&values, level).unwrap(), brute_force(&values, level));
        }
    }

    #[test]
    fn multipliers_take_two_values() {
        let mut rng = substream(3, &[1]);
        let w = draw_multipliers(10_000, &mut rng);
        assert!(w.as_slice().iter().all(|&v| v == W_LOW || v == W_HIGH));
        let low = w.as_slice().iter().filter(|&&v| v == W_LOW).count() as f64 / 1e4;
        assert!((low - 2.0 / 3.0).abs() < 0.02);
        assert!(((2.0 / 3.0) * W_LOW + W_HIGH / 3.0 - 1.0).abs() < 1e-15);
    }
}
