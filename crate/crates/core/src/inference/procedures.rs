//! Bands, pointwise intervals and tests built from [`BootstrapDraws`].

use serde::{Deserialize, Serialize};

use super::{bootstrap_draws, check_alpha, empirical_quantile, plug_in, BootstrapConfig, BootstrapDraws};
use crate::error::{Error, Result};
use crate::json::fmt_f64;
use crate::model::{Dataset, SingleIndexFit};

/// Simultaneous confidence band on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandResult {
    pub grid: Vec<f64>,
    pub center: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Empirical `1 − α` quantile of `max_s |𝔾*_b(s)|`.
    pub quantile: f64,
    /// `n^{−1/2} λ̂^{−1/(4m)}`.
    pub scale: f64,
    pub alpha: f64,
    /// Retained replicates.
    #[serde(rename = "B")]
    pub b: usize,
    pub dropped: usize,
}

impl BandResult {
    /// Whether `g(s)` lies in the band at every grid point.
    pub fn covers(&self, g: impl Fn(f64) -> f64) -> bool {
        self.grid.iter().enumerate().all(|(i, &s)| {
            let v = g(s);
            v >= self.lower[i] && v <= self.upper[i]
        })
    }

    /// Columns `s, center, lower, upper`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,center,lower,upper\n");
        for i in 0..self.grid.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(self.grid[i]),
                fmt_f64(self.center[i]),
                fmt_f64(self.lower[i]),
                fmt_f64(self.upper[i])
            ));
        }
        out
    }
}

/// Decisions of one bootstrap pass over a list of thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    /// `(Δ, reject)` in ascending Δ.
    pub decisions: Vec<(f64, bool)>,
    /// Smallest Δ of the list that is not rejected.
    pub delta_hat: Option<f64>,
    /// `max(0, d̂∞ − scale·critical)`, the same threshold without grid rounding.
    pub delta_hat_exact: f64,
}

/// Outcome of the relevant-hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevantTestResult {
    pub d_inf_hat: f64,
    pub delta: f64,
    /// Empirical `1 − α` quantile of the extremal-set statistic.
    pub critical: f64,
    pub scale: f64,
    pub reject: bool,
    /// Grid indices of the estimated upper and lower extremal sets.
    pub e_plus: Vec<usize>,
    pub e_minus: Vec<usize>,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub sweep: Option<Sweep>,
}

/// Outcome of the joint test of `g₀(x₀ᵀβ₀) + z₀ᵀγ₀ = y₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTestResult {
    pub t_hat: f64,
    /// Empirical `1 − α/2` quantile of the replicate statistics.
    pub critical: f64,
    pub reject: bool,
    pub alpha: f64,
    pub literal_tnb: bool,
    #[serde(rename = "B")]
    pub b: usize,
}

/// Band `ĝ̃ ± scale·𝒬_{1−α}(T̂*)`.
pub fn bootstrap_band(data: &Dataset, fit: &SingleIndexFit, config: &BootstrapConfig) -> Result<BandResult> {
    let draws = bootstrap_draws(data, fit, config)?;
    band_from_draws(&draws, config.alpha)
}

pub fn band_from_draws(draws: &BootstrapDraws, alpha: f64) -> Result<BandResult> {
    check_alpha(alpha)?;
    let quantile = empirical_quantile(&draws.sup_stats(), 1.0 - alpha)?;
    let scale = draws.scale();
    let half = scale * quantile;
    Ok(BandResult {
        grid: draws.grid.clone(),
        center: draws.center.clone(),
        lower: draws.center.iter().map(|c| c - half).collect(),
        upper: draws.center.iter().map(|c| c + half).collect(),
        quantile,
        scale,
        alpha,
        b: draws.replicates.len(),
        dropped: draws.dropped,
    })
}

/// Pointwise interval at `s`, `ĝ̃(s) ± scale·𝒬_{1−α}{|𝔾*_b(s)|}`.
pub fn pointwise_interval(data: &Dataset, fit: &SingleIndexFit, config: &BootstrapConfig, s: f64) -> Result<(f64, f64)> {
    let draws = bootstrap_draws(data, fit, config)?;
    pointwise_from_draws(fit, &draws, config.alpha, s)
}

pub fn pointwise_from_draws(fit: &SingleIndexFit, draws: &BootstrapDraws, alpha: f64, s: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if !s.is_finite() {
        return Err(Error::InvalidInput("evaluation point must be finite".into()));
    }
    let center = fit.link().value(s);
    let dev: Vec<f64> = draws
        .replicates
        .iter()
        .map(|r| (draws.root_scale * (r.link.value(s) - center)).abs())
        .collect();
    let half = draws.scale() * empirical_quantile(&dev, 1.0 - alpha)?;
    Ok((center - half, center + half))
}

/// Tests `H₀: sup |g₀ − g_*| ≤ Δ` over the observed index range.
pub fn relevant_test(
    data: &Dataset,
    fit: &SingleIndexFit,
    config: &BootstrapConfig,
    g_star: &dyn Fn(f64) -> f64,
    delta: f64,
) -> Result<RelevantTestResult> {
    check_delta(delta)?;
    let draws = bootstrap_draws(data, fit, config)?;
    relevant_from_draws(fit.n, &draws, config.alpha, g_star, delta)
}

/// [`relevant_test`] at every Δ of an ascending list with one bootstrap pass.
/// The headline decision is the one at the first Δ.
pub fn relevant_sweep(
    data: &Dataset,
    fit: &SingleIndexFit,
    config: &BootstrapConfig,
    g_star: &dyn Fn(f64) -> f64,
    delta_grid: &[f64],
) -> Result<RelevantTestResult> {
    if delta_grid.is_empty() {
        return Err(Error::InvalidInput("empty Δ grid".into()));
    }
    if delta_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("Δ grid must be strictly ascending".into()));
    }
    delta_grid.iter().try_for_each(|&d| check_delta(d))?;
    let draws = bootstrap_draws(data, fit, config)?;
    let mut res = relevant_from_draws(fit.n, &draws, config.alpha, g_star, delta_grid[0])?;
    res.sweep = Some(sweep_decisions(&res, delta_grid));
    Ok(res)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidInput(format!("Δ must be nonnegative, got {delta}")));
    }
    Ok(())
}

/// Applies the rejection rule of `res` to every Δ in `delta_grid`.
pub fn sweep_decisions(res: &RelevantTestResult, delta_grid: &[f64]) -> Sweep {
    let threshold = res.scale * res.critical;
    let decisions: Vec<(f64, bool)> = delta_grid.iter().map(|&d| (d, res.d_inf_hat > d + threshold)).collect();
    Sweep {
        delta_hat: decisions.iter().find(|(_, r)| !r).map(|(d, _)| *d),
        delta_hat_exact: (res.d_inf_hat - threshold).max(0.0),
        decisions,
    }
}

pub fn relevant_from_draws(
    n: usize,
    draws: &BootstrapDraws,
    alpha: f64,
    g_star: &dyn Fn(f64) -> f64,
    delta: f64,
) -> Result<RelevantTestResult> {
    check_alpha(alpha)?;
    check_delta(delta)?;
    let diff: Vec<f64> = draws.grid.iter().zip(&draws.center).map(|(&s, &c)| c - g_star(s)).collect();
    if diff.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidInput("g_* is not finite on the grid".into()));
    }
    let d_inf_hat = diff.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let (e_plus, e_minus): (Vec<usize>, Vec<usize>) = if d_inf_hat == 0.0 {
        ((0..diff.len()).collect(), (0..diff.len()).collect())
    } else {
        let cut = (1.0 - 1.0 / (n as f64).sqrt()) * d_inf_hat;
        (
            (0..diff.len()).filter(|&i| diff[i] >= cut).collect(),
            (0..diff.len()).filter(|&i| -diff[i] >= cut).collect(),
        )
    };
    let stats: Vec<f64> = draws
        .replicates
        .iter()
        .map(|r| {
            let up = e_plus.iter().map(|&i| r.curve[i]).fold(f64::NEG_INFINITY, f64::max);
            let down = e_minus.iter().map(|&i| -r.curve[i]).fold(f64::NEG_INFINITY, f64::max);
            up.max(down)
        })
        .collect();
    let critical = empirical_quantile(&stats, 1.0 - alpha)?;
    let scale = draws.scale();
    Ok(RelevantTestResult {
        d_inf_hat,
        delta,
        critical,
        scale,
        reject: d_inf_hat > delta + scale * critical,
        e_plus,
        e_minus,
        alpha,
        b: draws.replicates.len(),
        sweep: None,
    })
}

/// Test through the band: rejects when no function of the band stays within
/// Δ of `g_*`, that is when `[lower, upper]` and `[g_* − Δ, g_* + Δ]` are
/// disjoint at some grid point.
pub fn band_duality_test(band: &BandResult, g_star: &dyn Fn(f64) -> f64, delta: f64) -> bool {
    band.grid.iter().enumerate().any(|(i, &s)| {
        let g = g_star(s);
        band.lower[i] > g + delta || band.upper[i] < g - delta
    })
}

/// Tests `g₀(x₀ᵀβ₀) + z₀ᵀγ₀ = y₀`.
pub fn joint_test(
    data: &Dataset,
    fit: &SingleIndexFit,
    config: &BootstrapConfig,
    x0: &[f64],
    z0: &[f64],
    y0: f64,
) -> Result<JointTestResult> {
    check_point(fit, x0, z0, y0)?;
    let draws = bootstrap_draws(data, fit, config)?;
    joint_from_draws(fit, &draws, config.alpha, x0, z0, y0, config.literal_tnb)
}

fn check_point(fit: &SingleIndexFit, x0: &[f64], z0: &[f64], y0: f64) -> Result<()> {
    if x0.len() != fit.p || z0.len() != fit.q {
        return Err(Error::InvalidInput(format!(
            "x0 must have {} entries and z0 {}, got {} and {}",
            fit.p,
            fit.q,
            x0.len(),
            z0.len()
        )));
    }
    if !y0.is_finite() || x0.iter().chain(z0).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("x0, z0 and y0 must be finite".into()));
    }
    Ok(())
}

pub fn joint_from_draws(
    fit: &SingleIndexFit,
    draws: &BootstrapDraws,
    alpha: f64,
    x0: &[f64],
    z0: &[f64],
    y0: f64,
    literal_tnb: bool,
) -> Result<JointTestResult> {
    check_alpha(alpha)?;
    check_point(fit, x0, z0, y0)?;
    let main = plug_in(&fit.link(), fit, &fit.beta, &fit.gamma, x0, z0);
    let t_hat = draws.root_scale * (main - y0);
    let reference = if literal_tnb { y0 } else { main };
    let stats: Vec<f64> = draws
        .replicates
        .iter()
        .map(|r| draws.root_scale * (plug_in(&r.link, fit, &r.beta, &r.gamma, x0, z0) - reference))
        .collect();
    let critical = empirical_quantile(&stats, 1.0 - alpha / 2.0)?;
    Ok(JointTestResult {
        t_hat,
        critical,
        reject: t_hat.abs() > critical,
        alpha,
        literal_tnb,
        b: draws.replicates.len(),
    })
}
