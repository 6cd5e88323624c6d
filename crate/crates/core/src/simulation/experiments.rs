//! Monte-Carlo experiments: band coverage, relevant-test power, joint-test
//! rejection rates and L²-risk.
//!
//! Replication `r` of a cell draws its data, fit and bootstrap streams from
//! the key `(master, experiment, setting, n, r)`, so changing the number of
//! replications never changes earlier ones and results do not depend on
//! the thread count.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::data::{g0, gen_dataset, support, truth, ErrorMode, SimSetting};
use crate::error::{Error, Result};
use crate::inference::{
    band_duality_test, band_from_draws, bootstrap_draws, joint_from_draws, relevant_from_draws, BootstrapConfig,
};
use crate::json::fmt_f64;
use crate::model::{fit, l2_risk, FitConfig};
use crate::parallel::map_indexed;
use crate::rng::{derive_seed, TAG_BOOT, TAG_FIT};

pub const EXP_COVERAGE: u64 = 1;
pub const EXP_POWER: u64 = 2;
pub const EXP_JOINT: u64 = 3;
pub const EXP_RISK: u64 = 4;

/// Point of the joint hypothesis `g₀(x₀ᵀβ₀) + z₀ᵀγ₀ = y₀` in the design.
pub const JOINT_X0: [f64; 6] = [0.0, 0.0, 1.0, 0.0, 1.0, 1.0];
pub const JOINT_Z0: [f64; 1] = [1.0];

/// Settings shared by every experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub mc_reps: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub grid_size: usize,
    pub center_signed_beta: bool,
    pub literal_tnb: bool,
    pub fit: FitConfig,
    /// Worker threads over replications; `None` uses every core.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            mc_reps: 100,
            b: 200,
            grid_size: 401,
            center_signed_beta: true,
            literal_tnb: false,
            fit: FitConfig::default(),
            threads: None,
        }
    }
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.mc_reps == 0 {
            return Err(Error::InvalidInput("mc_reps must be positive".into()));
        }
        self.fit.validate()?;
        self.boot(0, 0.05).validate()
    }

    fn boot(&self, seed: u64, alpha: f64) -> BootstrapConfig {
        BootstrapConfig {
            b: self.b,
            alpha,
            seed,
            grid_size: self.grid_size,
            reuse_lambda: false,
            literal_tnb: self.literal_tnb,
            interval: Some(support()),
            threads: Some(1),
        }
    }
}

/// Seeds of one replication.
#[derive(Debug, Clone, Copy)]
struct RepSeeds {
    data: u64,
    fit: u64,
    boot: u64,
}

fn rep_seeds(master: u64, experiment: u64, mode: ErrorMode, n: usize, r: usize) -> RepSeeds {
    let data = derive_seed(master, &[experiment, mode.setting() as u64, n as u64, r as u64]);
    RepSeeds { data, fit: derive_seed(data, &[TAG_FIT]), boot: derive_seed(data, &[TAG_BOOT]) }
}

/// Minimum, quartiles and maximum (linear interpolation between order statistics).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        let q = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let i = h.floor() as usize;
            let t = h - i as f64;
            if i + 1 < v.len() {
                v[i] + t * (v[i + 1] - v[i])
            } else {
                v[i]
            }
        };
        Some(Self { min: v[0], q1: q(0.25), median: q(0.5), q3: q(0.75), max: v[v.len() - 1] })
    }
}

/// One row of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub setting: u32,
    pub n: usize,
    /// `coverage`, `relevant`, `duality`, `joint` or `risk`.
    pub statistic: String,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub y0: Option<f64>,
    /// Replications that completed.
    pub reps: usize,
    /// Replications whose fit or bootstrap failed.
    pub failures: usize,
    pub count: Option<usize>,
    pub rate: Option<f64>,
    /// Binomial standard error `√(p̂(1 − p̂)/reps)`.
    pub se: Option<f64>,
    pub summary: Option<FiveNumber>,
}

impl Cell {
    fn base(mode: ErrorMode, n: usize, statistic: &str, reps: usize, failures: usize) -> Self {
        Self {
            setting: mode.setting(),
            n,
            statistic: statistic.into(),
            alpha: None,
            delta: None,
            y0: None,
            reps,
            failures,
            count: None,
            rate: None,
            se: None,
            summary: None,
        }
    }

    fn with_count(mut self, count: usize) -> Self {
        self.count = Some(count);
        if self.reps > 0 {
            let p = count as f64 / self.reps as f64;
            self.rate = Some(p);
            self.se = Some((p * (1.0 - p) / self.reps as f64).sqrt());
        }
        self
    }
}

/// Result table of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub name: String,
    pub mc_reps: usize,
    /// Echo of the experiment inputs.
    pub config: serde_json::Value,
    pub cells: Vec<Cell>,
}

impl ExperimentReport {
    fn new(name: &str, cfg: &ExperimentConfig, extra: serde_json::Value) -> Result<Self> {
        let mut config = serde_json::to_value(cfg)?;
        if let (Some(obj), serde_json::Value::Object(more)) = (config.as_object_mut(), extra) {
            obj.extend(more);
        }
        Ok(Self { schema: crate::model::SCHEMA.into(), name: name.into(), mc_reps: cfg.mc_reps, config, cells: Vec::new() })
    }

    /// Cells with the given statistic name.
    pub fn cells_named<'a>(&'a self, statistic: &'a str) -> impl Iterator<Item = &'a Cell> + 'a {
        self.cells.iter().filter(move |c| c.statistic == statistic)
    }

    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string_pretty(self)
    }

    /// One line per cell; empty fields where a column does not apply.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let mut out = String::from("setting,n,statistic,alpha,delta,y0,reps,failures,count,rate,se,min,q1,median,q3,max\n");
        for c in &self.cells {
            let s = c.summary;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                c.setting,
                c.n,
                c.statistic,
                opt(c.alpha),
                opt(c.delta),
                opt(c.y0),
                c.reps,
                c.failures,
                c.count.map(|k| k.to_string()).unwrap_or_default(),
                opt(c.rate),
                opt(c.se),
                opt(s.map(|s| s.min)),
                opt(s.map(|s| s.q1)),
                opt(s.map(|s| s.median)),
                opt(s.map(|s| s.q3)),
                opt(s.map(|s| s.max)),
            ));
        }
        out
    }
}

/// Runs `body` for every replication of one cell and splits off failures.
fn run_reps<T: Send>(
    cfg: &ExperimentConfig,
    experiment: u64,
    mode: ErrorMode,
    n: usize,
    body: impl Fn(RepSeeds) -> Result<T> + Sync + Send,
) -> (Vec<T>, usize) {
    let out = map_indexed(cfg.mc_reps, cfg.threads, |r| body(rep_seeds(cfg.master_seed, experiment, mode, n, r)));
    let total = out.len();
    let ok: Vec<T> = out.into_iter().filter_map(|r| r.ok()).collect();
    let failures = total - ok.len();
    (ok, failures)
}

fn simulate_and_fit(
    cfg: &ExperimentConfig,
    mode: ErrorMode,
    n: usize,
    seeds: RepSeeds,
) -> Result<(crate::model::Dataset, crate::model::SingleIndexFit)> {
    let mut setting = SimSetting::new(n, mode, seeds.data)?;
    setting.center_signed_beta = cfg.center_signed_beta;
    let (data, _) = gen_dataset(&setting)?;
    let fc = FitConfig { seed: seeds.fit, ..cfg.fit.clone() };
    let f = fit(&data, &fc, None)?;
    Ok((data, f))
}

fn check_levels(alpha_list: &[f64]) -> Result<()> {
    if alpha_list.is_empty() || alpha_list.iter().any(|&a| !(a > 0.0 && a < 0.5)) {
        return Err(Error::InvalidInput("alpha list must be nonempty with entries in (0, 0.5)".into()));
    }
    Ok(())
}

fn check_sizes(n_list: &[usize]) -> Result<()> {
    if n_list.is_empty() || n_list.iter().any(|&n| n < 50) {
        return Err(Error::InvalidInput("n list must be nonempty with n >= 50".into()));
    }
    Ok(())
}

/// Rate at which the simultaneous band covers `g₀` on the support, per
/// setting, `n` and `α`. All levels of one replication share its draws.
pub fn run_coverage(
    modes: &[ErrorMode],
    n_list: &[usize],
    alpha_list: &[f64],
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    check_sizes(n_list)?;
    check_levels(alpha_list)?;
    let mut report = ExperimentReport::new(
        "coverage",
        cfg,
        json!({ "settings": modes.iter().map(|m| m.setting()).collect::<Vec<_>>(), "n": n_list, "alpha": alpha_list }),
    )?;
    for &mode in modes {
        for &n in n_list {
            let (hits, failures) = run_reps(cfg, EXP_COVERAGE, mode, n, |seeds| {
                let (data, f) = simulate_and_fit(cfg, mode, n, seeds)?;
                let draws = bootstrap_draws(&data, &f, &cfg.boot(seeds.boot, alpha_list[0]))?;
                alpha_list.iter().map(|&a| Ok(band_from_draws(&draws, a)?.covers(g0))).collect::<Result<Vec<bool>>>()
            });
            for (k, &alpha) in alpha_list.iter().enumerate() {
                let count = hits.iter().filter(|h| h[k]).count();
                let mut cell = Cell::base(mode, n, "coverage", hits.len(), failures).with_count(count);
                cell.alpha = Some(alpha);
                report.cells.push(cell);
            }
        }
    }
    Ok(report)
}

/// Rejection rates of the relevant test and of the band-duality test with
/// `g_* ≡ 0` over a grid of thresholds, sharing replicates between the two.
pub fn run_power_curve(
    mode: ErrorMode,
    n_list: &[usize],
    delta_grid: &[f64],
    alpha: f64,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    check_sizes(n_list)?;
    check_levels(&[alpha])?;
    if delta_grid.is_empty() || delta_grid.iter().any(|&d| !(d >= 0.0)) {
        return Err(Error::InvalidInput("Δ grid must be nonempty and nonnegative".into()));
    }
    let mut report = ExperimentReport::new(
        "power",
        cfg,
        json!({ "settings": [mode.setting()], "n": n_list, "delta": delta_grid, "alpha": alpha,
                "g0_sup": super::data::g0_sup() }),
    )?;
    let zero = |_: f64| 0.0;
    for &n in n_list {
        let (decisions, failures) = run_reps(cfg, EXP_POWER, mode, n, |seeds| {
            let (data, f) = simulate_and_fit(cfg, mode, n, seeds)?;
            let draws = bootstrap_draws(&data, &f, &cfg.boot(seeds.boot, alpha))?;
            let band = band_from_draws(&draws, alpha)?;
            let base = relevant_from_draws(f.n, &draws, alpha, &zero, delta_grid[0])?;
            let threshold = base.scale * base.critical;
            Ok(delta_grid
                .iter()
                .map(|&d| (base.d_inf_hat > d + threshold, band_duality_test(&band, &zero, d)))
                .collect::<Vec<(bool, bool)>>())
        });
        for (stat, pick) in [("relevant", 0usize), ("duality", 1)] {
            for (k, &delta) in delta_grid.iter().enumerate() {
                let count = decisions.iter().filter(|d| if pick == 0 { d[k].0 } else { d[k].1 }).count();
                let mut cell = Cell::base(mode, n, stat, decisions.len(), failures).with_count(count);
                cell.alpha = Some(alpha);
                cell.delta = Some(delta);
                report.cells.push(cell);
            }
        }
    }
    Ok(report)
}

/// Rejection rates of the joint test at the design point for each `y₀` and `α`.
pub fn run_joint(
    mode: ErrorMode,
    n_list: &[usize],
    y0_list: &[f64],
    alpha_list: &[f64],
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    check_sizes(n_list)?;
    check_levels(alpha_list)?;
    if y0_list.is_empty() || y0_list.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidInput("y0 list must be nonempty and finite".into()));
    }
    let mut report = ExperimentReport::new(
        "joint",
        cfg,
        json!({ "settings": [mode.setting()], "n": n_list, "y0": y0_list, "alpha": alpha_list,
                "x0": JOINT_X0, "z0": JOINT_Z0 }),
    )?;
    for &n in n_list {
        let (decisions, failures) = run_reps(cfg, EXP_JOINT, mode, n, |seeds| {
            let (data, f) = simulate_and_fit(cfg, mode, n, seeds)?;
            let draws = bootstrap_draws(&data, &f, &cfg.boot(seeds.boot, alpha_list[0]))?;
            let mut out = Vec::with_capacity(y0_list.len() * alpha_list.len());
            for &y0 in y0_list {
                for &a in alpha_list {
                    out.push(joint_from_draws(&f, &draws, a, &JOINT_X0, &JOINT_Z0, y0, cfg.literal_tnb)?.reject);
                }
            }
            Ok(out)
        });
        for (i, &y0) in y0_list.iter().enumerate() {
            for (j, &alpha) in alpha_list.iter().enumerate() {
                let k = i * alpha_list.len() + j;
                let count = decisions.iter().filter(|d| d[k]).count();
                let mut cell = Cell::base(mode, n, "joint", decisions.len(), failures).with_count(count);
                cell.alpha = Some(alpha);
                cell.y0 = Some(y0);
                report.cells.push(cell);
            }
        }
    }
    Ok(report)
}

/// Five-number summaries of the L²-risk per setting and `n`.
pub fn run_risk(modes: &[ErrorMode], n_list: &[usize], cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.fit.validate()?;
    if cfg.mc_reps == 0 {
        return Err(Error::InvalidInput("mc_reps must be positive".into()));
    }
    check_sizes(n_list)?;
    let mut report = ExperimentReport::new(
        "risk",
        cfg,
        json!({ "settings": modes.iter().map(|m| m.setting()).collect::<Vec<_>>(), "n": n_list }),
    )?;
    let t = truth();
    for &mode in modes {
        for &n in n_list {
            let (risks, failures) = run_reps(cfg, EXP_RISK, mode, n, |seeds| {
                let (_, f) = simulate_and_fit(cfg, mode, n, seeds)?;
                Ok(l2_risk(&f, &t))
            });
            let mut cell = Cell::base(mode, n, "risk", risks.len(), failures);
            cell.summary = FiveNumber::of(&risks);
            report.cells.push(cell);
        }
    }
    Ok(report)
}
