//! `sim-spline`: fit partially linear single-index models, build bootstrap
//! bands, run the relevant and joint tests, and reproduce the simulations.

mod error;
mod gstar;
mod input;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sim_spline::inference::{bootstrap_band, joint_test, relevant_sweep, relevant_test, BootstrapConfig};
use sim_spline::model::{fit, BetaDirection, FitConfig, LambdaChoice, NumEigen, SCHEMA};
use sim_spline::simulation::{
    g0_sup, run_coverage, run_joint, run_power_curve, run_risk, ErrorMode, ExperimentConfig, ExperimentReport,
};
use sim_spline::{json, Interval};

use crate::error::{CliError, CliResult};
use crate::gstar::GStar;
use crate::input::{parse_list, read_dataset, read_fit, read_text};

const CSV_HELP: &str = "Input CSV: UTF-8, comma separated, with a header row naming the columns \
`y`, `x1..xp` and optionally `z1..zq` in any order. Every cell must be a finite number.";

#[derive(Parser)]
#[command(name = "sim-spline", version, about = "Smoothing-spline single-index models with bootstrap inference", after_help = CSV_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model to a CSV and write the fit as JSON.
    Fit(FitArgs),
    /// Simultaneous confidence band for the link function.
    Band(BandArgs),
    /// Test whether the link stays within Δ of a reference function.
    TestRelevant(RelevantArgs),
    /// Test a hypothesis on the regression function at one point.
    TestJoint(JointArgs),
    /// Reproduce a Monte-Carlo experiment.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV.
    input: PathBuf,
    /// JSON file with a full fit configuration; the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Penalty order.
    #[arg(long)]
    m: Option<usize>,
    /// Fixed number of eigenfunctions; chosen by cross-validation when absent.
    #[arg(long)]
    num_eigen: Option<usize>,
    /// Fixed λ; chosen by GCV when absent.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Random directions scored by the initializer.
    #[arg(long)]
    init_directions: Option<usize>,
    /// Best initial directions the alternation is started from.
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long, value_enum)]
    beta_direction: Option<Direction>,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    Gradient,
    GaussNewton,
}

#[derive(Args)]
struct BootArgs {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Bootstrap replicates.
    #[arg(long = "B", default_value_t = 200)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Grid points over the index range.
    #[arg(long, default_value_t = 401)]
    grid_size: usize,
    /// Keep the fitted λ in every replicate.
    #[arg(long)]
    reuse_lambda: bool,
    /// Index range `lo:hi` for the grid; the observed range when absent.
    #[arg(long)]
    interval: Option<String>,
    /// Worker threads; every core when absent.
    #[arg(long, env = "SIM_SPLINE_THREADS")]
    threads: Option<usize>,
}

impl BootArgs {
    fn config(&self) -> CliResult<BootstrapConfig> {
        let interval = match &self.interval {
            Some(s) => {
                let (lo, hi) = s.split_once(':').ok_or_else(|| CliError::Usage("--interval must be lo:hi".into()))?;
                let v = parse_list(&format!("{lo},{hi}"), "--interval")?;
                Some(Interval::new(v[0], v[1])?)
            }
            None => None,
        };
        let cfg = BootstrapConfig {
            b: self.b,
            alpha: self.alpha,
            seed: self.seed,
            grid_size: self.grid_size,
            reuse_lambda: self.reuse_lambda,
            literal_tnb: false,
            interval,
            threads: self.threads,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct BandArgs {
    /// Fit JSON written by `fit`.
    fit: PathBuf,
    /// The CSV the fit was computed from.
    input: PathBuf,
    #[command(flatten)]
    boot: BootArgs,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("threshold").required(true).args(["delta", "sweep"]))]
struct RelevantArgs {
    fit: PathBuf,
    input: PathBuf,
    /// Reference function: `zero`, `poly:c0,c1,...` or `csv:path` (header `s,g`).
    #[arg(long, default_value = "zero")]
    gstar: String,
    /// Threshold Δ.
    #[arg(long)]
    delta: Option<f64>,
    /// Equispaced Δ values `lo:hi:steps`, all tested with one bootstrap pass.
    #[arg(long)]
    sweep: Option<String>,
    #[command(flatten)]
    boot: BootArgs,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct JointArgs {
    fit: PathBuf,
    input: PathBuf,
    /// Comma-separated x₀.
    #[arg(long, allow_hyphen_values = true)]
    x0: String,
    /// Comma-separated z₀; empty when the model has no linear part.
    #[arg(long, allow_hyphen_values = true, default_value = "")]
    z0: String,
    #[arg(long, allow_hyphen_values = true)]
    y0: f64,
    /// Compare replicates with y₀ instead of the fitted value.
    #[arg(long)]
    literal_tnb: bool,
    #[command(flatten)]
    boot: BootArgs,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Coverage,
    Power,
    Joint,
    Risk,
}

impl Experiment {
    fn name(self) -> &'static str {
        match self {
            Self::Coverage => "coverage",
            Self::Power => "power",
            Self::Joint => "joint",
            Self::Risk => "risk",
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    experiment: Experiment,
    /// Error settings (1, 2, 3).
    #[arg(long, value_delimiter = ',', default_value = "1")]
    setting: Vec<u32>,
    /// Sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "200")]
    n: Vec<usize>,
    /// Monte-Carlo replications per cell.
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long = "B", default_value_t = 200)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Levels; defaults to 0.05,0.10 (0.05 for power).
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Δ grid of the power experiment as `lo:hi:steps`; 0 to 1.5 sup|g₀| in 16 steps when absent.
    #[arg(long)]
    sweep: Option<String>,
    /// Hypothesized values of the joint experiment.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1,0")]
    y0: Vec<f64>,
    #[arg(long)]
    literal_tnb: bool,
    /// Keep the signed-Beta error of setting 3 uncentered.
    #[arg(long)]
    uncentered: bool,
    #[arg(long, env = "SIM_SPLINE_THREADS")]
    threads: Option<usize>,
    /// Directory receiving `<experiment>.json` and `<experiment>.csv`.
    #[arg(long)]
    out: PathBuf,
}

/// Result body tagged with the output schema.
#[derive(Serialize)]
struct Tagged<'a, T> {
    schema: &'static str,
    #[serde(flatten)]
    body: &'a T,
}

fn tagged<T: Serialize>(body: &T) -> CliResult<String> {
    let mut s = json::to_string_pretty(&Tagged { schema: SCHEMA, body })?;
    s.push('\n');
    Ok(s)
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    let res = match out {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    };
    res.map_err(|source| CliError::Io { path: out.map_or_else(|| "<stdout>".into(), Path::to_path_buf), source })
}

fn parse_sweep(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Usage(format!("sweep must be lo:hi:steps, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite()) || steps < 2 {
        return Err(bad());
    }
    if !(lo < hi) {
        return Err(CliError::Usage(format!("sweep bounds inverted: {lo} is not below {hi}")));
    }
    Ok(Interval::new(lo, hi)?.linspace(steps))
}

fn cmd_fit(a: &FitArgs) -> CliResult<()> {
    let data = read_dataset(&a.input)?;
    let mut cfg: FitConfig = match &a.config {
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| CliError::parse(p, e.line() as u64, e.to_string()))?,
        None => FitConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.m {
        cfg.m = v;
    }
    if let Some(v) = a.num_eigen {
        cfg.num_eigen = NumEigen::Fixed(v);
    }
    if let Some(v) = a.lambda {
        cfg.lambda = LambdaChoice::Fixed(v);
    }
    if let Some(v) = a.max_iter {
        cfg.max_outer_iter = v;
    }
    if let Some(v) = a.tol {
        cfg.tol = v;
    }
    if let Some(v) = a.init_directions {
        cfg.n_init_directions = v;
    }
    if let Some(v) = a.starts {
        cfg.n_starts = v;
    }
    if let Some(d) = a.beta_direction {
        cfg.beta_direction = match d {
            Direction::Gradient => BetaDirection::Gradient,
            Direction::GaussNewton => BetaDirection::GaussNewton,
        };
    }
    cfg.validate()?;

    let f = fit(&data, &cfg, None)?;
    let mut text = f.to_json()?;
    text.push('\n');
    emit(a.out.as_deref(), &text)?;
    eprintln!(
        "iterations {}  converged {}  lambda {}  gcv {}  v {}",
        f.iterations,
        f.converged,
        json::fmt_f64(f.lambda),
        json::fmt_f64(f.gcv),
        f.num_eigen
    );
    eprintln!("beta {}", f.beta.iter().map(|&b| json::fmt_f64(b)).collect::<Vec<_>>().join(" "));
    if f.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged(f.iterations))
    }
}

fn cmd_band(a: &BandArgs) -> CliResult<()> {
    let cfg = a.boot.config()?;
    let data = read_dataset(&a.input)?;
    let f = read_fit(&a.fit, &data)?;
    let band = bootstrap_band(&data, &f, &cfg)?;
    let text = match a.format {
        Format::Json => tagged(&band)?,
        Format::Csv => band.to_csv(),
    };
    emit(a.out.as_deref(), &text)?;
    eprintln!("quantile {}  half-width {}  dropped {}", band.quantile, band.quantile * band.scale, band.dropped);
    Ok(())
}

fn cmd_test_relevant(a: &RelevantArgs) -> CliResult<()> {
    let cfg = a.boot.config()?;
    let deltas = match (&a.sweep, a.delta) {
        (Some(s), _) => Some(parse_sweep(s)?),
        (None, Some(d)) if d >= 0.0 => None,
        (None, d) => return Err(CliError::Usage(format!("--delta must be nonnegative, got {d:?}"))),
    };
    let g = GStar::parse(&a.gstar)?;
    let data = read_dataset(&a.input)?;
    let f = read_fit(&a.fit, &data)?;
    g.check_covers(cfg.interval.unwrap_or(f.index_range))?;
    let g_star = |s: f64| g.eval(s);
    let res = match &deltas {
        Some(grid) => relevant_sweep(&data, &f, &cfg, &g_star, grid)?,
        None => relevant_test(&data, &f, &cfg, &g_star, a.delta.unwrap_or(0.0))?,
    };
    emit(a.out.as_deref(), &tagged(&res)?)?;
    match &res.sweep {
        Some(sw) => eprintln!("d_inf {}  delta_hat {:?}", res.d_inf_hat, sw.delta_hat),
        None => eprintln!("d_inf {}  reject {}", res.d_inf_hat, res.reject),
    }
    Ok(())
}

fn cmd_test_joint(a: &JointArgs) -> CliResult<()> {
    let mut cfg = a.boot.config()?;
    cfg.literal_tnb = a.literal_tnb;
    let x0 = parse_list(&a.x0, "--x0")?;
    let z0 = parse_list(&a.z0, "--z0")?;
    let data = read_dataset(&a.input)?;
    let f = read_fit(&a.fit, &data)?;
    let res = joint_test(&data, &f, &cfg, &x0, &z0, a.y0)?;
    emit(a.out.as_deref(), &tagged(&res)?)?;
    eprintln!("t_hat {}  critical {}  reject {}", res.t_hat, res.critical, res.reject);
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    if a.setting.is_empty() {
        return Err(CliError::Usage("--setting needs at least one value".into()));
    }
    let modes = a.setting.iter().map(|&k| ErrorMode::from_setting(k)).collect::<Result<Vec<_>, _>>()?;
    let cfg = ExperimentConfig {
        master_seed: a.seed,
        mc_reps: a.reps,
        b: a.b,
        center_signed_beta: !a.uncentered,
        literal_tnb: a.literal_tnb,
        threads: a.threads,
        ..ExperimentConfig::default()
    };
    if cfg.threads == Some(0) {
        return Err(CliError::Usage("--threads must be positive".into()));
    }
    let alphas = |default: &[f64]| if a.alpha.is_empty() { default.to_vec() } else { a.alpha.clone() };

    let report = match a.experiment {
        Experiment::Coverage => run_coverage(&modes, &a.n, &alphas(&[0.05, 0.10]), &cfg)?,
        Experiment::Risk => run_risk(&modes, &a.n, &cfg)?,
        Experiment::Power => {
            let grid = match &a.sweep {
                Some(s) => parse_sweep(s)?,
                None => Interval::new(0.0, 1.5 * g0_sup())?.linspace(16),
            };
            let alpha = alphas(&[0.05]);
            if alpha.len() != 1 {
                return Err(CliError::Usage("the power experiment takes a single --alpha".into()));
            }
            merge(modes.iter().map(|&m| run_power_curve(m, &a.n, &grid, alpha[0], &cfg)))?
        }
        Experiment::Joint => {
            let alpha = alphas(&[0.05, 0.10]);
            merge(modes.iter().map(|&m| run_joint(m, &a.n, &a.y0, &alpha, &cfg)))?
        }
    };

    std::fs::create_dir_all(&a.out).map_err(|source| CliError::Io { path: a.out.clone(), source })?;
    let name = a.experiment.name();
    let mut text = report.to_json()?;
    text.push('\n');
    emit(Some(&a.out.join(format!("{name}.json"))), &text)?;
    emit(Some(&a.out.join(format!("{name}.csv"))), &report.to_csv())?;
    Ok(())
}

/// Concatenates the cells of per-setting reports into the first one.
fn merge(reports: impl Iterator<Item = sim_spline::Result<ExperimentReport>>) -> CliResult<ExperimentReport> {
    let mut out: Option<ExperimentReport> = None;
    for r in reports {
        let r = r?;
        match &mut out {
            Some(o) => {
                o.cells.extend(r.cells);
                if let (Some(a), Some(b)) = (
                    o.config.get_mut("settings").and_then(|v| v.as_array_mut()),
                    r.config.get("settings").and_then(|v| v.as_array()),
                ) {
                    a.extend(b.iter().cloned());
                }
            }
            None => out = Some(r),
        }
    }
    out.ok_or_else(|| CliError::Usage("no settings given".into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let start = Instant::now();
    let res = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Band(a) => cmd_band(a),
        Command::TestRelevant(a) => cmd_test_relevant(a),
        Command::TestJoint(a) => cmd_test_joint(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    eprintln!("wall time {:.3} s", start.elapsed().as_secs_f64());
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_parsing() {
        assert_eq!(parse_sweep("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        let err = parse_sweep("1:0:3").unwrap_err().to_string();
        assert!(err.contains("inverted"), "{err}");
        assert!(parse_sweep("0:1").is_err());
        assert!(parse_sweep("0:1:1").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
