//! Reference functions `g_*` for the relevant test.

use std::path::Path;

use sim_spline::Interval;

use crate::error::{CliError, CliResult};
use crate::input::{parse_list, read_text};

#[derive(Debug, Clone, PartialEq)]
pub enum GStar {
    Zero,
    /// Coefficients `c₀, c₁, …` of `Σ cₖ sᵏ`.
    Poly(Vec<f64>),
    /// Knots `(s, g)` with strictly increasing `s`, linearly interpolated.
    Table(Vec<(f64, f64)>),
}

impl GStar {
    /// Parses `zero`, `poly:c0,c1,...` or `csv:path`.
    pub fn parse(spec: &str) -> CliResult<Self> {
        if spec == "zero" {
            return Ok(Self::Zero);
        }
        if let Some(coef) = spec.strip_prefix("poly:") {
            let c = parse_list(coef, "--gstar poly")?;
            if c.is_empty() {
                return Err(CliError::Usage("--gstar poly needs at least one coefficient".into()));
            }
            return Ok(Self::Poly(c));
        }
        if let Some(path) = spec.strip_prefix("csv:") {
            return read_table(Path::new(path)).map(Self::Table);
        }
        Err(CliError::Usage(format!("--gstar must be `zero`, `poly:c0,c1,...` or `csv:path`, got `{spec}`")))
    }

    /// Errors unless a table spans `range`.
    pub fn check_covers(&self, range: Interval) -> CliResult<()> {
        if let Self::Table(t) = self {
            let (lo, hi) = (t[0].0, t[t.len() - 1].0);
            if lo > range.lo || hi < range.hi {
                return Err(CliError::Usage(format!(
                    "g_* table spans [{lo}, {hi}] but the test needs [{}, {}]",
                    range.lo, range.hi
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Poly(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * s + ck),
            Self::Table(t) => {
                let k = t.partition_point(|&(x, _)| x <= s).clamp(1, t.len() - 1);
                let ((x0, y0), (x1, y1)) = (t[k - 1], t[k]);
                y0 + (y1 - y0) * (s - x0) / (x1 - x0)
            }
        }
    }
}

/// Two-column CSV with header `s,g`.
fn read_table(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.split(',').map(str::trim).eq(["s", "g"]) => {}
        _ => return Err(CliError::parse(path, 1, "g_* table needs the header `s,g`")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let vals = parse_list(line, "g_* table").map_err(|e| CliError::parse(path, i as u64 + 1, e.to_string()))?;
        if vals.len() != 2 {
            return Err(CliError::parse(path, i as u64 + 1, "expected two cells"));
        }
        if rows.last().is_some_and(|&(s, _)| s >= vals[0]) {
            return Err(CliError::parse(path, i as u64 + 1, "s must be strictly increasing"));
        }
        rows.push((vals[0], vals[1]));
    }
    if rows.len() < 2 {
        return Err(CliError::parse(path, 1, "g_* table needs at least two rows"));
    }
    Ok(rows)
}
