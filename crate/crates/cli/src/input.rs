//! CSV ingestion.
//!
//! The header names the columns: `y`, then `x1..xp` and optionally `z1..zq`,
//! in any order. Every cell must hold a finite number.

use std::path::Path;

use sim_spline::model::{Dataset, SingleIndexFit};

use crate::error::{CliError, CliResult};

enum Role {
    Y,
    X(usize),
    Z(usize),
}

fn role(name: &str) -> Option<Role> {
    let numbered = |rest: &str| rest.parse::<usize>().ok().filter(|&k| k >= 1 && !rest.starts_with('0'));
    match name {
        "y" => Some(Role::Y),
        _ if name.starts_with('x') => numbered(&name[1..]).map(|k| Role::X(k - 1)),
        _ if name.starts_with('z') => numbered(&name[1..]).map(|k| Role::Z(k - 1)),
        _ => None,
    }
}

/// Reads a dataset from a CSV file.
pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();

    let mut roles = Vec::with_capacity(headers.len());
    let (mut y_col, mut p, mut q) = (None, 0, 0);
    for (c, name) in headers.iter().enumerate() {
        let r = role(name).ok_or_else(|| CliError::parse(path, 1, format!("unknown column `{name}`")))?;
        match r {
            Role::Y if y_col.is_some() => return Err(CliError::parse(path, 1, "duplicate column `y`")),
            Role::Y => y_col = Some(c),
            Role::X(k) => p = p.max(k + 1),
            Role::Z(k) => q = q.max(k + 1),
        }
        roles.push(r);
    }
    if y_col.is_none() {
        return Err(CliError::parse(path, 1, "missing column `y`"));
    }
    for (prefix, count) in [("x", p), ("z", q)] {
        for k in 1..=count {
            let name = format!("{prefix}{k}");
            let hits = headers.iter().filter(|h| *h == name).count();
            if hits != 1 {
                let what = if hits == 0 { "missing" } else { "duplicate" };
                return Err(CliError::parse(path, 1, format!("{what} column `{name}`")));
            }
        }
    }
    if p == 0 {
        return Err(CliError::parse(path, 1, "missing column `x1`"));
    }

    let (mut y, mut x, mut z) = (Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.len() != headers.len() {
            return Err(CliError::parse(path, line, format!("expected {} cells, found {}", headers.len(), record.len())));
        }
        let (mut yi, mut xi, mut zi) = (0.0, vec![0.0; p], vec![0.0; q]);
        for ((cell, r), name) in record.iter().zip(&roles).zip(headers.iter()) {
            if cell.is_empty() {
                return Err(CliError::parse(path, line, format!("empty cell in column `{name}`")));
            }
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| CliError::parse(path, line, format!("column `{name}`: `{cell}` is not a finite number")))?;
            match *r {
                Role::Y => yi = v,
                Role::X(k) => xi[k] = v,
                Role::Z(k) => zi[k] = v,
            }
        }
        y.push(yi);
        x.push(xi);
        z.push(zi);
    }
    if q == 0 {
        z.clear();
    }
    Ok(Dataset::new(y, x, z)?)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io { path: path.to_path_buf(), source },
        kind => CliError::parse(path, line, format!("{kind:?}")),
    }
}

/// Reads a fit written by `fit` and checks it against the data.
pub fn read_fit(path: &Path, data: &Dataset) -> CliResult<SingleIndexFit> {
    let text = read_text(path)?;
    let fit = SingleIndexFit::from_json(&text)?;
    fit.check_data(data)?;
    Ok(fit)
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Comma-separated list of numbers; the empty string is the empty list.
pub fn parse_list(s: &str, what: &str) -> CliResult<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Usage(format!("{what}: `{t}` is not a finite number")))
        })
        .collect()
}
