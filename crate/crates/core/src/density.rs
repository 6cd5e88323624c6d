//! Kernel density estimate of the index distribution on a fixed grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Smallest interval holding all values, widened by `frac` of its width on each side.
    pub fn covering(values: &[f64], frac: f64) -> Result<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !(hi > lo) {
            return Err(Error::DegenerateSample);
        }
        let pad = frac * (hi - lo);
        Self::new(lo - pad, hi + pad)
    }

    /// `points` equally spaced nodes including both endpoints.
    pub fn linspace(&self, points: usize) -> Vec<f64> {
        match points {
            0 => vec![],
            1 => vec![0.5 * (self.lo + self.hi)],
            _ => {
                let h = self.width() / (points - 1) as f64;
                let mut g: Vec<f64> = (0..points).map(|i| self.lo + h * i as f64).collect();
                g[points - 1] = self.hi;
                g
            }
        }
    }
}

/// Density values on an equispaced grid, floored and normalized to unit mass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub interval: Interval,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub floor: f64,
    pub bandwidth: f64,
    /// Trapezoid mass of the raw estimate before flooring.
    pub raw_mass: f64,
}

impl DensityEstimate {
    /// Piecewise-linear interpolation of the stored values; clamps outside the interval.
    pub fn eval(&self, x: f64) -> f64 {
        let g = &self.grid;
        let last = g.len() - 1;
        if x <= g[0] {
            return self.values[0];
        }
        if x >= g[last] {
            return self.values[last];
        }
        let h = (self.interval.hi - self.interval.lo) / last as f64;
        let k = (((x - g[0]) / h).floor() as usize).min(last - 1);
        let t = (x - g[k]) / (g[k + 1] - g[k]);
        self.values[k] * (1.0 - t) + self.values[k + 1] * t
    }
}

fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Gaussian kernel density estimate with Silverman's bandwidth `1.06·sd·n^(-1/5)`.
///
/// The kernel mass falling outside the interval is reflected back at both
/// endpoints, so the estimate keeps (almost) unit mass on the interval. The
/// result is floored at `1e-3` times its maximum and renormalized.
pub fn estimate_density(samples: &[f64], interval: Interval, grid_size: usize) -> Result<DensityEstimate> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    if grid_size < 2 {
        return Err(Error::InvalidInput("grid_size must be at least 2".into()));
    }
    let tol = 1e-12 * interval.width().max(1.0);
    if samples.iter().any(|&s| !s.is_finite() || s < interval.lo - tol || s > interval.hi + tol) {
        return Err(Error::InvalidInput("samples not covered by the interval".into()));
    }
    let first = samples[0];
    if samples.iter().all(|&s| s == first) {
        return Err(Error::DegenerateSample);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let bandwidth = 1.06 * var.sqrt() * n.powf(-0.2);
    if !(bandwidth > 0.0) {
        return Err(Error::DegenerateSample);
    }

    let grid = interval.linspace(grid_size);
    let norm = 1.0 / (n * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let inv_h = 1.0 / bandwidth;
    let (lo, hi) = (interval.lo, interval.hi);
    let kernel = |d: f64| {
        let u = d * inv_h;
        if u.abs() > 9.0 {
            0.0
        } else {
            (-0.5 * u * u).exp()
        }
    };
    let mut values: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let s: f64 = samples
                .iter()
                .map(|&xi| kernel(x - xi) + kernel(x - (2.0 * lo - xi)) + kernel(x - (2.0 * hi - xi)))
                .sum();
            s * norm
        })
        .collect();
    let raw_mass = trapezoid(&grid, &values);
    let max = values.iter().cloned().fold(0.0, f64::max);
    let floor = 1e-3 * max;
    for v in values.iter_mut() {
        *v = v.max(floor);
    }
    let mass = trapezoid(&grid, &values);
    for v in values.iter_mut() {
        *v /= mass;
    }
    Ok(DensityEstimate { interval, grid, values, floor: floor / mass, bandwidth, raw_mass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    #[test]
    fn uniform_samples_match_histogram() {
        let mut rng = substream(11, &[]);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let iv = Interval::new(0.0, 1.0).unwrap();
        let d = estimate_density(&xs, iv, 201).unwrap();
        // 50-bin histogram oracle
        let mut hist = [0usize; 50];
        for &x in &xs {
            hist[((x * 50.0) as usize).min(49)] += 1;
        }
        for (i, &x) in d.grid.iter().enumerate() {
            if x < 0.1 || x > 0.9 {
                continue;
            }
            let bin = ((x * 50.0) as usize).min(49);
            let h = hist[bin] as f64 / (10_000.0 / 50.0);
            assert!((d.values[i] - 1.0).abs() < 0.1, "kde {} at {x}", d.values[i]);
            assert!((d.values[i] - h).abs() < 0.2);
        }
        assert!((d.raw_mass - 1.0).abs() < 0.02);
    }

    #[test]
    fn translation_equivariance() {
        let mut rng = substream(12, &[]);
        let xs: Vec<f64> = (0..500).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let c = 3.25;
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let a = estimate_density(&xs, Interval::new(-1.0, 1.0).unwrap(), 64).unwrap();
        let b = estimate_density(&shifted, Interval::new(-1.0 + c, 1.0 + c).unwrap(), 64).unwrap();
        for (u, v) in a.values.iter().zip(&b.values) {
            assert!((u - v).abs() < 1e-9 * u.max(1.0));
        }
    }

    #[test]
    fn repeated_sample_is_degenerate() {
        let xs = vec![0.4; 100];
        let r = estimate_density(&xs, Interval::new(0.0, 1.0).unwrap(), 32);
        assert!(matches!(r, Err(Error::DegenerateSample)));
    }

    #[test]
    fn floor_and_unit_mass() {
        let xs = vec![0.0, 0.01, 0.02, 0.03, 0.05];
        let d = estimate_density(&xs, Interval::new(0.0, 5.0).unwrap(), 256).unwrap();
        assert!(d.values.iter().all(|&v| v >= d.floor * (1.0 - 1e-12)));
        assert!((trapezoid(&d.grid, &d.values) - 1.0).abs() < 1e-12);
        assert!(estimate_density(&xs, Interval::new(0.01, 5.0).unwrap(), 256).is_err());
    }
}
