//! Browser bindings: simulate a sample, fit it and draw a bootstrap band.

use sim_spline::inference::{bootstrap_band, BandResult, BootstrapConfig};
use sim_spline::model::{dot, fit, Dataset, FitConfig, SingleIndexFit};
use sim_spline::simulation::{g0, gen_dataset, ErrorMode, SimSetting};
use wasm_bindgen::prelude::*;

fn js(e: sim_spline::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// One simulated sample with its current fit and band.
#[wasm_bindgen]
pub struct Session {
    data: Dataset,
    fit: Option<SingleIndexFit>,
    band: Option<BandResult>,
}

#[wasm_bindgen]
impl Session {
    /// Draws `n` rows of the simulation design under error setting 1, 2 or 3.
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, setting: u32, seed: u64) -> Result<Session, JsError> {
        let mode = ErrorMode::from_setting(setting).map_err(js)?;
        let (data, _) = gen_dataset(&SimSetting::new(n, mode, seed).map_err(js)?).map_err(js)?;
        Ok(Session { data, fit: None, band: None })
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn fit(&mut self, seed: u64) -> Result<(), JsError> {
        let cfg = FitConfig { seed, ..FitConfig::default() };
        self.fit = Some(fit(&self.data, &cfg, None).map_err(js)?);
        self.band = None;
        Ok(())
    }

    pub fn band(&mut self, alpha: f64, replicates: usize, seed: u64) -> Result<(), JsError> {
        let f = self.fit.as_ref().ok_or_else(|| JsError::new("fit the sample first"))?;
        let cfg = BootstrapConfig { alpha, b: replicates, seed, grid_size: 201, threads: Some(1), ..BootstrapConfig::default() };
        self.band = Some(bootstrap_band(&self.data, f, &cfg).map_err(js)?);
        Ok(())
    }

    /// Fitted index `xᵢᵀβ̂` per row, or the true index before a fit.
    pub fn index(&self) -> Vec<f64> {
        let beta = self.fit.as_ref().map_or_else(sim_spline::simulation::beta0, |f| f.beta.clone());
        self.data.index(&beta)
    }

    /// Partial residuals `yᵢ − zᵢᵀγ̂` (`γ = 1` before a fit).
    pub fn partial_residuals(&self) -> Vec<f64> {
        let gamma = self.fit.as_ref().map_or_else(|| vec![1.0], |f| f.gamma.clone());
        (0..self.data.n()).map(|i| self.data.y[i] - dot(&self.data.z[i], &gamma)).collect()
    }

    pub fn beta(&self) -> Vec<f64> {
        self.fit.as_ref().map(|f| f.beta.clone()).unwrap_or_default()
    }

    pub fn lambda(&self) -> f64 {
        self.fit.as_ref().map_or(f64::NAN, |f| f.lambda)
    }

    pub fn iterations(&self) -> usize {
        self.fit.as_ref().map_or(0, |f| f.iterations)
    }

    pub fn converged(&self) -> bool {
        self.fit.as_ref().is_some_and(|f| f.converged)
    }

    /// Evaluation grid of the link curve: the band grid when present.
    pub fn grid(&self) -> Vec<f64> {
        match (&self.band, &self.fit) {
            (Some(b), _) => b.grid.clone(),
            (None, Some(f)) => f.index_range.linspace(201),
            _ => Vec::new(),
        }
    }

    /// Bias-adjusted link `ĝ̃` on [`Session::grid`].
    pub fn link(&self) -> Vec<f64> {
        let Some(f) = &self.fit else { return Vec::new() };
        let g = f.link();
        self.grid().iter().map(|&s| g.value(s)).collect()
    }

    /// True link on [`Session::grid`].
    pub fn truth(&self) -> Vec<f64> {
        self.grid().into_iter().map(g0).collect()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.band.as_ref().map(|b| b.lower.clone()).unwrap_or_default()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.band.as_ref().map(|b| b.upper.clone()).unwrap_or_default()
    }

    /// Whether the band contains `g₀` at every grid point.
    pub fn covers_truth(&self) -> bool {
        self.band.as_ref().is_some_and(|b| b.covers(g0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulate_fit_band() {
        let mut s = Session::new(200, 1, 1).unwrap();
        assert_eq!(s.n(), 200);
        assert!(s.link().is_empty());
        s.fit(0).unwrap();
        assert_eq!(s.beta().len(), 6);
        assert_eq!(s.grid().len(), 201);
        s.band(0.05, 100, 1).unwrap();
        let (lo, hi, g) = (s.lower(), s.upper(), s.link());
        assert!((0..g.len()).all(|i| lo[i] <= g[i] && g[i] <= hi[i]));
        assert_eq!(s.truth().len(), 201);
    }
}
