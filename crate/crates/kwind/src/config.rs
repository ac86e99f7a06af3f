//! Run configuration, read from and written to a single TOML document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::Reorth;
use crate::spin::Axis;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub model: ModelConfig,
    pub krylov: KrylovConfig,
    pub analysis: AnalysisConfig,
    pub analytic: AnalyticConfig,
    pub scramblon: ScramblonConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("kwind-out"),
            threads: 0,
            model: ModelConfig::default(),
            krylov: KrylovConfig::default(),
            analysis: AnalysisConfig::default(),
            analytic: AnalyticConfig::default(),
            scramblon: ScramblonConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub axis: Axis,
    /// 0-based; site 0 is S_1.
    pub site: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_sites: usize,
    pub beta: f64,
    pub seed_base: u64,
    pub realizations: usize,
    pub operator: OperatorSpec,
    /// Coupling variance; absent means 1/(9N).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_sites: 8,
            beta: 1.0,
            seed_base: 1,
            realizations: 100,
            operator: OperatorSpec { axis: Axis::X, site: 0 },
            variance: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KrylovConfig {
    pub n_max: usize,
    pub tol: f64,
    pub reorth: Reorth,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig { n_max: 160, tol: 1e-8, reorth: Reorth::Full }
    }
}

/// `points` equally spaced times on [0, t_max].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_max: f64,
    pub points: usize,
}

impl TimeGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![0.0];
        }
        let dt = self.t_max / (self.points - 1) as f64;
        (0..self.points).map(|k| k as f64 * dt).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub mu_points: usize,
    pub t_grid: TimeGrid,
    /// p(l) below this masks Arg q(l).
    pub size_floor: f64,
    /// Pauli-decompose rho^{1/2} O(t) at every time for p, q and C_S.
    pub size_resolved: bool,
    /// Inclusive 1-based window of the b_n line fit.
    pub fit_window: [usize; 2],
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            mu_points: 1024,
            t_grid: TimeGrid { t_max: 60.0, points: 121 },
            size_floor: 1e-12,
            size_resolved: true,
            fit_window: [2, 7],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticConfig {
    /// Solvable family; alpha = pi nu / beta unless given.
    pub nu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub delta: f64,
    pub beta: f64,
    /// Times in units of 1/(2 alpha).
    pub times: Vec<f64>,
    pub n_max: usize,
    pub mu_points: usize,
    /// Large-q SYK locality; 0 skips the large-q curves.
    pub q_locality: u32,
    pub ramp_sizes: Vec<u64>,
    pub ramp_alpha: f64,
    pub ramp_beta: f64,
    /// Ramp-plateau times in units of log N / alpha.
    pub ramp_t_max: f64,
    pub ramp_points: usize,
    pub ramp_mu_points: usize,
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        AnalyticConfig {
            nu: 0.5,
            alpha: None,
            delta: 0.25,
            beta: 1.0,
            times: vec![0.5, 1.0, 2.0, 3.0, 4.0],
            n_max: 400,
            mu_points: 1024,
            q_locality: 4,
            ramp_sizes: vec![8, 12, 16, 20],
            ramp_alpha: 1.0,
            ramp_beta: 1.0,
            ramp_t_max: 4.0,
            ramp_points: 41,
            ramp_mu_points: 16384,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScramblonConfig {
    pub q_locality: u32,
    pub nu: f64,
    pub beta: f64,
    pub n_majorana: u64,
    pub h_list: Vec<f64>,
    /// Overrides Delta = 1/q.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Overrides 4 N Delta^2 cos(pi nu/2).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ladder_c: Option<f64>,
    /// Time in units of 1/(2 alpha).
    pub t: f64,
    pub s_points: usize,
    /// Largest s - s0 on the size grid.
    pub s_span: f64,
    pub mu_points: usize,
    /// C_S grid is [-mu_max, mu_max].
    pub mu_max: f64,
    /// (l - l0)/N for the peak-in-n profile.
    pub peak_offset: f64,
}

impl Default for ScramblonConfig {
    fn default() -> Self {
        ScramblonConfig {
            q_locality: 6,
            nu: 0.5,
            beta: 1.0,
            n_majorana: 3000,
            h_list: vec![1.0, 0.75, 0.5],
            delta: None,
            ladder_c: None,
            t: 0.9,
            s_points: 200,
            s_span: 0.1,
            mu_points: 601,
            mu_max: 0.6,
            peak_offset: 0.01,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Parameter checks that do not need any computation.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if !(2..=10).contains(&m.n_sites) {
            return Err(Error::Config(format!("n_sites must lie in 2..=10, got {}", m.n_sites)));
        }
        if m.operator.site >= m.n_sites {
            return Err(Error::Config(format!(
                "operator site {} outside 0..{}",
                m.operator.site, m.n_sites
            )));
        }
        if !(m.beta >= 0.0 && m.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be nonnegative, got {}", m.beta)));
        }
        if m.realizations == 0 {
            return Err(Error::Config("realizations must be positive".into()));
        }
        if let Some(v) = m.variance {
            if !(v > 0.0) {
                return Err(Error::Config(format!("variance must be positive, got {v}")));
            }
        }
        if self.krylov.n_max < 1 || !(self.krylov.tol > 0.0) {
            return Err(Error::Config("krylov.n_max >= 1 and krylov.tol > 0 required".into()));
        }
        let a = &self.analysis;
        if a.mu_points < 5 {
            return Err(Error::Config("analysis.mu_points must be at least 5".into()));
        }
        if !(a.t_grid.t_max >= 0.0) || a.t_grid.points == 0 {
            return Err(Error::Config("analysis.t_grid needs t_max >= 0 and points >= 1".into()));
        }
        if a.fit_window[0] < 1 || a.fit_window[1] < a.fit_window[0] + 2 {
            return Err(Error::Config("analysis.fit_window needs 3+ points starting at 1 or later".into()));
        }
        let an = &self.analytic;
        if an.mu_points < 5 || an.ramp_mu_points < 5 || an.n_max < 2 {
            return Err(Error::Config("analytic grids are too small".into()));
        }
        let s = &self.scramblon;
        if s.mu_points < 5 || s.s_points < 2 || !(s.s_span > 0.0) || !(s.mu_max > 0.0) {
            return Err(Error::Config("scramblon grids are too small".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.model.variance = Some(0.02);
        cfg.scramblon.ladder_c = Some(12.5);
        cfg.analysis.t_grid = TimeGrid { t_max: 7.25, points: 30 };
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        let plain = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&plain.to_toml().unwrap()).unwrap(), plain);
    }

    #[test]
    fn partial_documents_take_defaults() {
        let cfg = RunConfig::from_toml("[model]\nn_sites = 4\nrealizations = 3\n").unwrap();
        assert_eq!(cfg.model.n_sites, 4);
        assert_eq!(cfg.model.beta, 1.0);
        assert_eq!(cfg.krylov, KrylovConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RunConfig::from_toml("[model]\nn_site = 4\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.model.n_sites = 11;
        assert!(cfg.validate().is_err());
        cfg.model.n_sites = 4;
        cfg.model.operator.site = 4;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn time_grid_endpoints() {
        let g = TimeGrid { t_max: 2.0, points: 5 }.values();
        assert_eq!(g, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }
}
