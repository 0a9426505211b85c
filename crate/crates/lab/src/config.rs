//! Experiment configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use turnpike_core::analysis::{DeviationSource, TurnpikeSetup};
use turnpike_core::grid_coeff::{CoefficientRecipe, Profile, SamplingOptions};
use turnpike_core::hum::HumSetup;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub coefficients: CoefficientsConfig,
    pub epsilon_list: Vec<f64>,
    pub window: WindowConfig,
    pub y0: Profile,
    pub y_d: Profile,
    pub turnpike: TurnpikeConfig,
    pub solver: SolverConfig,
    #[serde(default)]
    pub riccati: RiccatiConfig,
    #[serde(default)]
    pub hum: HumConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    pub a: CoefficientRecipe,
    pub b: CoefficientRecipe,
    pub p: CoefficientRecipe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub x_lo: f64,
    pub x_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnpikeConfig {
    #[serde(rename = "C")]
    pub c: f64,
    pub mu: f64,
    /// Fit window as fractions of T.
    #[serde(default = "default_fit_window")]
    pub fit_window: [f64; 2],
    #[serde(default = "default_deviation")]
    pub deviation: DeviationSource,
}

fn default_fit_window() -> [f64; 2] {
    [0.05, 0.4]
}

fn default_deviation() -> DeviationSource {
    DeviationSource::Feedback
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Dense Riccati size limit for the feedback deviation curves.
    #[serde(default = "default_riccati_limit")]
    pub riccati_max_unknowns: usize,
}

fn default_riccati_limit() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiccatiConfig {
    /// Grid of the feedback cross-check.
    pub n_cells: usize,
    pub gap_n_cells: usize,
    #[serde(rename = "gap_T")]
    pub gap_horizon: f64,
    pub gap_n_steps: usize,
    pub gap_epsilons: Vec<f64>,
    /// Fit window as fractions of `gap_T`.
    pub gap_fit_window: [f64; 2],
}

impl Default for RiccatiConfig {
    fn default() -> Self {
        Self {
            n_cells: 201,
            gap_n_cells: 100,
            gap_horizon: 2.0,
            gap_n_steps: 400,
            gap_epsilons: vec![1.0, 0.1, 0.01],
            gap_fit_window: [0.0, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HumConfig {
    pub n_cells: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_steps: usize,
    pub window: WindowConfig,
    pub y0: Profile,
    pub delta: f64,
    pub delta_ladder: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for HumConfig {
    fn default() -> Self {
        Self {
            n_cells: 200,
            horizon: 1.0,
            n_steps: 100,
            window: WindowConfig { x_lo: 0.3, x_hi: 0.7 },
            y0: Profile::Sine { mode: 1, amplitude: 1.0 },
            delta: 1e-6,
            delta_ladder: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
            epsilons: vec![1.0, 0.1, 0.01],
            cg_tol: 1e-10,
            cg_max_iter: 5000,
        }
    }
}

impl ExperimentConfig {
    /// The setup of the numerical experiments on the sin² coefficient.
    pub fn reference() -> Self {
        Self {
            grid: GridConfig { n_cells: 421 },
            time: TimeConfig { horizon: 50.0, n_steps: 168 },
            coefficients: CoefficientsConfig {
                a: CoefficientRecipe::sin2(0.5, 1.0, 1.0),
                b: CoefficientRecipe::constant(0.0),
                p: CoefficientRecipe::constant(0.0),
            },
            epsilon_list: vec![1.0, 0.5, 0.1, 0.05, 0.01, 0.005],
            window: WindowConfig { x_lo: 0.0, x_hi: 1.0 },
            y0: Profile::Polynomial { coeffs: vec![0.0, -1.0, 1.0] },
            y_d: Profile::Constant { value: 1.0 },
            turnpike: TurnpikeConfig {
                c: 10.0,
                mu: 4.0,
                fit_window: default_fit_window(),
                deviation: default_deviation(),
            },
            solver: SolverConfig { cg_tol: 1e-8, cg_max_iter: 500, riccati_max_unknowns: default_riccati_limit() },
            riccati: RiccatiConfig::default(),
            hum: HumConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 20240607,
        }
    }

    /// Reads a config file, or the `config` member of a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let value = match value.get("config_sha256").and(value.get("config")) {
            Some(inner) => inner.clone(),
            None => value,
        };
        let cfg: Self = serde_json::from_value(value).map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{name} must be positive, got {v}");
            }
            Ok(())
        }
        if self.grid.n_cells < 4 {
            bail!("grid.n_cells must be at least 4, got {}", self.grid.n_cells);
        }
        positive("time.T", self.time.horizon)?;
        if self.time.n_steps < 2 {
            bail!("time.n_steps must be at least 2, got {}", self.time.n_steps);
        }
        for (name, r) in [("coefficients.a", &self.coefficients.a), ("coefficients.b", &self.coefficients.b), ("coefficients.p", &self.coefficients.p)] {
            r.validate().with_context(|| name.to_string())?;
        }
        if self.epsilon_list.is_empty() {
            bail!("epsilon_list must not be empty");
        }
        for &e in &self.epsilon_list {
            positive("epsilon_list entry", e)?;
        }
        if self.epsilon_list.windows(2).any(|w| w[1] >= w[0]) {
            bail!("epsilon_list must be sorted in decreasing order");
        }
        if !(0.0 <= self.window.x_lo && self.window.x_lo < self.window.x_hi && self.window.x_hi <= 1.0) {
            bail!("window must satisfy 0 <= x_lo < x_hi <= 1");
        }
        positive("turnpike.C", self.turnpike.c)?;
        positive("turnpike.mu", self.turnpike.mu)?;
        let [lo, hi] = self.turnpike.fit_window;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            bail!("turnpike.fit_window must satisfy 0 <= lo < hi <= 1");
        }
        positive("solver.cg_tol", self.solver.cg_tol)?;
        if self.solver.cg_max_iter == 0 {
            bail!("solver.cg_max_iter must be positive");
        }
        if self.riccati.n_cells < 4 || self.riccati.gap_n_cells < 4 {
            bail!("riccati grids need at least 4 cells");
        }
        positive("riccati.gap_T", self.riccati.gap_horizon)?;
        positive("hum.T", self.hum.horizon)?;
        positive("hum.delta", self.hum.delta)?;
        for &d in &self.hum.delta_ladder {
            positive("hum.delta_ladder entry", d)?;
        }
        for &e in self.riccati.gap_epsilons.iter().chain(&self.hum.epsilons) {
            positive("epsilon", e)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn turnpike_setup(&self) -> TurnpikeSetup {
        TurnpikeSetup {
            n_cells: self.grid.n_cells,
            horizon: self.time.horizon,
            n_steps: self.time.n_steps,
            a: self.coefficients.a.clone(),
            b: self.coefficients.b.clone(),
            p: self.coefficients.p.clone(),
            window: (self.window.x_lo, self.window.x_hi),
            y0: self.y0.clone(),
            y_d: self.y_d.clone(),
            c: self.turnpike.c,
            mu: self.turnpike.mu,
            cg_tol: self.solver.cg_tol,
            cg_max_iter: self.solver.cg_max_iter,
            fit_window: (self.turnpike.fit_window[0], self.turnpike.fit_window[1]),
            deviation: self.turnpike.deviation,
            riccati_max_unknowns: self.solver.riccati_max_unknowns,
            sampling: SamplingOptions::default(),
        }
    }

    pub fn hum_setup(&self, delta: f64) -> HumSetup {
        HumSetup {
            n_cells: self.hum.n_cells,
            horizon: self.hum.horizon,
            n_steps: self.hum.n_steps,
            a: self.coefficients.a.clone(),
            b: self.coefficients.b.clone(),
            p: self.coefficients.p.clone(),
            window: (self.hum.window.x_lo, self.hum.window.x_hi),
            y0: self.hum.y0.clone(),
            delta,
            cg_tol: self.hum.cg_tol,
            cg_max_iter: self.hum.cg_max_iter,
            sampling: SamplingOptions::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_round_trips() {
        let cfg = ExperimentConfig::reference();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.sha256(), cfg.sha256());
    }

    #[test]
    fn missing_field_is_named() {
        let mut v = serde_json::to_value(ExperimentConfig::reference()).unwrap();
        v.as_object_mut().unwrap().remove("y_d");
        let err = serde_json::from_value::<ExperimentConfig>(v).unwrap_err().to_string();
        assert!(err.contains("y_d"), "{err}");
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = ExperimentConfig::reference();
        cfg.time.n_steps = 1;
        assert!(cfg.validate().unwrap_err().to_string().contains("time.n_steps"));
        let mut cfg = ExperimentConfig::reference();
        cfg.epsilon_list = vec![0.1, 1.0];
        assert!(cfg.validate().unwrap_err().to_string().contains("epsilon_list"));
    }
}
