use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use super::DiagnosticsError;
use crate::field::{Grid, Orientation, SolverConfig};
use crate::initial_data::DataRecipe;
use crate::lagrangian::SeedConfig;

/// Everything that determines an experiment. Missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub resolution: usize,
    /// Final time of the run.
    pub horizon: f64,
    pub cfl: f64,
    pub max_dt: f64,
    pub orientation: Orientation,
    /// Keep every `snapshot_stride`-th solver state for the particle tracer.
    pub snapshot_stride: usize,
    /// Key-lemma constant for both error budgets.
    pub calib: f64,
    /// Positivity constant; defaults to `positivity_factor` times the measured `sup |d eta/dt|`.
    pub positivity_constant: Option<f64>,
    pub positivity_factor: f64,
    /// Radius below which the series residual is not measured.
    pub r_min: f64,
    pub series_resolution: usize,
    pub lemma_resolution: usize,
    /// `beta` of the separate run feeding the Hardy profile.
    pub hardy_beta: f64,
    /// Reporting threshold for `(d gamma/dt) / C_eta`.
    pub rate_ratio_threshold: f64,
    pub antisymmetry_tolerance: f64,
    /// Required `log(Phi1(T) / y1)` for a witness particle.
    pub witness_margin: f64,
    pub write_snapshots: bool,
    /// Criteria (1 to 9) excluded from the exit status.
    pub disabled_criteria: Vec<u8>,
    pub output_dir: Option<PathBuf>,
    pub seeds: SeedConfig,
    pub recipe: DataRecipe,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            resolution: 2048,
            horizon: 0.05,
            cfl: 0.5,
            max_dt: 1e-2,
            orientation: Orientation::CurlConsistent,
            snapshot_stride: 1,
            calib: 0.3616,
            positivity_constant: None,
            positivity_factor: 4.0,
            r_min: 1.0 / 48.0,
            series_resolution: 1024,
            lemma_resolution: 256,
            hardy_beta: 0.55,
            rate_ratio_threshold: 4.0,
            antisymmetry_tolerance: 1e-8,
            witness_margin: 0.0,
            write_snapshots: false,
            disabled_criteria: Vec::new(),
            output_dir: None,
            seeds: SeedConfig::default(),
            recipe: DataRecipe::desk(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, DiagnosticsError> {
        let cfg: Self = toml::from_str(text).map_err(|e| DiagnosticsError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, DiagnosticsError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        let bad = |m: String| Err(DiagnosticsError::Config(m));
        for (name, n) in [
            ("resolution", self.resolution),
            ("series_resolution", self.series_resolution),
            ("lemma_resolution", self.lemma_resolution),
        ] {
            if Grid::new(n).is_err() {
                return bad(format!("{name} = {n} must be a power of two >= 16"));
            }
        }
        if !(self.horizon >= 0.0 && self.horizon <= 0.1) {
            return bad(format!("horizon = {} must lie in [0, 0.1]", self.horizon));
        }
        for (name, v) in [
            ("cfl", self.cfl),
            ("max_dt", self.max_dt),
            ("calib", self.calib),
            ("positivity_factor", self.positivity_factor),
            ("r_min", self.r_min),
            ("rate_ratio_threshold", self.rate_ratio_threshold),
            ("antisymmetry_tolerance", self.antisymmetry_tolerance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        if let Some(c) = self.positivity_constant {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("positivity_constant = {c} must be positive"));
            }
        }
        if !(self.witness_margin.is_finite() && self.witness_margin >= 0.0) {
            return bad(format!("witness_margin = {} must be nonnegative", self.witness_margin));
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be positive".into());
        }
        if self.seeds.probes_per_side == 0 || self.seeds.nodes_per_panel == 0 || self.seeds.markers_per_boundary < 3 {
            return bad("seed counts must be positive with at least 3 markers per boundary".into());
        }
        if let Some(&c) = self.disabled_criteria.iter().find(|&&c| !(1..=9).contains(&c)) {
            return bad(format!("disabled criterion {c} is not in 1..=9"));
        }
        self.recipe.validate()?;
        let mut hardy = self.recipe;
        hardy.beta = self.hardy_beta;
        hardy.validate()?;
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig { cfl: self.cfl, orientation: self.orientation, enforce_odd_odd: false, max_dt: self.max_dt }
    }

    /// The same experiment with the recipe's `beta` replaced by `hardy_beta`.
    pub fn hardy_variant(&self) -> Self {
        let mut c = self.clone();
        c.recipe.beta = self.hardy_beta;
        c
    }

    pub fn criterion_enabled(&self, id: u8) -> bool {
        !self.disabled_criteria.contains(&id)
    }
}
