//! Analysis configuration: one TOML file drives every command.
//!
//! The `[data]` table maps CSV columns onto roles; `[design]`,
//! `[sensitivity]`, `[bootstrap]`, `[amplification]`, and `[output]` pin
//! the analysis; an optional `[simulate]` table holds a data-generating
//! configuration for the simulator. Command-line flags override individual
//! keys. The SHA-256 of the effective (post-override) configuration is
//! stamped into every report so an analysis is identified by its inputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::CsvSchema;
use crate::error::{Error, Result};
use crate::sensitivity::{DEFAULT_BISECTION_TOL, DEFAULT_LAMBDA_MAX};
use crate::synthetic::DgpConfig;
use crate::weights::AllowabilityMode;

/// Column roles plus load options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    pub outcome: String,
    pub group: String,
    pub exposure: String,
    #[serde(default)]
    pub allowable: Vec<String>,
    #[serde(default)]
    pub nonallowable: Vec<String>,
    /// Standardize covariates to mean 0, variance 1 after loading.
    #[serde(default = "default_true")]
    pub standardize: bool,
    /// Row-exclusion expression (`column==v`, `!=`, `<`, `>`) applied to the
    /// raw values right after loading (the robustness-check workflow).
    pub exclude: Option<String>,
}

impl DataSection {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            outcome: self.outcome.clone(),
            group: self.group.clone(),
            exposure: self.exposure.clone(),
            allowable: self.allowable.clone(),
            nonallowable: self.nonallowable.clone(),
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    /// Append all two-way covariate interactions to the propensity designs.
    #[serde(default = "default_true")]
    pub interactions: bool,
    /// Fit `e0` on allowable covariates only.
    #[serde(default = "default_true")]
    pub allowability: bool,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self {
            interactions: true,
            allowability: true,
        }
    }
}

impl DesignSection {
    pub fn allowability_mode(&self) -> AllowabilityMode {
        if self.allowability {
            AllowabilityMode::On
        } else {
            AllowabilityMode::Off
        }
    }
}

fn default_lambda_max() -> f64 {
    DEFAULT_LAMBDA_MAX
}

fn default_bisection_tol() -> f64 {
    DEFAULT_BISECTION_TOL
}

fn default_eta() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivitySection {
    /// Explicit ascending grid; when absent a default grid up to
    /// `lambda_max` is used.
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
    #[serde(default = "default_bisection_tol")]
    pub bisection_tol: f64,
    /// Equivalence-test fractions (each in `(0, 1]`).
    #[serde(default = "default_eta")]
    pub eta: Vec<f64>,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        Self {
            lambda_grid: None,
            lambda_max: DEFAULT_LAMBDA_MAX,
            bisection_tol: DEFAULT_BISECTION_TOL,
            eta: default_eta(),
        }
    }
}

impl SensitivitySection {
    /// The grid to evaluate: the explicit one, or 1.0–2.0 in steps of 0.1
    /// followed by 2.5, 3, 4, 5, ..., capped at `lambda_max`.
    pub fn grid(&self) -> Vec<f64> {
        if let Some(grid) = &self.lambda_grid {
            return grid.clone();
        }
        let mut grid: Vec<f64> = (0..=10).map(|k| 1.0 + 0.1 * k as f64).collect();
        for v in [2.5, 3.0, 4.0, 5.0, 10.0, 20.0] {
            if v <= self.lambda_max {
                grid.push(v);
            }
        }
        grid.retain(|&v| v <= self.lambda_max);
        grid
    }

    pub fn bracket(&self) -> (f64, f64) {
        (1.0, self.lambda_max)
    }
}

fn default_resolution() -> usize {
    200
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimandChoice {
    Reduction,
    Residual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplificationSection {
    /// Grid intervals per contour axis.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Refit the weights without each covariate instead of plugging in the
    /// full-model propensities.
    #[serde(default)]
    pub leave_one_out: bool,
    /// Which estimand's critical bias drives the contour plot.
    #[serde(default = "default_estimand")]
    pub estimand: EstimandChoice,
    /// Optional explicit axis limits (otherwise 1.2x the calibration
    /// points).
    pub delta_max: Option<f64>,
    pub beta_max: Option<f64>,
}

fn default_estimand() -> EstimandChoice {
    EstimandChoice::Reduction
}

impl Default for AmplificationSection {
    fn default() -> Self {
        Self {
            resolution: default_resolution(),
            leave_one_out: false,
            estimand: default_estimand(),
            delta_max: None,
            beta_max: None,
        }
    }
}

impl AmplificationSection {
    pub fn axis_limits(&self) -> Option<(f64, f64)> {
        match (self.delta_max, self.beta_max) {
            (Some(d), Some(b)) => Some((d, b)),
            _ => None,
        }
    }
}

fn default_replicates() -> usize {
    1000
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stratified: bool,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self {
            replicates: default_replicates(),
            alpha: default_alpha(),
            seed: 0,
            stratified: false,
        }
    }
}

impl BootstrapSection {
    pub fn to_config(self) -> Result<crate::bootstrap::BootstrapConfig> {
        let mut cfg =
            crate::bootstrap::BootstrapConfig::new(self.replicates, self.alpha, self.seed)?;
        cfg.stratified = self.stratified;
        Ok(cfg)
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub emit_weights: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            emit_weights: false,
        }
    }
}

/// The whole configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub data: Option<DataSection>,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub sensitivity: SensitivitySection,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default)]
    pub amplification: AmplificationSection,
    #[serde(default)]
    pub output: OutputSection,
    pub simulate: Option<DgpConfig>,
}

impl AnalysisConfig {
    pub fn parse(content: &str) -> Result<Self> {
        let cfg: AnalysisConfig = toml::from_str(content).map_err(|e| Error::Config {
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content)
    }

    pub fn validate(&self) -> Result<()> {
        for &eta in &self.sensitivity.eta {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::InvalidEta { eta });
            }
        }
        if let Some(grid) = &self.sensitivity.lambda_grid {
            if grid.first().is_none_or(|&v| v < 1.0) {
                return Err(Error::Config {
                    message: "lambda_grid must start at a value >= 1".into(),
                });
            }
            for pair in grid.windows(2) {
                if pair[1] < pair[0] {
                    return Err(Error::Config {
                        message: "lambda_grid must be ascending".into(),
                    });
                }
            }
        }
        if !self.sensitivity.lambda_max.is_finite() || self.sensitivity.lambda_max <= 1.0 {
            return Err(Error::Config {
                message: format!(
                    "lambda_max must exceed 1, got {}",
                    self.sensitivity.lambda_max
                ),
            });
        }
        if let Some(sim) = &self.simulate {
            sim.validate()?;
        }
        Ok(())
    }

    /// The section analysis commands require.
    pub fn data_section(&self) -> Result<&DataSection> {
        self.data.as_ref().ok_or_else(|| Error::Config {
            message: "this command needs a [data] section in the config".into(),
        })
    }

    pub fn simulate_section(&self) -> Result<&DgpConfig> {
        self.simulate.as_ref().ok_or_else(|| Error::Config {
            message: "the simulate command needs a [simulate] section in the config".into(),
        })
    }

    /// SHA-256 of the effective configuration, identifying the analysis
    /// inputs in reports. The `[output]` section is excluded: where the
    /// artifacts land does not change what was computed.
    pub fn sha256(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = OutputSection::default();
        let serialized = toml::to_string(&canonical).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(serialized.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[data]
path = "study.csv"
outcome = "y"
group = "g"
exposure = "z"
allowable = ["age", "sex"]
nonallowable = ["income"]
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = AnalysisConfig::parse(MINIMAL).unwrap();
        let data = cfg.data_section().unwrap();
        assert!(data.standardize);
        assert_eq!(data.schema().allowable, vec!["age", "sex"]);
        assert!(cfg.design.interactions);
        assert!(cfg.design.allowability);
        assert_eq!(cfg.bootstrap.replicates, 1000);
        assert_eq!(cfg.bootstrap.alpha, 0.05);
        assert_eq!(cfg.sensitivity.eta, vec![1.0]);
        assert_eq!(cfg.output.dir, PathBuf::from("out"));
        let grid = cfg.sensitivity.grid();
        assert_eq!(grid[0], 1.0);
        assert!(grid.windows(2).all(|p| p[1] > p[0]));
        assert!(*grid.last().unwrap() <= cfg.sensitivity.lambda_max);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = format!("{MINIMAL}\n[design]\ninteracshuns = true\n");
        assert!(AnalysisConfig::parse(&bad).is_err());
    }

    #[test]
    fn eta_and_grid_validation() {
        let bad_eta = format!("{MINIMAL}\n[sensitivity]\neta = [0.5, 1.5]\n");
        assert!(matches!(
            AnalysisConfig::parse(&bad_eta),
            Err(Error::InvalidEta { .. })
        ));
        let bad_grid = format!("{MINIMAL}\n[sensitivity]\nlambda_grid = [1.0, 0.9]\n");
        assert!(AnalysisConfig::parse(&bad_grid).is_err());
        let below_one = format!("{MINIMAL}\n[sensitivity]\nlambda_grid = [0.5, 1.0]\n");
        assert!(AnalysisConfig::parse(&below_one).is_err());
    }

    #[test]
    fn hash_tracks_every_override() {
        let a = AnalysisConfig::parse(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.sha256(), b.sha256());
        b.bootstrap.seed = 7;
        assert_ne!(a.sha256(), b.sha256());
    }

    #[test]
    fn simulate_section_parses() {
        let with_sim = r#"
[simulate]
n = 500
p_allowable = 1
p_nonallowable = 1
group_prevalence = 0.4
gamma0 = [0.1, 0.3]
gamma1 = [0.0, 0.2, 0.4]
seed = 9

[simulate.outcome]
beta_z = 1.0
f_coefficients = [0.5, -0.2]
beta_u = 0.4
noise_sd = 1.0

[simulate.confounder]
strength_e1 = 0.7
"#;
        let cfg = AnalysisConfig::parse(with_sim).unwrap();
        let sim = cfg.simulate_section().unwrap();
        assert_eq!(sim.n, 500);
        assert!(sim.confounder.hidden);
        assert_eq!(sim.oracle_draws, 200_000);
        assert!(cfg.data.is_none());
        assert!(cfg.data_section().is_err());
    }
}
