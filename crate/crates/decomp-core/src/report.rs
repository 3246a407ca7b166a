//! Report assembly: the versioned JSON analysis report and the CSV
//! side-files. All emission is deterministic: float formatting uses the
//! shortest round-trip representation and every collection is emitted in a
//! fixed order, so identical inputs produce byte-identical artifacts.

use serde::Serialize;

use crate::amplification::CalibrationPoint;
use crate::bootstrap::EstimateSummary;
use crate::dataset::{DecompositionDataset, LoadReport};
use crate::sensitivity::SensitivityBounds;
use crate::weights::RmpwWeights;

pub const SCHEMA_VERSION: u32 = 1;

/// Run identification: what produced this report and from which inputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeta {
    pub tool_version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub bootstrap_replicates: usize,
    pub alpha: f64,
    pub allowability: bool,
    pub interactions: bool,
    pub n_rows: usize,
    pub n_group1: usize,
}

/// Load accounting carried into the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadSummary {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub rows_dropped: usize,
    pub drops_by_column: Vec<(String, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exclude_filter: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows_excluded: Option<usize>,
}

impl LoadSummary {
    pub fn new(report: &LoadReport) -> Self {
        Self {
            rows_read: report.rows_read,
            rows_kept: report.rows_kept,
            rows_dropped: report.rows_dropped(),
            drops_by_column: report.drops_by_column(),
            exclude_filter: None,
            rows_excluded: None,
        }
    }
}

/// A point estimate with its bootstrap SD and percentile CI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateWithCi {
    pub estimate: f64,
    pub sd: f64,
    pub ci: (f64, f64),
}

impl EstimateWithCi {
    pub fn new(estimate: f64, summary: EstimateSummary) -> Self {
        Self {
            estimate,
            sd: summary.sd,
            ci: summary.ci,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightDiagnostics {
    pub max_weight: f64,
    pub min_weight: f64,
    pub effective_sample_size: f64,
    pub clip_events: usize,
}

impl WeightDiagnostics {
    pub fn new(weights: &RmpwWeights) -> Self {
        Self {
            max_weight: weights.max_weight(),
            min_weight: weights.min_weight(),
            effective_sample_size: weights.effective_sample_size(),
            clip_events: weights.clip_events,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub mu1: f64,
    pub mu0: f64,
    pub mu_r0: f64,
    pub tau: EstimateWithCi,
    pub reduction: EstimateWithCi,
    pub residual: EstimateWithCi,
    pub weights: WeightDiagnostics,
    pub failed_bootstrap_replicates: usize,
}

/// One row of the `Λ` grid, flattened for CSV and JSON emission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaRow {
    pub lambda: f64,
    pub mu_lower: f64,
    pub mu_upper: f64,
    pub reduction_lower: f64,
    pub reduction_upper: f64,
    pub residual_lower: f64,
    pub residual_upper: f64,
}

impl From<&SensitivityBounds> for LambdaRow {
    fn from(b: &SensitivityBounds) -> Self {
        Self {
            lambda: b.lambda,
            mu_lower: b.mu_lower,
            mu_upper: b.mu_upper,
            reduction_lower: b.reduction_bounds.0,
            reduction_upper: b.reduction_bounds.1,
            residual_lower: b.residual_bounds.0,
            residual_upper: b.residual_bounds.1,
        }
    }
}

/// A critical parameter: `None` means not reached below `lambda_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalValue {
    pub value: Option<f64>,
    pub threshold: f64,
    pub lambda_max: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalSet {
    pub reduction_point: CriticalValue,
    pub reduction_ci: CriticalValue,
    pub residual_point: CriticalValue,
    pub residual_ci: CriticalValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalenceRow {
    pub eta: f64,
    pub point: Option<f64>,
    pub ci: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub lambda_grid: Vec<LambdaRow>,
    pub critical: CriticalSet,
    pub equivalence: Vec<EquivalenceRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContourMeta {
    pub delta_max: f64,
    pub beta_max: f64,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    /// Which estimand's critical bias drives the contour.
    pub estimand: String,
    pub critical_lambda: f64,
    pub critical_bias: f64,
    pub points: Vec<CalibrationPoint>,
    pub excluded_covariates: Vec<String>,
    pub top_covariates: Vec<String>,
    pub contour: ContourMeta,
}

/// The full report. Sections are present when the command computed them;
/// `decompose` fills the decomposition, `sensitivity` adds the grid and
/// critical parameters, `calibrate` adds the calibration table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub meta: RunMeta,
    pub load: LoadSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<SensitivityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationReport>,
}

impl AnalysisReport {
    pub fn new(meta: RunMeta, load: LoadSummary) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            meta,
            load,
            decomposition: None,
            sensitivity: None,
            calibration: None,
        }
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut json = serde_json::to_string_pretty(self).expect("report serializes");
        json.push('\n');
        json
    }
}

/// `lambda_grid.csv`: one row per `Λ`.
pub fn lambda_grid_csv(rows: &[LambdaRow]) -> String {
    let mut out = String::from(
        "lambda,mu_lower,mu_upper,reduction_lower,reduction_upper,residual_lower,residual_upper\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.lambda,
            r.mu_lower,
            r.mu_upper,
            r.reduction_lower,
            r.reduction_upper,
            r.residual_lower,
            r.residual_upper
        ));
    }
    out
}

/// `calibration.csv`: one row per calibration point, in dataset covariate
/// order.
pub fn calibration_csv(points: &[CalibrationPoint]) -> String {
    let mut out = String::from("covariate,beta_u,delta_pre,delta_post,bias_pre,bias_post\n");
    for p in points {
        let name = if p.covariate.contains(',') || p.covariate.contains('"') {
            format!("\"{}\"", p.covariate.replace('"', "\"\""))
        } else {
            p.covariate.clone()
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            name, p.beta_u, p.delta_pre, p.delta_post, p.bias_pre, p.bias_post
        ));
    }
    out
}

/// `weights.csv`: the per-unit audit trail for the `G=1` rows.
pub fn weights_csv(ds: &DecompositionDataset, weights: &RmpwWeights) -> String {
    let mut out = String::from("row,z,y,e1_hat,e0_hat,weight\n");
    for (k, &i) in weights.unit_ids.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i,
            ds.z()[i],
            ds.y()[i],
            weights.e1_hat[k],
            weights.e0_hat[k],
            weights.w[k]
        ));
    }
    out
}

/// `replicates.csv`: per-replicate extrema for audit.
pub fn replicates_csv(result: &crate::bootstrap::BootstrapResult) -> String {
    let mut out = String::from("replicate,mu_lower,mu_upper,mu1,mu0\n");
    for k in 0..result.replicate_lowers.len() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            k,
            result.replicate_lowers[k],
            result.replicate_uppers[k],
            result.replicate_mu1[k],
            result.replicate_mu0[k]
        ));
    }
    out
}
