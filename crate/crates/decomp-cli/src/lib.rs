//! Command implementations behind the `decomp` binary.
//!
//! One TOML configuration drives every command; command-line flags override
//! individual keys before anything runs, and the SHA-256 of the effective
//! configuration is stamped into the report. Commands build their artifacts
//! fully in memory as (filename, content) pairs and write them in one pass,
//! so a rerun with the same config and seed reproduces every file
//! byte-for-byte.
//!
//! The pipelines nest: `decompose` loads, fits, and summarizes the
//! decomposition with bootstrap intervals at `Λ = 1`; `sensitivity` adds
//! the `Λ`-grid bounds, the critical parameters (point and CI, both
//! estimands), and the equivalence-test table; `calibrate` adds the
//! per-covariate calibration table and the killer-confounder contour.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use decomp_core::amplification::{
    calibrate, contour_grid, max_bias, top_bias_covariates, CalibrationMode,
};
use decomp_core::bootstrap::{resample_ensemble, BootstrapEnsemble};
use decomp_core::config::{AnalysisConfig, EstimandChoice};
use decomp_core::dataset::{exclude_rows, filter_rows, standardize_covariates, RowFilter};
use decomp_core::decomposition::{decompose, DecompositionEstimate};
use decomp_core::error::{Error, Result};
use decomp_core::plot::render_contour_svg;
use decomp_core::report::{
    calibration_csv, lambda_grid_csv, weights_csv, AnalysisReport, CalibrationReport, ContourMeta,
    CriticalSet, CriticalValue, DecompositionReport, EquivalenceRow, EstimateWithCi, LambdaRow,
    LoadSummary, RunMeta, SensitivityReport, WeightDiagnostics,
};
use decomp_core::sensitivity::{
    bounds_over_lambda, critical_lambda, equivalence_critical_lambda, CriticalLambda, Estimand,
};
use decomp_core::synthetic::generate;
use decomp_core::weights::{compute_rmpw, GroupPropensities, RmpwWeights};
use decomp_core::{fit_group_propensities, load_csv, DecompositionDataset};

/// Flag-level overrides of configuration keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub bootstrap_b: Option<usize>,
    pub alpha: Option<f64>,
    pub lambda_max: Option<f64>,
    pub eta: Option<Vec<f64>>,
    pub no_allowability: bool,
    pub exclude: Option<String>,
    pub emit_weights: bool,
    pub out_dir: Option<PathBuf>,
}

/// Apply flag overrides onto the parsed config, then revalidate.
pub fn apply_overrides(cfg: &mut AnalysisConfig, overrides: &Overrides) -> Result<()> {
    if let Some(seed) = overrides.seed {
        cfg.bootstrap.seed = seed;
        if let Some(sim) = cfg.simulate.as_mut() {
            sim.seed = seed;
        }
    }
    if let Some(b) = overrides.bootstrap_b {
        cfg.bootstrap.replicates = b;
    }
    if let Some(alpha) = overrides.alpha {
        cfg.bootstrap.alpha = alpha;
    }
    if let Some(lambda_max) = overrides.lambda_max {
        cfg.sensitivity.lambda_max = lambda_max;
    }
    if let Some(eta) = &overrides.eta {
        cfg.sensitivity.eta = eta.clone();
    }
    if overrides.no_allowability {
        cfg.design.allowability = false;
    }
    if let Some(expr) = &overrides.exclude {
        let data = cfg.data.as_mut().ok_or_else(|| Error::Config {
            message: "--exclude needs a [data] section in the config".into(),
        })?;
        data.exclude = Some(expr.clone());
    }
    if overrides.emit_weights {
        cfg.output.emit_weights = true;
    }
    if let Some(dir) = &overrides.out_dir {
        cfg.output.dir = dir.clone();
    }
    cfg.validate()
}

/// Output files of one command, built fully in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
}

impl Artifacts {
    /// Write every file under `dir`, creating it if needed. Returns the
    /// paths written.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
        let mut paths = Vec::with_capacity(self.files.len());
        for (name, content) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, content).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            paths.push(path);
        }
        Ok(paths)
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_str())
    }
}

/// Loaded, optionally filtered and standardized data plus its accounting.
pub struct PreparedData {
    pub ds: DecompositionDataset,
    pub load: LoadSummary,
}

/// Load the CSV named by the config, apply the exclusion filter on raw
/// values, then standardize covariates if configured.
pub fn load_and_prepare(cfg: &AnalysisConfig) -> Result<PreparedData> {
    let data = cfg.data_section()?;
    let (mut ds, report) = load_csv(&data.path, &data.schema())?;
    let mut load = LoadSummary::new(&report);
    if let Some(expr) = &data.exclude {
        let filter = RowFilter::parse(expr)?;
        let before = ds.n();
        ds = exclude_rows(&ds, &filter)?;
        load.exclude_filter = Some(expr.clone());
        load.rows_excluded = Some(before - ds.n());
    }
    if data.standardize {
        ds = standardize_covariates(&ds)?;
    }
    Ok(PreparedData { ds, load })
}

fn run_meta(cfg: &AnalysisConfig, command: &str, ds: &DecompositionDataset) -> RunMeta {
    RunMeta {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config_sha256: cfg.sha256(),
        seed: cfg.bootstrap.seed,
        bootstrap_replicates: cfg.bootstrap.replicates,
        alpha: cfg.bootstrap.alpha,
        allowability: cfg.design.allowability,
        interactions: cfg.design.interactions,
        n_rows: ds.n(),
        n_group1: ds.rows_with_g(1).len(),
    }
}

/// Everything the analysis commands share: fitted models, weights, the
/// decomposition, and the bootstrap ensemble.
pub struct FittedAnalysis {
    pub gp: GroupPropensities,
    pub weights: RmpwWeights,
    pub estimate: DecompositionEstimate,
    pub ensemble: BootstrapEnsemble,
}

pub fn fit_analysis(cfg: &AnalysisConfig, ds: &DecompositionDataset) -> Result<FittedAnalysis> {
    let mode = cfg.design.allowability_mode();
    let gp = fit_group_propensities(ds, cfg.design.interactions, mode)?;
    let weights = compute_rmpw(ds, &gp)?;
    let estimate = decompose(ds, &weights)?;
    let ensemble = resample_ensemble(
        ds,
        cfg.design.interactions,
        mode,
        &cfg.bootstrap.to_config()?,
    )?;
    Ok(FittedAnalysis {
        gp,
        weights,
        estimate,
        ensemble,
    })
}

fn decomposition_report(fit: &FittedAnalysis) -> DecompositionReport {
    let summaries = fit.ensemble.decomposition_summaries();
    let est = fit.estimate;
    DecompositionReport {
        mu1: est.mu1,
        mu0: est.mu0,
        mu_r0: est.mu_r0_hat,
        tau: EstimateWithCi::new(est.tau, summaries.tau),
        reduction: EstimateWithCi::new(est.reduction, summaries.reduction),
        residual: EstimateWithCi::new(est.residual, summaries.residual),
        weights: WeightDiagnostics::new(&fit.weights),
        failed_bootstrap_replicates: fit.ensemble.failed_replicates(),
    }
}

fn critical_value(crit: &CriticalLambda) -> CriticalValue {
    CriticalValue {
        value: crit.value,
        threshold: crit.threshold,
        lambda_max: crit.bracket.1,
        tolerance: crit.tolerance,
    }
}

fn sensitivity_report(
    cfg: &AnalysisConfig,
    ds: &DecompositionDataset,
    fit: &FittedAnalysis,
) -> Result<SensitivityReport> {
    let grid = cfg.sensitivity.grid();
    let bounds = bounds_over_lambda(ds, &fit.weights, &grid)?;
    let lambda_grid: Vec<LambdaRow> = bounds.iter().map(LambdaRow::from).collect();

    let bracket = cfg.sensitivity.bracket();
    let tol = cfg.sensitivity.bisection_tol;
    let critical = CriticalSet {
        reduction_point: critical_value(&critical_lambda(
            ds,
            &fit.weights,
            Estimand::Reduction,
            0.0,
            bracket,
            tol,
        )?),
        reduction_ci: critical_value(&fit.ensemble.critical_lambda_ci(
            Estimand::Reduction,
            0.0,
            bracket,
            tol,
        )?),
        residual_point: critical_value(&critical_lambda(
            ds,
            &fit.weights,
            Estimand::Residual,
            0.0,
            bracket,
            tol,
        )?),
        residual_ci: critical_value(&fit.ensemble.critical_lambda_ci(
            Estimand::Residual,
            0.0,
            bracket,
            tol,
        )?),
    };

    let mut equivalence = Vec::with_capacity(cfg.sensitivity.eta.len());
    for &eta in &cfg.sensitivity.eta {
        equivalence.push(EquivalenceRow {
            eta,
            point: equivalence_critical_lambda(ds, &fit.weights, eta, bracket, tol)?.value,
            ci: fit
                .ensemble
                .equivalence_critical_lambda_ci(eta, bracket, tol)?
                .value,
        });
    }

    Ok(SensitivityReport {
        lambda_grid,
        critical,
        equivalence,
    })
}

fn push_weights_if_requested(
    cfg: &AnalysisConfig,
    ds: &DecompositionDataset,
    fit: &FittedAnalysis,
    files: &mut Vec<(String, String)>,
) {
    if cfg.output.emit_weights {
        files.push(("weights.csv".into(), weights_csv(ds, &fit.weights)));
    }
}

/// Point estimates, bootstrap SDs, and percentile CIs at `Λ = 1`.
pub fn cmd_decompose(cfg: &AnalysisConfig) -> Result<Artifacts> {
    let prepared = load_and_prepare(cfg)?;
    let fit = fit_analysis(cfg, &prepared.ds)?;
    let mut report = AnalysisReport::new(run_meta(cfg, "decompose", &prepared.ds), prepared.load);
    report.decomposition = Some(decomposition_report(&fit));

    let mut files = vec![("report.json".to_string(), report.to_json())];
    push_weights_if_requested(cfg, &prepared.ds, &fit, &mut files);
    Ok(Artifacts { files })
}

/// Decomposition plus `Λ`-grid bounds, critical parameters, and the
/// equivalence table.
pub fn cmd_sensitivity(cfg: &AnalysisConfig) -> Result<Artifacts> {
    let prepared = load_and_prepare(cfg)?;
    let fit = fit_analysis(cfg, &prepared.ds)?;
    let sens = sensitivity_report(cfg, &prepared.ds, &fit)?;

    let mut report = AnalysisReport::new(run_meta(cfg, "sensitivity", &prepared.ds), prepared.load);
    report.decomposition = Some(decomposition_report(&fit));
    let grid_csv = lambda_grid_csv(&sens.lambda_grid);
    report.sensitivity = Some(sens);

    let mut files = vec![
        ("report.json".to_string(), report.to_json()),
        ("lambda_grid.csv".to_string(), grid_csv),
    ];
    push_weights_if_requested(cfg, &prepared.ds, &fit, &mut files);
    Ok(Artifacts { files })
}

fn estimand_of(choice: EstimandChoice) -> (Estimand, &'static str) {
    match choice {
        EstimandChoice::Reduction => (Estimand::Reduction, "reduction"),
        EstimandChoice::Residual => (Estimand::Residual, "residual"),
    }
}

/// Full pipeline: sensitivity plus the calibration table and contour plot.
pub fn cmd_calibrate(cfg: &AnalysisConfig) -> Result<Artifacts> {
    let prepared = load_and_prepare(cfg)?;
    let fit = fit_analysis(cfg, &prepared.ds)?;
    let sens = sensitivity_report(cfg, &prepared.ds, &fit)?;

    let (estimand, estimand_name) = estimand_of(cfg.amplification.estimand);
    let bracket = cfg.sensitivity.bracket();
    let tol = cfg.sensitivity.bisection_tol;
    let crit = critical_lambda(&prepared.ds, &fit.weights, estimand, 0.0, bracket, tol)?;
    let lambda_star = crit.value.ok_or_else(|| Error::Config {
        message: format!(
            "the {estimand_name} point estimate never crosses 0 below lambda_max = {}; raise --lambda-max",
            bracket.1
        ),
    })?;
    let bounds_at_star = bounds_over_lambda(&prepared.ds, &fit.weights, &[lambda_star])?[0];
    let critical_bias = max_bias(&bounds_at_star, fit.estimate.mu_r0_hat);
    if critical_bias <= 0.0 {
        return Err(Error::Config {
            message: format!(
                "the {estimand_name} point estimate already crosses 0 at lambda = 1; \
                 every confounder is a killer confounder and no contour exists"
            ),
        });
    }

    let mode = if cfg.amplification.leave_one_out {
        CalibrationMode::LeaveOneOut
    } else {
        CalibrationMode::PlugIn
    };
    let (points, excluded) = calibrate(&prepared.ds, &fit.gp, mode)?;
    let grid = contour_grid(
        critical_bias,
        &points,
        cfg.amplification.resolution,
        cfg.amplification.axis_limits(),
    )?;
    let mut title = String::new();
    write!(
        title,
        "{estimand_name}: killer confounders beyond bias {critical_bias:.4} (lambda* = {lambda_star:.3})"
    )
    .expect("write to string");
    let svg = render_contour_svg(&grid, &points, &title);

    let calibration = CalibrationReport {
        estimand: estimand_name.to_string(),
        critical_lambda: lambda_star,
        critical_bias,
        top_covariates: top_bias_covariates(&points, 3),
        points: points.clone(),
        excluded_covariates: excluded,
        contour: ContourMeta {
            delta_max: *grid.delta_axis.last().unwrap(),
            beta_max: *grid.beta_axis.last().unwrap(),
            resolution: cfg.amplification.resolution,
        },
    };

    let mut report = AnalysisReport::new(run_meta(cfg, "calibrate", &prepared.ds), prepared.load);
    report.decomposition = Some(decomposition_report(&fit));
    let grid_csv = lambda_grid_csv(&sens.lambda_grid);
    report.sensitivity = Some(sens);
    report.calibration = Some(calibration);

    let mut files = vec![
        ("report.json".to_string(), report.to_json()),
        ("lambda_grid.csv".to_string(), grid_csv),
        ("calibration.csv".to_string(), calibration_csv(&points)),
        ("contour.svg".to_string(), svg),
    ];
    push_weights_if_requested(cfg, &prepared.ds, &fit, &mut files);
    Ok(Artifacts { files })
}

#[derive(Serialize)]
struct TruthSidecar<'a> {
    config: &'a decomp_core::synthetic::DgpConfig,
    truth: &'a decomp_core::synthetic::SyntheticTruth,
}

/// Generate a synthetic dataset and its truth sidecar.
pub fn cmd_simulate(cfg: &AnalysisConfig) -> Result<Artifacts> {
    let sim = cfg.simulate_section()?;
    let data = generate(sim)?;
    let mut truth_json = serde_json::to_string_pretty(&TruthSidecar {
        config: sim,
        truth: &data.truth,
    })
    .expect("truth serializes");
    truth_json.push('\n');
    Ok(Artifacts {
        files: vec![
            ("synthetic.csv".to_string(), data.dataset.to_csv_string()),
            ("truth.json".to_string(), truth_json),
        ],
    })
}

/// Apply a row filter to the raw data and write the filtered dataset for
/// chaining into any analysis command. `keep` retains matching rows; the
/// config/flag exclusion drops them. Covariates are left unstandardized.
pub fn cmd_filter(cfg: &AnalysisConfig, keep: Option<&str>) -> Result<Artifacts> {
    let data = cfg.data_section()?;
    let (mut ds, report) = load_csv(&data.path, &data.schema())?;
    let mut load = LoadSummary::new(&report);
    if let Some(expr) = &data.exclude {
        let filter = RowFilter::parse(expr)?;
        let before = ds.n();
        ds = exclude_rows(&ds, &filter)?;
        load.exclude_filter = Some(expr.clone());
        load.rows_excluded = Some(before - ds.n());
    }
    if let Some(expr) = keep {
        let filter = RowFilter::parse(expr)?;
        ds = filter_rows(&ds, &filter)?;
    }
    if load.exclude_filter.is_none() && keep.is_none() {
        return Err(Error::Config {
            message: "filter needs --exclude or --keep (or an exclude key in [data])".into(),
        });
    }

    let mut summary_json = serde_json::to_string_pretty(&load).expect("summary serializes");
    summary_json.push('\n');
    Ok(Artifacts {
        files: vec![
            ("filtered.csv".to_string(), ds.to_csv_string()),
            ("filter_report.json".to_string(), summary_json),
        ],
    })
}
