//! Percentile-bootstrap confidence intervals for the shifted estimand and
//! bootstrap-based critical sensitivity parameters.
//!
//! Each replicate resamples the full dataset with replacement, refits both
//! propensity models, rebuilds the weights, and evaluates the
//! partial-identification extrema. The conservative interval assigns the
//! `α/2` quantile of the per-replicate minima and the `1-α/2` quantile of
//! the per-replicate maxima.
//!
//! Two structural choices matter for reproducibility and for the
//! critical-`Λ` search:
//!
//! - **Counter-based substreams.** Replicate `r` draws its resample indices
//!   from a ChaCha stream keyed by `(seed, r)`, so the full set of indices
//!   is a pure function of `(seed, B, n)` and identical under any parallel
//!   execution order.
//! - **Common random numbers across `Λ`.** Resampling and refitting do not
//!   depend on `Λ` at all, so one ensemble of fitted replicates serves every
//!   `Λ`. Per-replicate extrema are then pointwise monotone in `Λ`, the CI
//!   endpoints inherit that monotonicity, and bisection on the crossing
//!   point is well-posed.
//!
//! Replicates whose propensity fit fails (separation, an empty or too-small
//! cell, a singular system) are dropped and counted; more than 10% failures
//! aborts with diagnostics rather than silently reporting a fragile
//! interval.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::DecompositionDataset;
use crate::decomposition::observed_disparity;
use crate::error::{Error, Result};
use crate::sensitivity::{
    bisect_coverage, CriticalLambda, CriticalTarget, Estimand, ExtremaSolver,
};
use crate::weights::{compute_rmpw, fit_group_propensities, AllowabilityMode};

/// Fraction of replicates allowed to fail before the run aborts.
const MAX_FAILURE_FRACTION: f64 = 0.10;
const COVERAGE_SLACK: f64 = 1e-12;

/// Bootstrap settings. Defaults: `B = 1000`, `alpha = 0.05`, unstratified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Resample within each group separately, preserving group sizes.
    pub stratified: bool,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, alpha: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            replicates,
            alpha,
            seed,
            stratified: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::Config {
                message: format!(
                    "bootstrap needs at least 2 replicates, got {}",
                    self.replicates
                ),
            });
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config {
                message: format!("alpha must lie in (0, 1), got {}", self.alpha),
            });
        }
        Ok(())
    }
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            alpha: 0.05,
            seed: 0,
            stratified: false,
        }
    }
}

/// Linear-interpolation order-statistic quantile (the R type-7 rule) over a
/// sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let h = (m - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= m {
        sorted[m - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Sort a copy and take the quantile.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

fn sample_sd(values: &[f64]) -> f64 {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
}

/// Resample indices for replicate `r` under seed `seed`.
///
/// The generator is a ChaCha stream keyed by the seed with the replicate
/// index as the stream id, so replicate draws are independent and
/// order-free.
pub fn replicate_indices(
    seed: u64,
    replicate: usize,
    ds: &DecompositionDataset,
    stratified: bool,
) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    let n = ds.n();
    if !stratified {
        return (0..n).map(|_| rng.random_range(0..n)).collect();
    }
    let mut indices = Vec::with_capacity(n);
    for group in [0u8, 1u8] {
        let rows = ds.rows_with_g(group);
        indices.extend((0..rows.len()).map(|_| rows[rng.random_range(0..rows.len())]));
    }
    indices
}

/// One successful replicate: fitted extrema state plus its group means.
#[derive(Debug, Clone)]
struct Replicate {
    solver: ExtremaSolver,
    mu1: f64,
    mu0: f64,
}

/// A full set of fitted bootstrap replicates, reusable across `Λ` values.
#[derive(Debug, Clone)]
pub struct BootstrapEnsemble {
    replicates: Vec<Replicate>,
    failed: usize,
    total: usize,
    alpha: f64,
    /// Point estimates on the original (unresampled) data.
    full_mu1: f64,
    full_mu0: f64,
}

fn failure_category(e: &Error) -> &'static str {
    match e {
        Error::PropensityModel { source, .. } => failure_category(source),
        Error::Separation { .. } => "separation",
        Error::CellTooSmall { .. } | Error::CellCounts { .. } | Error::EmptyGroup { .. } => {
            "empty-or-small-cell"
        }
        Error::SingularSystem { .. } | Error::InsufficientRows { .. } => "singular-design",
        Error::ConstantResponse => "constant-response",
        _ => "other",
    }
}

/// Resample and refit `cfg.replicates` replicates.
pub fn resample_ensemble(
    ds: &DecompositionDataset,
    interactions: bool,
    mode: AllowabilityMode,
    cfg: &BootstrapConfig,
) -> Result<BootstrapEnsemble> {
    cfg.validate()?;
    let (full_mu1, full_mu0, _) = observed_disparity(ds)?;

    let outcomes: Vec<std::result::Result<Replicate, Error>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let indices = replicate_indices(cfg.seed, r, ds, cfg.stratified);
            let sample = ds.select_rows(&indices);
            let (mu1, mu0, _) = observed_disparity(&sample)?;
            let gp = fit_group_propensities(&sample, interactions, mode)?;
            let weights = compute_rmpw(&sample, &gp)?;
            let solver = ExtremaSolver::from_weights(&sample, &weights)?;
            Ok(Replicate { solver, mu1, mu0 })
        })
        .collect();

    let mut replicates = Vec::with_capacity(cfg.replicates);
    let mut categories: Vec<(&'static str, usize)> = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(rep) => replicates.push(rep),
            Err(e) => {
                let cat = failure_category(&e);
                match categories.iter_mut().find(|(c, _)| *c == cat) {
                    Some((_, count)) => *count += 1,
                    None => categories.push((cat, 1)),
                }
            }
        }
    }

    let failed = cfg.replicates - replicates.len();
    if failed as f64 > MAX_FAILURE_FRACTION * cfg.replicates as f64 {
        let detail = categories
            .iter()
            .map(|(c, k)| format!("{k} {c}"))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(Error::BootstrapFailures {
            failed,
            total: cfg.replicates,
            detail,
        });
    }

    Ok(BootstrapEnsemble {
        replicates,
        failed,
        total: cfg.replicates,
        alpha: cfg.alpha,
        full_mu1,
        full_mu0,
    })
}

/// Percentile-bootstrap interval for the shifted counterfactual mean at one
/// `Λ`, holding the per-replicate extrema.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub lambda: f64,
    pub replicate_lowers: Vec<f64>,
    pub replicate_uppers: Vec<f64>,
    pub replicate_mu1: Vec<f64>,
    pub replicate_mu0: Vec<f64>,
    /// `Q_{α/2}` of the replicate minima.
    pub lower: f64,
    /// `Q_{1-α/2}` of the replicate maxima.
    pub upper: f64,
    pub failed_replicates: usize,
}

/// Bootstrap SD and percentile CI of a replicate statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateSummary {
    pub sd: f64,
    pub ci: (f64, f64),
}

/// Point-estimator summaries at `Λ = 1` for the decomposition table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionSummaries {
    pub tau: EstimateSummary,
    pub reduction: EstimateSummary,
    pub residual: EstimateSummary,
    pub mu_r0: EstimateSummary,
}

impl BootstrapEnsemble {
    pub fn failed_replicates(&self) -> usize {
        self.failed
    }

    pub fn total_replicates(&self) -> usize {
        self.total
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Extrema interval at one `Λ`.
    pub fn result_at(&self, lambda: f64) -> Result<BootstrapResult> {
        let mut lowers = Vec::with_capacity(self.replicates.len());
        let mut uppers = Vec::with_capacity(self.replicates.len());
        let mut mu1 = Vec::with_capacity(self.replicates.len());
        let mut mu0 = Vec::with_capacity(self.replicates.len());
        for rep in &self.replicates {
            lowers.push(rep.solver.minimum(lambda)?);
            uppers.push(rep.solver.maximum(lambda)?);
            mu1.push(rep.mu1);
            mu0.push(rep.mu0);
        }
        let lower = quantile(&lowers, self.alpha / 2.0);
        let upper = quantile(&uppers, 1.0 - self.alpha / 2.0);
        Ok(BootstrapResult {
            lambda,
            replicate_lowers: lowers,
            replicate_uppers: uppers,
            replicate_mu1: mu1,
            replicate_mu0: mu0,
            lower,
            upper,
            failed_replicates: self.failed,
        })
    }

    fn summarize(&self, values: &[f64]) -> EstimateSummary {
        EstimateSummary {
            sd: sample_sd(values),
            ci: (
                quantile(values, self.alpha / 2.0),
                quantile(values, 1.0 - self.alpha / 2.0),
            ),
        }
    }

    /// SDs and CIs of the point estimators (`Λ = 1` statistics).
    pub fn decomposition_summaries(&self) -> DecompositionSummaries {
        let points: Vec<f64> = self
            .replicates
            .iter()
            .map(|r| r.solver.point_estimate())
            .collect();
        let tau: Vec<f64> = self.replicates.iter().map(|r| r.mu1 - r.mu0).collect();
        let reduction: Vec<f64> = self
            .replicates
            .iter()
            .zip(&points)
            .map(|(r, p)| r.mu1 - p)
            .collect();
        let residual: Vec<f64> = self
            .replicates
            .iter()
            .zip(&points)
            .map(|(r, p)| p - r.mu0)
            .collect();
        DecompositionSummaries {
            tau: self.summarize(&tau),
            reduction: self.summarize(&reduction),
            residual: self.summarize(&residual),
            mu_r0: self.summarize(&points),
        }
    }

    /// Conservative CI of a decomposition estimand at one `Λ`, built from
    /// each replicate's own group means.
    pub fn estimand_ci(&self, lambda: f64, estimand: Estimand) -> Result<(f64, f64)> {
        let mut lo = Vec::with_capacity(self.replicates.len());
        let mut hi = Vec::with_capacity(self.replicates.len());
        for rep in &self.replicates {
            let min = rep.solver.minimum(lambda)?;
            let max = rep.solver.maximum(lambda)?;
            match estimand {
                Estimand::Reduction => {
                    lo.push(rep.mu1 - max);
                    hi.push(rep.mu1 - min);
                }
                Estimand::Residual => {
                    lo.push(min - rep.mu0);
                    hi.push(max - rep.mu0);
                }
            }
        }
        Ok((
            quantile(&lo, self.alpha / 2.0),
            quantile(&hi, 1.0 - self.alpha / 2.0),
        ))
    }

    fn ci_covers(&self, lambda: f64, estimand: Estimand, threshold: f64) -> Result<bool> {
        let (lo, hi) = self.estimand_ci(lambda, estimand)?;
        Ok(lo - COVERAGE_SLACK <= threshold && threshold <= hi + COVERAGE_SLACK)
    }

    /// Smallest `Λ` at which the estimand's bootstrap CI reaches
    /// `threshold`.
    pub fn critical_lambda_ci(
        &self,
        estimand: Estimand,
        threshold: f64,
        bracket: (f64, f64),
        tol: f64,
    ) -> Result<CriticalLambda> {
        let value = bisect_coverage(
            |lambda| self.ci_covers(lambda, estimand, threshold),
            bracket,
            tol,
        )?;
        Ok(CriticalLambda {
            target: CriticalTarget::BootstrapCi,
            estimand,
            threshold,
            value,
            bracket,
            tolerance: tol,
        })
    }

    /// Bootstrap-CI version of the equivalence test; `eta = 1` reduces to
    /// the residual zero-crossing exactly, through the same code path.
    pub fn equivalence_critical_lambda_ci(
        &self,
        eta: f64,
        bracket: (f64, f64),
        tol: f64,
    ) -> Result<CriticalLambda> {
        if !eta.is_finite() || eta <= 0.0 || eta > 1.0 {
            return Err(Error::InvalidEta { eta });
        }
        let tau = self.full_mu1 - self.full_mu0;
        if tau == 0.0 {
            return Err(Error::ZeroTau);
        }
        if eta == 1.0 {
            return self.critical_lambda_ci(Estimand::Residual, 0.0, bracket, tol);
        }
        self.critical_lambda_ci(Estimand::Reduction, eta * tau, bracket, tol)
    }
}

/// Resample, refit, and compute the conservative interval at one `Λ`.
pub fn percentile_bootstrap(
    ds: &DecompositionDataset,
    interactions: bool,
    mode: AllowabilityMode,
    cfg: &BootstrapConfig,
    lambda: f64,
) -> Result<BootstrapResult> {
    resample_ensemble(ds, interactions, mode, cfg)?.result_at(lambda)
}

/// Resample, refit, and bisect for the `Λ` where the estimand's CI reaches
/// `threshold`.
#[allow(clippy::too_many_arguments)]
pub fn critical_lambda_ci(
    ds: &DecompositionDataset,
    interactions: bool,
    mode: AllowabilityMode,
    cfg: &BootstrapConfig,
    estimand: Estimand,
    threshold: f64,
    bracket: (f64, f64),
    tol: f64,
) -> Result<CriticalLambda> {
    resample_ensemble(ds, interactions, mode, cfg)?
        .critical_lambda_ci(estimand, threshold, bracket, tol)
}
