//! Two-parameter amplification of the sensitivity model: impact `β_u`,
//! imbalance `δ_u`, the maximum-bias bound, the killer-confounder region,
//! and calibration points from observed covariates.
//!
//! Under the linear working models, the bias of the weighted estimator
//! against the true counterfactual mean factors as `β_u · δ_u`: a
//! confounder's effect on the outcome times its weighted imbalance. A
//! one-dimensional `Λ` therefore maps to a hyperbola `β · δ = bias(Λ)` in
//! the impact/imbalance plane; everything above it (the killer region) is
//! strong enough to overturn the conclusion at that `Λ`.
//!
//! Calibration treats each observed covariate in turn as if it were the
//! unmeasured confounder: its impact is its multiple-regression coefficient
//! within `G=1` (all covariates standardized), and its imbalance is
//! reported twice: the raw pre-weighting mean difference between the
//! `G=1` and exposed-`G=1` groups, and the post-weighting plug-in
//!
//! ```text
//!   δ_u = mean over G=1 of ((e0-e1)/(1-e1)) (u - z u / e1)
//! ```
//!
//! which algebraically equals `mean((1 - w) u)` with the same fitted
//! propensities. Pre-weighting points are the pessimistic benchmark (raw
//! imbalance), post-weighting points the optimistic one.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::dataset::DecompositionDataset;
use crate::error::{Error, Result};
use crate::sensitivity::SensitivityBounds;
use crate::weights::{compute_rmpw, fit_group_propensities, GroupPropensities};

/// One observed covariate viewed as a hypothetical unmeasured confounder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationPoint {
    pub covariate: String,
    /// Multiple-regression coefficient of the standardized covariate in the
    /// within-`G=1` outcome regression.
    pub beta_u: f64,
    /// Raw standardized mean difference: `mean(u | G=1) - mean(u | G=1, Z=1)`.
    pub delta_pre: f64,
    /// Weighted-imbalance plug-in from the fitted propensities.
    pub delta_post: f64,
    pub bias_pre: f64,
    pub bias_post: f64,
}

/// How per-covariate imbalance is computed during calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CalibrationMode {
    /// Plug the full-model fitted propensities into the imbalance formula.
    PlugIn,
    /// Refit the propensity models without the covariate and use the
    /// reduced-model propensities, mimicking what omitting it would do to
    /// the weights.
    LeaveOneOut,
}

/// Outcome regression within `G=1`: `Y` on intercept, `Z`, and the listed
/// covariate columns. Returns coefficients in that column order.
fn within_g1_regression(
    ds: &DecompositionDataset,
    covariates: &[(&str, &[f64])],
) -> Result<Vec<f64>> {
    let rows = ds.rows_with_g(1);
    let p = 2 + covariates.len();
    if rows.len() <= p + 2 {
        return Err(Error::InsufficientRows { n: rows.len(), p });
    }
    let mut xtx = DMatrix::zeros(p, p);
    let mut xty = DVector::zeros(p);
    let mut row = vec![0.0f64; p];
    for &i in &rows {
        row[0] = 1.0;
        row[1] = f64::from(ds.z()[i]);
        for (k, (_, col)) in covariates.iter().enumerate() {
            row[2 + k] = col[i];
        }
        let yi = ds.y()[i];
        for a in 0..p {
            xty[a] += row[a] * yi;
            for b in a..p {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(a, b)] = xtx[(b, a)];
        }
    }
    let solution = Cholesky::new(xtx)
        .ok_or_else(|| Error::SingularSystem {
            context: "outcome regression within G=1".into(),
        })?
        .solve(&xty);
    Ok(solution.iter().copied().collect())
}

/// Impact of one covariate: its coefficient in the within-`G=1` multiple
/// regression of the outcome on intercept, exposure, and all covariates.
/// The dataset is expected to be standardized.
pub fn estimate_beta_u(ds: &DecompositionDataset, covariate: &str) -> Result<f64> {
    let names = ds.covariate_names();
    let position =
        names
            .iter()
            .position(|&c| c == covariate)
            .ok_or_else(|| Error::MissingColumn {
                column: covariate.to_string(),
            })?;
    let columns: Vec<(&str, &[f64])> = names
        .iter()
        .map(|&c| (c, ds.covariate_by_name(c).unwrap()))
        .collect();
    let coefs = within_g1_regression(ds, &columns)?;
    Ok(coefs[2 + position])
}

/// Pre-weighting imbalance: `mean(u | G=1) - mean(u | G=1, Z=1)`.
pub fn delta_u_pre(ds: &DecompositionDataset, u: &[f64]) -> Result<f64> {
    if u.len() != ds.n() {
        return Err(Error::DimensionMismatch {
            context: "covariate values".into(),
            expected: ds.n(),
            actual: u.len(),
        });
    }
    let mut sum_g1 = 0.0;
    let mut n_g1 = 0usize;
    let mut sum_g1z1 = 0.0;
    let mut n_g1z1 = 0usize;
    for ((&g, &z), &ui) in ds.g().iter().zip(ds.z()).zip(u) {
        if g == 1 {
            sum_g1 += ui;
            n_g1 += 1;
            if z == 1 {
                sum_g1z1 += ui;
                n_g1z1 += 1;
            }
        }
    }
    if n_g1 == 0 {
        return Err(Error::EmptyGroup { group: 1 });
    }
    if n_g1z1 == 0 {
        return Err(Error::CellTooSmall {
            g: 1,
            z: 1,
            count: 0,
            required: 1,
        });
    }
    Ok(sum_g1 / n_g1 as f64 - sum_g1z1 / n_g1z1 as f64)
}

fn delta_u_post_from_parts(e0: &[f64], e1: &[f64], z: &[u8], u: &[f64]) -> f64 {
    let n1 = u.len() as f64;
    e0.iter()
        .zip(e1)
        .zip(z.iter().zip(u))
        .map(|((&e0, &e1), (&z, &u))| (e0 - e1) / (1.0 - e1) * (u - f64::from(z) * u / e1))
        .sum::<f64>()
        / n1
}

/// Post-weighting imbalance plug-in over the `G=1` rows, using the fitted
/// group propensities.
pub fn delta_u_post(ds: &DecompositionDataset, gp: &GroupPropensities, u: &[f64]) -> Result<f64> {
    if u.len() != ds.n() {
        return Err(Error::DimensionMismatch {
            context: "covariate values".into(),
            expected: ds.n(),
            actual: u.len(),
        });
    }
    let weights = compute_rmpw(ds, gp)?;
    let u_g1: Vec<f64> = weights.unit_ids.iter().map(|&i| u[i]).collect();
    let z_g1: Vec<u8> = weights.unit_ids.iter().map(|&i| ds.z()[i]).collect();
    Ok(delta_u_post_from_parts(
        &weights.e0_hat,
        &weights.e1_hat,
        &z_g1,
        &u_g1,
    ))
}

/// Largest distance from the point estimate to either end of the bounds:
/// the maximum bias certified by the sensitivity model at that `Λ`.
pub fn max_bias(bounds: &SensitivityBounds, point: f64) -> f64 {
    (bounds.mu_lower - point)
        .abs()
        .max((bounds.mu_upper - point).abs())
}

/// One calibration point per usable covariate. Covariates constant within
/// `G=1` cannot enter the regression and are returned in the exclusion
/// list instead.
pub fn calibrate(
    ds: &DecompositionDataset,
    gp: &GroupPropensities,
    mode: CalibrationMode,
) -> Result<(Vec<CalibrationPoint>, Vec<String>)> {
    let rows_g1 = ds.rows_with_g(1);
    let names = ds.covariate_names();

    let mut usable: Vec<(&str, &[f64])> = Vec::new();
    let mut excluded: Vec<String> = Vec::new();
    for &name in &names {
        let col = ds.covariate_by_name(name).unwrap();
        let first = col[rows_g1[0]];
        if rows_g1.iter().all(|&i| col[i] == first) {
            excluded.push(name.to_string());
        } else {
            usable.push((name, col));
        }
    }
    if usable.is_empty() {
        return Ok((Vec::new(), excluded));
    }

    let coefs = within_g1_regression(ds, &usable)?;

    let weights = compute_rmpw(ds, gp)?;
    let z_g1: Vec<u8> = weights.unit_ids.iter().map(|&i| ds.z()[i]).collect();

    let mut points = Vec::with_capacity(usable.len());
    for (k, &(name, col)) in usable.iter().enumerate() {
        let beta_u = coefs[2 + k];
        let pre = delta_u_pre(ds, col)?;
        let u_g1: Vec<f64> = weights.unit_ids.iter().map(|&i| col[i]).collect();
        let post = match mode {
            CalibrationMode::PlugIn => {
                delta_u_post_from_parts(&weights.e0_hat, &weights.e1_hat, &z_g1, &u_g1)
            }
            CalibrationMode::LeaveOneOut => {
                let reduced = ds.without_covariate(name)?;
                let reduced_gp = fit_group_propensities(
                    &reduced,
                    gp.e1_spec().include_two_way_interactions,
                    gp.mode,
                )?;
                let reduced_weights = compute_rmpw(&reduced, &reduced_gp)?;
                delta_u_post_from_parts(
                    &reduced_weights.e0_hat,
                    &reduced_weights.e1_hat,
                    &z_g1,
                    &u_g1,
                )
            }
        };
        points.push(CalibrationPoint {
            covariate: name.to_string(),
            beta_u,
            delta_pre: pre,
            delta_post: post,
            bias_pre: (beta_u * pre).abs(),
            bias_post: (beta_u * post).abs(),
        });
    }
    Ok((points, excluded))
}

/// Names of the `count` covariates with the largest pre-weighting bias,
/// ties broken by input order.
pub fn top_bias_covariates(points: &[CalibrationPoint], count: usize) -> Vec<String> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[b].bias_pre.total_cmp(&points[a].bias_pre));
    order
        .into_iter()
        .take(count)
        .map(|i| points[i].covariate.clone())
        .collect()
}

/// Numeric contour data for the impact/imbalance plane.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContourGrid {
    /// `resolution + 1` points from 0 to the delta axis maximum.
    pub delta_axis: Vec<f64>,
    pub beta_axis: Vec<f64>,
    /// `bias[i][j] = beta_axis[i] * delta_axis[j]`.
    pub bias: Vec<Vec<f64>>,
    pub critical_bias: f64,
    /// `(delta, critical_bias / delta)` sampled at the positive delta grid
    /// points.
    pub killer_boundary: Vec<(f64, f64)>,
}

impl ContourGrid {
    /// Whether a `(delta, beta)` pair lies in the killer region.
    pub fn in_killer_region(&self, delta: f64, beta: f64) -> bool {
        beta * delta > self.critical_bias
    }
}

fn linspace(max: f64, intervals: usize) -> Vec<f64> {
    (0..=intervals)
        .map(|k| max * k as f64 / intervals as f64)
        .collect()
}

/// Build the bias grid and killer boundary.
///
/// Axes run from zero to 1.2 times the largest calibration point in each
/// dimension, unless explicit `(delta_max, beta_max)` limits are given.
/// `resolution` is the number of grid intervals per axis.
pub fn contour_grid(
    critical_bias: f64,
    calibration: &[CalibrationPoint],
    resolution: usize,
    axis_limits: Option<(f64, f64)>,
) -> Result<ContourGrid> {
    if !critical_bias.is_finite() || critical_bias <= 0.0 {
        return Err(Error::Config {
            message: format!("critical bias must be positive, got {critical_bias}"),
        });
    }
    if resolution == 0 {
        return Err(Error::Config {
            message: "contour resolution must be at least 1".into(),
        });
    }
    let (delta_max, beta_max) = match axis_limits {
        Some(limits) => limits,
        None => {
            let delta_max = calibration
                .iter()
                .map(|p| p.delta_pre.abs().max(p.delta_post.abs()))
                .fold(0.0f64, f64::max);
            let beta_max = calibration
                .iter()
                .map(|p| p.beta_u.abs())
                .fold(0.0f64, f64::max);
            (1.2 * delta_max, 1.2 * beta_max)
        }
    };
    if !(delta_max > 0.0 && beta_max > 0.0) {
        return Err(Error::EmptyContour);
    }

    let delta_axis = linspace(delta_max, resolution);
    let beta_axis = linspace(beta_max, resolution);
    let bias = beta_axis
        .iter()
        .map(|&b| delta_axis.iter().map(|&d| (b * d).abs()).collect())
        .collect();
    let killer_boundary = delta_axis
        .iter()
        .skip(1)
        .map(|&d| (d, critical_bias / d))
        .collect();

    Ok(ContourGrid {
        delta_axis,
        beta_axis,
        bias,
        critical_bias,
        killer_boundary,
    })
}
