//! Group propensity models and ratio-of-mediator-probability weights.
//!
//! Two logistic models are fit: `e1` on the `G=1` rows predicting exposure
//! from all covariates, and `e0` on the `G=0` rows. Under the allowability
//! partition (the default) the `e0` model conditions on allowable covariates
//! only, so the counterfactual exposure distribution is equalized within
//! levels of allowable covariates and across everything else. With
//! allowability off, `e0` conditions on the full covariate set.
//!
//! Each `G=1` unit then gets the weight
//!
//! ```text
//!   w = (e0/e1) Z + ((1-e0)/(1-e1)) (1-Z)
//! ```
//!
//! which reweights observed `G=1` outcomes to the exposure distribution the
//! `G=0` policy would have assigned them. Weights are never truncated beyond
//! the probability clipping in the logistic module; extreme-weight
//! diagnostics (max weight, effective sample size) are surfaced instead.

use serde::Serialize;

use crate::dataset::DecompositionDataset;
use crate::error::{Error, Result};
use crate::logistic::{
    build_design, fit_on_rows, CovariateSelection, DesignSpec, PropensityModel, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};

/// Whether the `e0` model conditions on allowable covariates only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AllowabilityMode {
    /// `e0` is fit on the allowable block only (`e_{0a}`). The default.
    On,
    /// `e0` is fit on all covariates, mirroring the unrestricted estimand.
    Off,
}

impl AllowabilityMode {
    fn e0_selection(self) -> CovariateSelection {
        match self {
            AllowabilityMode::On => CovariateSelection::AllowableOnly,
            AllowabilityMode::Off => CovariateSelection::AllCovariates,
        }
    }
}

/// The pair of fitted group propensity models.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPropensities {
    /// Exposure model on `G=1` rows, all covariates.
    pub model_e1: PropensityModel,
    /// Exposure model on `G=0` rows; allowable-only when `mode` is `On`.
    pub model_e0: PropensityModel,
    pub mode: AllowabilityMode,
}

impl GroupPropensities {
    pub fn e1_spec(&self) -> DesignSpec {
        self.model_e1.design
    }

    pub fn e0_spec(&self) -> DesignSpec {
        self.model_e0.design
    }
}

/// Per-unit RMPW weights for the `G=1` rows, with the component
/// propensities retained for diagnostics and the amplification module.
#[derive(Debug, Clone, PartialEq)]
pub struct RmpwWeights {
    /// Dataset row indices of the `G=1` units, ascending.
    pub unit_ids: Vec<usize>,
    pub w: Vec<f64>,
    pub e1_hat: Vec<f64>,
    pub e0_hat: Vec<f64>,
    /// Number of predicted probabilities that hit the clipping bounds.
    pub clip_events: usize,
}

impl RmpwWeights {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn max_weight(&self) -> f64 {
        self.w.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_weight(&self) -> f64 {
        self.w.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Kish effective sample size `(Σw)² / Σw²`.
    pub fn effective_sample_size(&self) -> f64 {
        let sum: f64 = self.w.iter().sum();
        let sum_sq: f64 = self.w.iter().map(|w| w * w).sum();
        if sum_sq == 0.0 {
            0.0
        } else {
            sum * sum / sum_sq
        }
    }
}

/// Fit both group propensity models.
///
/// Requires every `(g, z)` cell to hold at least `p + 2` rows, where `p` is
/// the width of the design the cell's model uses; below that, the logistic
/// MLE is degenerate too often to be trusted. Errors are labeled with the
/// model (`e1` or `e0`) that failed.
pub fn fit_group_propensities(
    ds: &DecompositionDataset,
    interactions: bool,
    mode: AllowabilityMode,
) -> Result<GroupPropensities> {
    let e1_spec = DesignSpec::new(CovariateSelection::AllCovariates, interactions);
    let e0_spec = DesignSpec::new(mode.e0_selection(), interactions);

    let counts = ds.cell_counts();
    let required_e0 = e0_spec.width(ds) + 2;
    let required_e1 = e1_spec.width(ds) + 2;
    for (idx, required, which) in [
        (0usize, required_e0, "e0"),
        (1, required_e0, "e0"),
        (2, required_e1, "e1"),
        (3, required_e1, "e1"),
    ] {
        if counts[idx] < required {
            return Err(Error::PropensityModel {
                which: which.into(),
                source: Box::new(Error::CellTooSmall {
                    g: (idx / 2) as u8,
                    z: (idx % 2) as u8,
                    count: counts[idx],
                    required,
                }),
            });
        }
    }

    fn label(which: &'static str) -> impl Fn(Error) -> Error {
        move |e| Error::PropensityModel {
            which: which.into(),
            source: Box::new(e),
        }
    }

    let design_e1 = build_design(ds, &e1_spec).map_err(label("e1"))?;
    let design_e0 = build_design(ds, &e0_spec).map_err(label("e0"))?;
    let rows_g1 = ds.rows_with_g(1);
    let rows_g0 = ds.rows_with_g(0);

    let model_e1 = fit_on_rows(
        &design_e1,
        &e1_spec,
        &rows_g1,
        ds.z(),
        DEFAULT_TOL,
        DEFAULT_MAX_ITER,
    )
    .map_err(label("e1"))?;
    let model_e0 = fit_on_rows(
        &design_e0,
        &e0_spec,
        &rows_g0,
        ds.z(),
        DEFAULT_TOL,
        DEFAULT_MAX_ITER,
    )
    .map_err(label("e0"))?;

    Ok(GroupPropensities {
        model_e1,
        model_e0,
        mode,
    })
}

/// Construct the RMPW weight for every `G=1` unit from fitted propensities.
pub fn compute_rmpw(ds: &DecompositionDataset, gp: &GroupPropensities) -> Result<RmpwWeights> {
    let design_e1 = build_design(ds, &gp.e1_spec())?;
    let design_e0 = build_design(ds, &gp.e0_spec())?;

    let unit_ids = ds.rows_with_g(1);
    let mut w = Vec::with_capacity(unit_ids.len());
    let mut e1_hat = Vec::with_capacity(unit_ids.len());
    let mut e0_hat = Vec::with_capacity(unit_ids.len());
    let mut clip_events = 0usize;

    for &i in &unit_ids {
        let (e1, c1) = gp.model_e1.predict_with_clip(design_e1.row(i))?;
        let (e0, c0) = gp.model_e0.predict_with_clip(design_e0.row(i))?;
        clip_events += usize::from(c1) + usize::from(c0);
        let weight = if ds.z()[i] == 1 {
            e0 / e1
        } else {
            (1.0 - e0) / (1.0 - e1)
        };
        w.push(weight);
        e1_hat.push(e1);
        e0_hat.push(e0);
    }

    Ok(RmpwWeights {
        unit_ids,
        w,
        e1_hat,
        e0_hat,
        clip_events,
    })
}
