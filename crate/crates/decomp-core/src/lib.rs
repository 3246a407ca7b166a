//! Weighted causal decomposition analysis with a calibrated sensitivity
//! analysis under the marginal sensitivity model.
//!
//! The pipeline: load a `(G, Z, Y, X)` table ([`dataset`]), fit the two
//! group propensity models ([`logistic`], [`weights`]), decompose the
//! observed disparity into a reduction and a residual ([`decomposition`]),
//! bound both under bounded violations of ignorability ([`sensitivity`]),
//! attach percentile-bootstrap confidence intervals ([`bootstrap`]), and
//! translate the one-parameter sensitivity model into the two-parameter
//! impact/imbalance plane with calibration against observed covariates
//! ([`amplification`]). A synthetic data generator with Monte-Carlo oracles
//! for every population quantity lives in [`synthetic`].

pub mod amplification;
pub mod bootstrap;
pub mod config;
pub mod dataset;
pub mod decomposition;
pub mod error;
pub mod logistic;
pub mod plot;
pub mod report;
pub mod sensitivity;
pub mod synthetic;
pub mod weights;

pub use amplification::{
    calibrate, contour_grid, delta_u_post, delta_u_pre, estimate_beta_u, max_bias,
    top_bias_covariates, CalibrationMode, CalibrationPoint, ContourGrid,
};
pub use bootstrap::{
    percentile_bootstrap, resample_ensemble, BootstrapConfig, BootstrapEnsemble, BootstrapResult,
};
pub use config::AnalysisConfig;
pub use dataset::{
    exclude_rows, filter_rows, load_csv, standardize_covariates, CsvSchema, DecompositionDataset,
    LoadReport, Predicate, RowFilter,
};
pub use decomposition::{
    counterfactual_mean, decompose, observed_disparity, DecompositionEstimate,
};
pub use error::{Error, Result};
pub use logistic::{
    build_design, fit_logistic, predict_prob, CovariateSelection, DesignMatrix, DesignSpec,
    PropensityModel,
};
pub use report::AnalysisReport;
pub use sensitivity::{
    bounds_over_lambda, critical_lambda, equivalence_critical_lambda, extrema, extrema_bruteforce,
    shifted_ipw_propensity, CriticalLambda, CriticalTarget, Direction, Estimand, ExtremaSolver,
    MsmConfig, SensitivityBounds,
};
pub use synthetic::{generate, oracle_mu_r0, DgpConfig, SyntheticData, SyntheticTruth};
pub use weights::{
    compute_rmpw, fit_group_propensities, AllowabilityMode, GroupPropensities, RmpwWeights,
};
