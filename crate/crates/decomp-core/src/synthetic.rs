//! Synthetic data generator with a known (optionally hidden) confounder and
//! Monte-Carlo oracles for every population estimand.
//!
//! The generating process follows the linear working models the
//! amplification is derived under:
//!
//! ```text
//!   X ~ N(0, I),  U ~ N(0, 1),  G ~ Bernoulli(prevalence)   (independent)
//!   Z | G=1 ~ Bernoulli( expit(γ₁·[1, X] + s₁·U) )
//!   Z | G=0 ~ Bernoulli( expit(γ₀·[1, X^A] + s₀·U) )
//!   Y = β_z Z + f·X + β_u U + ε,   ε ~ N(0, σ)
//! ```
//!
//! Covariates and the confounder are standard normal, so `β_u` is already a
//! per-standard-deviation effect and the amplification's standardization
//! convention holds by construction.
//!
//! Three layers of propensity are distinguished:
//! - **structural** (`e₁*`, `e₀*`): condition on `U`; these define the ideal
//!   weights.
//! - **measured**: condition on what the estimator can see. With `U` hidden
//!   they are the structural propensities marginalized over `U` (a smooth
//!   one-dimensional integral, evaluated by Simpson quadrature); with `U`
//!   visible they equal the structural ones.
//! - **intervention**: what the counterfactual draw conditions on, i.e. the
//!   allowable set, which includes `U` exactly when the confounder is
//!   declared allowable.
//!
//! Truths (`μ_{R₀}`, `δ_u`, their product with `β_u`) are computed by
//! simulation with reported Monte-Carlo standard errors rather than closed
//! forms, so arbitrary configurations are covered. The weight-ratio bound
//! `exp(max |ln(w*/w)|)` is a property of the realized sample and is
//! computed from the generated rows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::DecompositionDataset;
use crate::error::{Error, Result};
use crate::logistic::expit;

const STREAM_DATA: u64 = 0;
const STREAM_ORACLE_MU: u64 = 1;
const STREAM_ORACLE_DELTA: u64 = 2;
/// Minimum draw count for the Monte-Carlo oracles.
pub const MIN_ORACLE_DRAWS: usize = 10_000;

/// Outcome working model: `Y = β_z Z + f·X + β_u U + N(0, σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeConfig {
    pub beta_z: f64,
    /// Linear coefficients over `[X^A, X^N]`.
    pub f_coefficients: Vec<f64>,
    pub beta_u: f64,
    pub noise_sd: f64,
}

/// How the confounder enters the exposure mechanisms and what the
/// estimator is allowed to see.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfounderConfig {
    /// Coefficient of `U` in the `G=1` exposure mechanism.
    pub strength_e1: f64,
    /// Coefficient of `U` in the `G=0` exposure mechanism.
    #[serde(default)]
    pub strength_e0: f64,
    /// Whether `U` belongs to the allowable covariate set.
    #[serde(default)]
    pub allowable: bool,
    /// Whether `U` is withheld from the emitted dataset.
    #[serde(default = "default_true")]
    pub hidden: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ConfounderConfig {
    fn default() -> Self {
        Self {
            strength_e1: 0.0,
            strength_e0: 0.0,
            allowable: false,
            hidden: true,
        }
    }
}

fn default_oracle_draws() -> usize {
    200_000
}

/// Full data-generating configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub p_allowable: usize,
    pub p_nonallowable: usize,
    pub group_prevalence: f64,
    /// Intercept plus `p_allowable` coefficients of the `G=0` exposure
    /// mechanism on `X^A`.
    pub gamma0: Vec<f64>,
    /// Intercept plus `p_allowable + p_nonallowable` coefficients of the
    /// `G=1` exposure mechanism on `X`.
    pub gamma1: Vec<f64>,
    pub outcome: OutcomeConfig,
    #[serde(default)]
    pub confounder: ConfounderConfig,
    pub seed: u64,
    #[serde(default = "default_oracle_draws")]
    pub oracle_draws: usize,
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        let p = self.p_allowable + self.p_nonallowable;
        let check = |ok: bool, message: String| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config { message })
            }
        };
        check(self.n >= 1, format!("n must be positive, got {}", self.n))?;
        check(
            self.group_prevalence > 0.0 && self.group_prevalence < 1.0,
            format!(
                "group_prevalence must lie in (0,1), got {}",
                self.group_prevalence
            ),
        )?;
        check(
            self.gamma0.len() == 1 + self.p_allowable,
            format!(
                "gamma0 needs 1 + p_allowable = {} coefficients, got {}",
                1 + self.p_allowable,
                self.gamma0.len()
            ),
        )?;
        check(
            self.gamma1.len() == 1 + p,
            format!(
                "gamma1 needs 1 + p = {} coefficients, got {}",
                1 + p,
                self.gamma1.len()
            ),
        )?;
        check(
            self.outcome.f_coefficients.len() == p,
            format!(
                "f_coefficients needs p = {} entries, got {}",
                p,
                self.outcome.f_coefficients.len()
            ),
        )?;
        check(
            self.outcome.noise_sd >= 0.0,
            format!(
                "noise_sd must be non-negative, got {}",
                self.outcome.noise_sd
            ),
        )?;
        let all_finite = self
            .gamma0
            .iter()
            .chain(&self.gamma1)
            .chain(&self.outcome.f_coefficients)
            .chain([
                &self.outcome.beta_z,
                &self.outcome.beta_u,
                &self.confounder.strength_e1,
                &self.confounder.strength_e0,
            ])
            .all(|v| v.is_finite());
        check(all_finite, "all coefficients must be finite".into())?;
        check(
            self.oracle_draws >= MIN_ORACLE_DRAWS,
            format!(
                "oracle_draws must be at least {MIN_ORACLE_DRAWS}, got {}",
                self.oracle_draws
            ),
        )
    }

    fn linear(coefs: &[f64], x: &[f64]) -> f64 {
        coefs[0] + coefs[1..].iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Structural `G=1` exposure probability given `(x, u)`.
    pub fn e1_structural(&self, x: &[f64], u: f64) -> f64 {
        expit(Self::linear(&self.gamma1, x) + self.confounder.strength_e1 * u)
    }

    /// Structural `G=0` exposure probability given `(x^A, u)`.
    pub fn e0_structural(&self, x_a: &[f64], u: f64) -> f64 {
        expit(Self::linear(&self.gamma0, x_a) + self.confounder.strength_e0 * u)
    }

    /// `G=1` propensity marginalized over the confounder.
    pub fn e1_marginal(&self, x: &[f64]) -> f64 {
        marginal_expit(Self::linear(&self.gamma1, x), self.confounder.strength_e1)
    }

    /// `G=0` allowable-set propensity marginalized over the confounder.
    pub fn e0a_marginal(&self, x_a: &[f64]) -> f64 {
        marginal_expit(Self::linear(&self.gamma0, x_a), self.confounder.strength_e0)
    }

    /// Propensity conditional on the measured covariate set.
    fn e1_measured(&self, x: &[f64], u: f64) -> f64 {
        if self.confounder.hidden {
            self.e1_marginal(x)
        } else {
            self.e1_structural(x, u)
        }
    }

    /// Measured allowable-set propensity: conditions on `U` only when the
    /// confounder is allowable and visible.
    fn e0a_measured(&self, x_a: &[f64], u: f64) -> f64 {
        if self.confounder.allowable && !self.confounder.hidden {
            self.e0_structural(x_a, u)
        } else {
            self.e0a_marginal(x_a)
        }
    }

    /// Ideal allowable-set propensity: conditions on `U` exactly when the
    /// confounder is allowable.
    fn e0a_ideal(&self, x_a: &[f64], u: f64) -> f64 {
        if self.confounder.allowable {
            self.e0_structural(x_a, u)
        } else {
            self.e0a_marginal(x_a)
        }
    }

    /// The exposure probability the stochastic intervention draws from.
    fn intervention_propensity(&self, x_a: &[f64], u: f64) -> f64 {
        self.e0a_ideal(x_a, u)
    }

    fn mean_outcome(&self, x: &[f64], u: f64, z: u8) -> f64 {
        self.outcome.beta_z * f64::from(z)
            + Self::linear_no_intercept(&self.outcome.f_coefficients, x)
            + self.outcome.beta_u * u
    }

    fn linear_no_intercept(coefs: &[f64], x: &[f64]) -> f64 {
        coefs.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

/// `E[expit(c + s U)]` for `U ~ N(0,1)`, by composite Simpson quadrature
/// over `[-8, 8]` (the tail mass beyond is below 1e-14). Exact shortcut
/// when `s = 0`.
fn marginal_expit(c: f64, s: f64) -> f64 {
    if s == 0.0 {
        return expit(c);
    }
    const HALF_WIDTH: f64 = 8.0;
    const INTERVALS: usize = 400; // even; machine-precision for this integrand
    let h = 2.0 * HALF_WIDTH / INTERVALS as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let f = |u: f64| expit(c + s * u) * norm * (-0.5 * u * u).exp();
    let mut sum = f(-HALF_WIDTH) + f(HALF_WIDTH);
    for k in 1..INTERVALS {
        let u = -HALF_WIDTH + k as f64 * h;
        sum += f(u) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub se: f64,
}

/// Population truths for a configuration, computed by simulation, plus the
/// realized-sample weight-ratio bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    /// `E[Y(R₀) | G=1]` with its Monte-Carlo standard error.
    pub true_mu_r0: f64,
    pub mu_r0_mc_se: f64,
    /// Population `β_u · δ_u`.
    pub true_bias: f64,
    pub true_beta_u: f64,
    pub true_delta_u: f64,
    pub delta_u_mc_se: f64,
    /// `exp(max_i |ln(w*_i / w_i)|)` over the generated `G=1` rows.
    pub true_lambda_bound: f64,
}

/// A generated sample: the dataset the estimator sees, the confounder
/// column (even when hidden), the raw covariate draws, and the truths.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: DecompositionDataset,
    pub u: Vec<f64>,
    pub truth: SyntheticTruth,
    pub config: DgpConfig,
    /// Raw covariate blocks without the confounder, row-aligned with the
    /// dataset (used by the oracle weight computations).
    x_allowable_raw: Vec<Vec<f64>>,
    x_nonallowable_raw: Vec<Vec<f64>>,
}

impl SyntheticData {
    fn row_x(&self, i: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.x_allowable_raw.len() + self.x_nonallowable_raw.len());
        x.extend(self.x_allowable_raw.iter().map(|c| c[i]));
        x.extend(self.x_nonallowable_raw.iter().map(|c| c[i]));
        x
    }

    fn row_x_allowable(&self, i: usize) -> Vec<f64> {
        self.x_allowable_raw.iter().map(|c| c[i]).collect()
    }

    fn weight_from(&self, e0: f64, e1: f64, z: u8) -> f64 {
        if z == 1 {
            e0 / e1
        } else {
            (1.0 - e0) / (1.0 - e1)
        }
    }

    /// Ideal weights `w*` (structural propensities) over the `G=1` rows,
    /// aligned with `dataset.rows_with_g(1)`.
    pub fn ideal_weights_g1(&self) -> Vec<f64> {
        self.dataset
            .rows_with_g(1)
            .into_iter()
            .map(|i| {
                let e1 = self.config.e1_structural(&self.row_x(i), self.u[i]);
                let e0 = self.config.e0a_ideal(&self.row_x_allowable(i), self.u[i]);
                self.weight_from(e0, e1, self.dataset.z()[i])
            })
            .collect()
    }

    /// True weights under the measured covariate set over the `G=1` rows.
    pub fn measured_weights_g1(&self) -> Vec<f64> {
        self.dataset
            .rows_with_g(1)
            .into_iter()
            .map(|i| {
                let e1 = self.config.e1_measured(&self.row_x(i), self.u[i]);
                let e0 = self
                    .config
                    .e0a_measured(&self.row_x_allowable(i), self.u[i]);
                self.weight_from(e0, e1, self.dataset.z()[i])
            })
            .collect()
    }

    /// Per-unit imbalance terms of the bias decomposition, with measured
    /// propensities: `((e0-e1)/(1-e1)) (u - z u / e1)` over the `G=1` rows.
    pub fn delta_u_terms_g1(&self) -> Vec<f64> {
        self.dataset
            .rows_with_g(1)
            .into_iter()
            .map(|i| {
                let e1 = self.config.e1_measured(&self.row_x(i), self.u[i]);
                let e0 = self
                    .config
                    .e0a_measured(&self.row_x_allowable(i), self.u[i]);
                let u = self.u[i];
                let z = f64::from(self.dataset.z()[i]);
                (e0 - e1) / (1.0 - e1) * (u - z * u / e1)
            })
            .collect()
    }
}

fn lambda_bound(ideal: &[f64], measured: &[f64]) -> f64 {
    let max_abs_log = ideal
        .iter()
        .zip(measured)
        .map(|(ws, w)| (ws / w).ln().abs())
        .fold(0.0f64, f64::max);
    max_abs_log.exp()
}

/// Monte-Carlo oracle for `μ_{R₀} = E[Y(R₀) | G=1]`.
///
/// Per draw: sample `(X, U)`, draw the counterfactual exposure from the
/// intervention propensity, and evaluate the working-model mean outcome at
/// it. Covariates are independent of `G`, so no group conditioning is
/// needed.
pub fn oracle_mu_r0(cfg: &DgpConfig, draws: usize) -> Result<McEstimate> {
    cfg.validate()?;
    if draws < MIN_ORACLE_DRAWS {
        return Err(Error::Config {
            message: format!("oracle draws must be at least {MIN_ORACLE_DRAWS}, got {draws}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM_ORACLE_MU);
    let p = cfg.p_allowable + cfg.p_nonallowable;

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut x = vec![0.0f64; p];
    for _ in 0..draws {
        for v in &mut x {
            *v = StandardNormal.sample(&mut rng);
        }
        let u: f64 = StandardNormal.sample(&mut rng);
        let p_int = cfg.intervention_propensity(&x[..cfg.p_allowable], u);
        let z_int = u8::from(rng.random::<f64>() < p_int);
        let value = cfg.mean_outcome(&x, u, z_int);
        sum += value;
        sum_sq += value * value;
    }
    let m = draws as f64;
    let mean = sum / m;
    let var = (sum_sq - m * mean * mean) / (m - 1.0);
    Ok(McEstimate {
        value: mean,
        se: (var.max(0.0) / m).sqrt(),
    })
}

/// Monte-Carlo oracle for the population imbalance `δ_u`, using measured
/// propensities and averaging the exposure out analytically
/// (`E[Z|X,U] = e₁*`), which removes the Bernoulli noise.
pub fn oracle_delta_u(cfg: &DgpConfig, draws: usize) -> Result<McEstimate> {
    cfg.validate()?;
    if draws < MIN_ORACLE_DRAWS {
        return Err(Error::Config {
            message: format!("oracle draws must be at least {MIN_ORACLE_DRAWS}, got {draws}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM_ORACLE_DELTA);
    let p = cfg.p_allowable + cfg.p_nonallowable;

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut x = vec![0.0f64; p];
    for _ in 0..draws {
        for v in &mut x {
            *v = StandardNormal.sample(&mut rng);
        }
        let u: f64 = StandardNormal.sample(&mut rng);
        let e1m = cfg.e1_measured(&x, u);
        let e0m = cfg.e0a_measured(&x[..cfg.p_allowable], u);
        let e1s = cfg.e1_structural(&x, u);
        // E[u - Z u / e1m | x, u] = u (1 - e1s / e1m)
        let value = (e0m - e1m) / (1.0 - e1m) * u * (1.0 - e1s / e1m);
        sum += value;
        sum_sq += value * value;
    }
    let m = draws as f64;
    let mean = sum / m;
    let var = (sum_sq - m * mean * mean) / (m - 1.0);
    Ok(McEstimate {
        value: mean,
        se: (var.max(0.0) / m).sqrt(),
    })
}

/// Exact ideal weights from the structural propensity functions, for rows
/// generated under `data.config` (spec'd oracle surface; also available as
/// [`SyntheticData::ideal_weights_g1`]).
pub fn oracle_true_weights(data: &SyntheticData) -> Vec<f64> {
    data.ideal_weights_g1()
}

/// Generate a dataset and its truths. Deterministic per seed.
pub fn generate(cfg: &DgpConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM_DATA);
    let p = cfg.p_allowable + cfg.p_nonallowable;

    let n = cfg.n;
    let mut g = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut u_col = Vec::with_capacity(n);
    let mut x_allowable: Vec<Vec<f64>> = vec![Vec::with_capacity(n); cfg.p_allowable];
    let mut x_nonallowable: Vec<Vec<f64>> = vec![Vec::with_capacity(n); cfg.p_nonallowable];

    let mut x = vec![0.0f64; p];
    for _ in 0..n {
        for v in &mut x {
            *v = StandardNormal.sample(&mut rng);
        }
        let u: f64 = StandardNormal.sample(&mut rng);
        let gi = u8::from(rng.random::<f64>() < cfg.group_prevalence);
        let e = if gi == 1 {
            cfg.e1_structural(&x, u)
        } else {
            cfg.e0_structural(&x[..cfg.p_allowable], u)
        };
        let zi = u8::from(rng.random::<f64>() < e);
        let noise: f64 = StandardNormal.sample(&mut rng);
        let yi = cfg.mean_outcome(&x, u, zi) + cfg.outcome.noise_sd * noise;

        g.push(gi);
        z.push(zi);
        y.push(yi);
        u_col.push(u);
        for (j, col) in x_allowable.iter_mut().enumerate() {
            col.push(x[j]);
        }
        for (j, col) in x_nonallowable.iter_mut().enumerate() {
            col.push(x[cfg.p_allowable + j]);
        }
    }

    let mut allowable_cols = x_allowable.clone();
    let mut nonallowable_cols = x_nonallowable.clone();
    let mut allowable_names: Vec<String> = (1..=cfg.p_allowable).map(|j| format!("a{j}")).collect();
    let mut nonallowable_names: Vec<String> =
        (1..=cfg.p_nonallowable).map(|j| format!("x{j}")).collect();
    if !cfg.confounder.hidden {
        if cfg.confounder.allowable {
            allowable_cols.push(u_col.clone());
            allowable_names.push("u".into());
        } else {
            nonallowable_cols.push(u_col.clone());
            nonallowable_names.push("u".into());
        }
    }

    let dataset = DecompositionDataset::new(
        g,
        z,
        y,
        allowable_cols,
        nonallowable_cols,
        allowable_names,
        nonallowable_names,
        "y".into(),
        "g".into(),
        "z".into(),
    )?;
    if dataset.rows_with_g(1).is_empty() {
        return Err(Error::EmptyGroup { group: 1 });
    }

    let mut data = SyntheticData {
        dataset,
        u: u_col,
        truth: SyntheticTruth {
            true_mu_r0: 0.0,
            mu_r0_mc_se: 0.0,
            true_bias: 0.0,
            true_beta_u: cfg.outcome.beta_u,
            true_delta_u: 0.0,
            delta_u_mc_se: 0.0,
            true_lambda_bound: 1.0,
        },
        config: cfg.clone(),
        x_allowable_raw: x_allowable,
        x_nonallowable_raw: x_nonallowable,
    };

    let mu = oracle_mu_r0(cfg, cfg.oracle_draws)?;
    let delta = oracle_delta_u(cfg, cfg.oracle_draws)?;
    data.truth.true_mu_r0 = mu.value;
    data.truth.mu_r0_mc_se = mu.se;
    data.truth.true_delta_u = delta.value;
    data.truth.delta_u_mc_se = delta.se;
    data.truth.true_bias = cfg.outcome.beta_u * delta.value;
    data.truth.true_lambda_bound =
        lambda_bound(&data.ideal_weights_g1(), &data.measured_weights_g1());

    Ok(data)
}
