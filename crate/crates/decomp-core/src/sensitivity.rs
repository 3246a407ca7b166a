//! The marginal sensitivity model: partial-identification extrema over the
//! weight-ratio box, critical-parameter search, equivalence-test
//! reparameterization, and the inverse-propensity special case.
//!
//! The MSM posits that the ideal weight differs from the fitted weight by
//! at most a factor `Λ` in either direction. For a given `Λ`, the set of
//! attainable counterfactual means is the range of
//!
//! ```text
//!   f(r) = Σ y_i r_i w_i / Σ r_i w_i,   r_i ∈ [Λ⁻¹, Λ]
//! ```
//!
//! over the `G=1` units. `f` is linear-fractional, so its extrema over the
//! box sit at vertices with a threshold structure: at a maximizer, every
//! unit with `y_i` above the optimal value takes `r_i = Λ` and every unit
//! below takes `r_i = Λ⁻¹` (the sign of `∂f/∂r_i` is the sign of
//! `y_i - f`). Sorting units by outcome therefore reduces the search to the
//! `n+1` threshold cuts, evaluated in O(n) with prefix sums after an
//! O(n log n) sort. A `2^n` brute-force enumeration is kept alongside as a
//! test oracle.
//!
//! Intervals are nested in `Λ` (larger boxes contain smaller ones), which
//! makes the critical-`Λ` search a bisection on a monotone coverage
//! predicate: the smallest `Λ` at which the bound interval reaches a target
//! value.

use serde::Serialize;

use crate::dataset::DecompositionDataset;
use crate::decomposition::observed_disparity;
use crate::error::{Error, Result};
use crate::weights::RmpwWeights;

/// Default upper end of the critical-`Λ` search bracket.
pub const DEFAULT_LAMBDA_MAX: f64 = 20.0;
/// Default bisection tolerance on `Λ`.
pub const DEFAULT_BISECTION_TOL: f64 = 1e-3;
/// Absolute slack when testing whether a bound interval covers a target;
/// absorbs the ulp-level noise of the prefix-sum evaluation at `Λ = 1`.
const COVERAGE_SLACK: f64 = 1e-12;
const BRUTE_FORCE_MAX: usize = 20;

/// Sensitivity parameter with its validity requirement `Λ >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MsmConfig {
    pub lambda: f64,
}

impl MsmConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 1.0 {
            return Err(Error::InvalidLambda { lambda });
        }
        Ok(Self { lambda })
    }

    /// The bound `γ = ln Λ` on the confounding function's sup-norm.
    pub fn log_lambda(&self) -> f64 {
        self.lambda.ln()
    }
}

/// Which extremum of the shifted estimand to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Min,
    Max,
}

/// Precomputed sort-and-prefix-sum state for evaluating extrema at many
/// `Λ` values over the same weighted sample.
#[derive(Debug, Clone)]
pub struct ExtremaSolver {
    /// `y * w` prefix sums over units sorted by descending outcome;
    /// `prefix_yw[k]` covers the k largest outcomes. Sorting is stable, so
    /// ties keep input order and results are deterministic.
    prefix_yw: Vec<f64>,
    prefix_w: Vec<f64>,
    n: usize,
}

impl ExtremaSolver {
    pub fn new(w: &[f64], y: &[f64]) -> Result<Self> {
        if w.is_empty() || y.is_empty() {
            return Err(Error::EmptyUnits);
        }
        if w.len() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "extrema weight/outcome vectors".into(),
                expected: y.len(),
                actual: w.len(),
            });
        }
        for (i, &wi) in w.iter().enumerate() {
            if !wi.is_finite() || wi <= 0.0 {
                return Err(Error::Config {
                    message: format!("weight {i} is {wi}; weights must be positive and finite"),
                });
            }
        }
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.sort_by(|&a, &b| y[b].total_cmp(&y[a]));

        let n = y.len();
        let mut prefix_yw = Vec::with_capacity(n + 1);
        let mut prefix_w = Vec::with_capacity(n + 1);
        let mut acc_yw = 0.0;
        let mut acc_w = 0.0;
        prefix_yw.push(0.0);
        prefix_w.push(0.0);
        for &i in &order {
            acc_yw += y[i] * w[i];
            acc_w += w[i];
            prefix_yw.push(acc_yw);
            prefix_w.push(acc_w);
        }
        Ok(Self {
            prefix_yw,
            prefix_w,
            n,
        })
    }

    /// Build from the `G=1` outcomes and their RMPW weights.
    pub fn from_weights(ds: &DecompositionDataset, weights: &RmpwWeights) -> Result<Self> {
        let y: Vec<f64> = weights.unit_ids.iter().map(|&i| ds.y()[i]).collect();
        Self::new(&weights.w, &y)
    }

    /// The unshifted Hájek estimate (`Λ = 1` value).
    pub fn point_estimate(&self) -> f64 {
        self.prefix_yw[self.n] / self.prefix_w[self.n]
    }

    /// Exact extremum at `lambda` over the `n+1` threshold cuts.
    pub fn solve(&self, lambda: f64, direction: Direction) -> Result<f64> {
        let lambda = MsmConfig::new(lambda)?.lambda;
        let inv = 1.0 / lambda;
        // For Max, the k units with the largest outcomes take Λ; for Min they
        // take Λ⁻¹.
        let (r_top, r_rest) = match direction {
            Direction::Max => (lambda, inv),
            Direction::Min => (inv, lambda),
        };
        let total_yw = self.prefix_yw[self.n];
        let total_w = self.prefix_w[self.n];
        let candidate = |k: usize| {
            let num = r_top * self.prefix_yw[k] + r_rest * (total_yw - self.prefix_yw[k]);
            let den = r_top * self.prefix_w[k] + r_rest * (total_w - self.prefix_w[k]);
            num / den
        };
        let mut best = candidate(0);
        for k in 1..=self.n {
            let value = candidate(k);
            let better = match direction {
                Direction::Max => value > best,
                Direction::Min => value < best,
            };
            if better {
                best = value;
            }
        }
        Ok(best)
    }

    pub fn minimum(&self, lambda: f64) -> Result<f64> {
        self.solve(lambda, Direction::Min)
    }

    pub fn maximum(&self, lambda: f64) -> Result<f64> {
        self.solve(lambda, Direction::Max)
    }
}

/// Exact extremum of the shifted counterfactual mean over the MSM box.
///
/// `w` and `y` are aligned over the `G=1` units.
pub fn extrema(w: &[f64], y: &[f64], lambda: f64, direction: Direction) -> Result<f64> {
    ExtremaSolver::new(w, y)?.solve(lambda, direction)
}

/// Exhaustive `2^n` oracle for [`extrema`]; limited to `n <= 20`.
pub fn extrema_bruteforce(w: &[f64], y: &[f64], lambda: f64, direction: Direction) -> Result<f64> {
    let lambda = MsmConfig::new(lambda)?.lambda;
    if w.is_empty() {
        return Err(Error::EmptyUnits);
    }
    if w.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "extrema weight/outcome vectors".into(),
            expected: y.len(),
            actual: w.len(),
        });
    }
    let n = w.len();
    if n > BRUTE_FORCE_MAX {
        return Err(Error::BruteForceTooLarge {
            n,
            max: BRUTE_FORCE_MAX,
        });
    }
    let inv = 1.0 / lambda;
    let assignment_value = |mask: u32| {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            let r = if mask & (1 << i) != 0 { lambda } else { inv };
            num += y[i] * r * w[i];
            den += r * w[i];
        }
        num / den
    };
    let mut best = assignment_value(0);
    for mask in 1u32..(1u32 << n) {
        let value = assignment_value(mask);
        let better = match direction {
            Direction::Max => value > best,
            Direction::Min => value < best,
        };
        if better {
            best = value;
        }
    }
    Ok(best)
}

/// Partial-identification interval at one `Λ`, with the induced intervals
/// for the two decomposition estimands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityBounds {
    pub lambda: f64,
    pub mu_lower: f64,
    pub mu_upper: f64,
    /// `(mu1 - mu_upper, mu1 - mu_lower)`
    pub reduction_bounds: (f64, f64),
    /// `(mu_lower - mu0, mu_upper - mu0)`
    pub residual_bounds: (f64, f64),
}

impl SensitivityBounds {
    fn from_extrema(lambda: f64, mu_lower: f64, mu_upper: f64, mu1: f64, mu0: f64) -> Self {
        Self {
            lambda,
            mu_lower,
            mu_upper,
            reduction_bounds: (mu1 - mu_upper, mu1 - mu_lower),
            residual_bounds: (mu_lower - mu0, mu_upper - mu0),
        }
    }
}

/// Bounds at every `Λ` of an ascending grid. Intervals are nested by
/// construction (the feasible box grows with `Λ`).
pub fn bounds_over_lambda(
    ds: &DecompositionDataset,
    weights: &RmpwWeights,
    lambdas: &[f64],
) -> Result<Vec<SensitivityBounds>> {
    for pair in lambdas.windows(2) {
        if pair[1] < pair[0] {
            return Err(Error::Config {
                message: format!(
                    "lambda grid must be ascending, got {} after {}",
                    pair[1], pair[0]
                ),
            });
        }
    }
    let (mu1, mu0, _) = observed_disparity(ds)?;
    let solver = ExtremaSolver::from_weights(ds, weights)?;
    lambdas
        .iter()
        .map(|&lambda| {
            Ok(SensitivityBounds::from_extrema(
                lambda,
                solver.minimum(lambda)?,
                solver.maximum(lambda)?,
                mu1,
                mu0,
            ))
        })
        .collect()
}

/// Whether a critical parameter refers to the point-estimate bounds or to
/// the bootstrap confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CriticalTarget {
    PointEstimate,
    BootstrapCi,
}

/// Which causal estimand a critical parameter refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Estimand {
    Reduction,
    Residual,
}

/// Result of a critical-`Λ` search: the smallest `Λ` (within `tolerance`)
/// at which the estimand's bound interval reaches `threshold`, or `None`
/// if the bracket's upper end is not enough.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalLambda {
    pub target: CriticalTarget,
    pub estimand: Estimand,
    pub threshold: f64,
    pub value: Option<f64>,
    pub bracket: (f64, f64),
    pub tolerance: f64,
}

pub(crate) fn validate_bracket(bracket: (f64, f64)) -> Result<()> {
    if bracket.0 != 1.0 || !bracket.1.is_finite() || bracket.1 <= 1.0 {
        return Err(Error::InvalidBracket {
            lo: bracket.0,
            hi: bracket.1,
        });
    }
    Ok(())
}

/// Bisection for the smallest `Λ` in `bracket` satisfying a monotone
/// coverage predicate. Returns `None` when even `bracket.1` fails.
pub(crate) fn bisect_coverage<F>(covered: F, bracket: (f64, f64), tol: f64) -> Result<Option<f64>>
where
    F: Fn(f64) -> Result<bool>,
{
    validate_bracket(bracket)?;
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::Config {
            message: format!("bisection tolerance must be positive, got {tol}"),
        });
    }
    let (mut lo, mut hi) = bracket;
    if covered(lo)? {
        return Ok(Some(lo));
    }
    if !covered(hi)? {
        return Ok(None);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if covered(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Target counterfactual-mean value equivalent to `estimand = threshold`.
fn target_mu(estimand: Estimand, threshold: f64, mu1: f64, mu0: f64) -> f64 {
    match estimand {
        // reduction = mu1 - mu  =>  mu = mu1 - threshold
        Estimand::Reduction => mu1 - threshold,
        // residual = mu - mu0   =>  mu = mu0 + threshold
        Estimand::Residual => mu0 + threshold,
    }
}

fn critical_lambda_point(
    ds: &DecompositionDataset,
    weights: &RmpwWeights,
    estimand: Estimand,
    threshold: f64,
    bracket: (f64, f64),
    tol: f64,
) -> Result<CriticalLambda> {
    let (mu1, mu0, _) = observed_disparity(ds)?;
    let solver = ExtremaSolver::from_weights(ds, weights)?;
    let target = target_mu(estimand, threshold, mu1, mu0);
    let covered = |lambda: f64| -> Result<bool> {
        Ok(solver.minimum(lambda)? - COVERAGE_SLACK <= target
            && target <= solver.maximum(lambda)? + COVERAGE_SLACK)
    };
    let value = bisect_coverage(covered, bracket, tol)?;
    Ok(CriticalLambda {
        target: CriticalTarget::PointEstimate,
        estimand,
        threshold,
        value,
        bracket,
        tolerance: tol,
    })
}

/// Smallest `Λ` at which the point-estimate bound interval of `estimand`
/// reaches `threshold`.
pub fn critical_lambda(
    ds: &DecompositionDataset,
    weights: &RmpwWeights,
    estimand: Estimand,
    threshold: f64,
    bracket: (f64, f64),
    tol: f64,
) -> Result<CriticalLambda> {
    critical_lambda_point(ds, weights, estimand, threshold, bracket, tol)
}

/// Equivalence test: the smallest `Λ` at which the bounds admit a
/// counterfactual mean corresponding to a `100·eta` percent disparity
/// reduction. At `eta = 1` this is exactly the residual-disparity
/// zero-crossing, and it is computed through that code path so the two
/// agree bit-for-bit.
pub fn equivalence_critical_lambda(
    ds: &DecompositionDataset,
    weights: &RmpwWeights,
    eta: f64,
    bracket: (f64, f64),
    tol: f64,
) -> Result<CriticalLambda> {
    if !eta.is_finite() || eta <= 0.0 || eta > 1.0 {
        return Err(Error::InvalidEta { eta });
    }
    let (_, _, tau) = observed_disparity(ds)?;
    if tau == 0.0 {
        return Err(Error::ZeroTau);
    }
    if eta == 1.0 {
        return critical_lambda(ds, weights, Estimand::Residual, 0.0, bracket, tol);
    }
    critical_lambda(ds, weights, Estimand::Reduction, eta * tau, bracket, tol)
}

/// The shifted ideal propensity score of the inverse-propensity special
/// case: `e^{(h)} = 1 / (1 + (1/e - 1) e^h)`.
pub fn shifted_ipw_propensity(e: f64, h: f64) -> Result<f64> {
    if !e.is_finite() || e <= 0.0 || e >= 1.0 {
        return Err(Error::ProbabilityOutOfRange { value: e });
    }
    Ok(1.0 / (1.0 + (1.0 / e - 1.0) * h.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DecompositionDataset;
    use proptest::prelude::*;

    #[test]
    fn degenerate_box_at_lambda_one() {
        let w = [1.0, 3.0];
        let y = [0.0, 1.0];
        let max = extrema(&w, &y, 1.0, Direction::Max).unwrap();
        let min = extrema(&w, &y, 1.0, Direction::Min).unwrap();
        assert!((max - 0.75).abs() < 1e-12);
        assert!((min - 0.75).abs() < 1e-12);
    }

    #[test]
    fn two_unit_extrema_match_enumeration() {
        // Expected values frozen from the 2^n oracle: with equal weights and
        // outcomes {0, 1}, lambda 2 puts mass ratio 4:1 on either side.
        let w = [1.0, 1.0];
        let y = [0.0, 1.0];
        assert!((extrema(&w, &y, 2.0, Direction::Max).unwrap() - 0.8).abs() < 1e-12);
        assert!((extrema(&w, &y, 2.0, Direction::Min).unwrap() - 0.2).abs() < 1e-12);
        assert!((extrema_bruteforce(&w, &y, 2.0, Direction::Max).unwrap() - 0.8).abs() < 1e-12);
        assert!((extrema_bruteforce(&w, &y, 2.0, Direction::Min).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn constant_outcomes_pin_the_objective() {
        let w = [0.5, 2.0, 1.0];
        let y = [3.25; 3];
        for lambda in [1.0, 2.0, 10.0] {
            assert!((extrema(&w, &y, lambda, Direction::Max).unwrap() - 3.25).abs() < 1e-12);
            assert!((extrema(&w, &y, lambda, Direction::Min).unwrap() - 3.25).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_inputs_error() {
        assert!(matches!(
            extrema(&[1.0], &[1.0], 0.5, Direction::Max),
            Err(Error::InvalidLambda { .. })
        ));
        assert!(matches!(
            extrema(&[], &[], 2.0, Direction::Max),
            Err(Error::EmptyUnits)
        ));
        assert!(matches!(
            extrema(&[1.0, -1.0], &[0.0, 1.0], 2.0, Direction::Max),
            Err(Error::Config { .. })
        ));
        assert!(matches!(
            extrema_bruteforce(&[1.0; 21], &[0.0; 21], 2.0, Direction::Max),
            Err(Error::BruteForceTooLarge { .. })
        ));
    }

    #[test]
    fn bruteforce_single_unit_cancels_ratio() {
        for lambda in [1.0, 3.0, 17.0] {
            assert_eq!(
                extrema_bruteforce(&[2.0], &[0.7], lambda, Direction::Max).unwrap(),
                0.7
            );
        }
    }

    fn ds_with_g1_outcomes(y1: &[f64], mu0: f64) -> (DecompositionDataset, RmpwWeights) {
        let mut g = vec![0u8, 0u8];
        let mut z = vec![0u8, 1u8];
        let mut y = vec![mu0, mu0];
        for (i, &v) in y1.iter().enumerate() {
            g.push(1);
            z.push((i % 2) as u8);
            y.push(v);
        }
        let ds = DecompositionDataset::new(
            g,
            z,
            y,
            vec![],
            vec![],
            vec![],
            vec![],
            "y".into(),
            "g".into(),
            "z".into(),
        )
        .unwrap();
        let unit_ids = ds.rows_with_g(1);
        let n1 = unit_ids.len();
        let w = RmpwWeights {
            unit_ids,
            w: vec![1.0; n1],
            e1_hat: vec![0.5; n1],
            e0_hat: vec![0.5; n1],
            clip_events: 0,
        };
        (ds, w)
    }

    #[test]
    fn grid_bounds_are_nested_and_degenerate_at_one() {
        let (ds, w) = ds_with_g1_outcomes(&[0.0, 0.3, 0.9, 1.0, 0.4], 0.1);
        let grid = [1.0, 2.0, 4.0];
        let bounds = bounds_over_lambda(&ds, &w, &grid).unwrap();
        assert_eq!(bounds.len(), 3);
        let point = ExtremaSolver::from_weights(&ds, &w)
            .unwrap()
            .point_estimate();
        assert!((bounds[0].mu_lower - point).abs() < 1e-12);
        assert!((bounds[0].mu_upper - point).abs() < 1e-12);
        for pair in bounds.windows(2) {
            assert!(pair[1].mu_lower <= pair[0].mu_lower + 1e-12);
            assert!(pair[1].mu_upper >= pair[0].mu_upper - 1e-12);
            let w0 = pair[0].mu_upper - pair[0].mu_lower;
            let w1 = pair[1].mu_upper - pair[1].mu_lower;
            assert!(w1 >= w0 - 1e-12);
        }
        // Induced intervals are consistent with the mean interval.
        for b in &bounds {
            assert!(b.reduction_bounds.0 <= b.reduction_bounds.1);
            assert!(b.residual_bounds.0 <= b.residual_bounds.1);
        }
    }

    #[test]
    fn descending_grid_rejected() {
        let (ds, w) = ds_with_g1_outcomes(&[0.0, 1.0], 0.1);
        assert!(bounds_over_lambda(&ds, &w, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn critical_lambda_already_at_threshold() {
        // Unit weights make reduction exactly zero, so the bound covers the
        // threshold at lambda = 1.
        let (ds, w) = ds_with_g1_outcomes(&[0.2, 0.8, 0.5, 0.6], 0.1);
        let crit = critical_lambda(&ds, &w, Estimand::Reduction, 0.0, (1.0, 20.0), 1e-3).unwrap();
        assert_eq!(crit.value, Some(1.0));
    }

    #[test]
    fn critical_lambda_not_found_when_outcomes_constant() {
        // All G=1 outcomes equal 0.5; the bounds never move, so the residual
        // (0.5 - 0.1 = 0.4) never reaches zero.
        let (ds, w) = ds_with_g1_outcomes(&[0.5, 0.5, 0.5, 0.5], 0.1);
        let crit = critical_lambda(&ds, &w, Estimand::Residual, 0.0, (1.0, 20.0), 1e-3).unwrap();
        assert_eq!(crit.value, None);
    }

    #[test]
    fn critical_lambda_requires_unit_bracket_start() {
        let (ds, w) = ds_with_g1_outcomes(&[0.2, 0.8], 0.1);
        assert!(matches!(
            critical_lambda(&ds, &w, Estimand::Reduction, 0.0, (2.0, 20.0), 1e-3),
            Err(Error::InvalidBracket { .. })
        ));
    }

    #[test]
    fn equivalence_at_eta_one_is_residual_crossing() {
        let (ds, w) = ds_with_g1_outcomes(&[0.0, 0.3, 0.9, 1.0, 0.4, 0.7], 0.1);
        let residual =
            critical_lambda(&ds, &w, Estimand::Residual, 0.0, (1.0, 20.0), 1e-3).unwrap();
        let equivalence = equivalence_critical_lambda(&ds, &w, 1.0, (1.0, 20.0), 1e-3).unwrap();
        assert_eq!(residual.value, equivalence.value);
        assert_eq!(equivalence.estimand, Estimand::Residual);
    }

    #[test]
    fn equivalence_validates_inputs() {
        let (ds, w) = ds_with_g1_outcomes(&[0.0, 1.0], 0.1);
        assert!(matches!(
            equivalence_critical_lambda(&ds, &w, 0.0, (1.0, 20.0), 1e-3),
            Err(Error::InvalidEta { .. })
        ));
        assert!(matches!(
            equivalence_critical_lambda(&ds, &w, 1.5, (1.0, 20.0), 1e-3),
            Err(Error::InvalidEta { .. })
        ));
        let (ds0, w0) = ds_with_g1_outcomes(&[0.1, 0.1], 0.1);
        assert!(matches!(
            equivalence_critical_lambda(&ds0, &w0, 0.5, (1.0, 20.0), 1e-3),
            Err(Error::ZeroTau)
        ));
    }

    #[test]
    fn equivalence_near_zero_eta_when_reduction_covers_it() {
        // Unit weights: observed reduction is exactly 0, which covers a ~0%
        // reduction target immediately.
        let (ds, w) = ds_with_g1_outcomes(&[0.2, 0.8, 0.5, 0.7], 0.1);
        let crit = equivalence_critical_lambda(&ds, &w, 1e-15, (1.0, 20.0), 1e-3).unwrap();
        assert_eq!(crit.value, Some(1.0));
    }

    #[test]
    fn shifted_ipw_examples() {
        assert!((shifted_ipw_propensity(0.37, 0.0).unwrap() - 0.37).abs() < 1e-15);
        assert!((shifted_ipw_propensity(0.5, 2.0f64.ln()).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((shifted_ipw_propensity(0.5, -(2.0f64.ln())).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            shifted_ipw_propensity(1.0, 0.5),
            Err(Error::ProbabilityOutOfRange { .. })
        ));
    }

    proptest! {
        /// Efficient extrema agree with the 2^n oracle.
        #[test]
        fn extrema_match_bruteforce(
            units in prop::collection::vec((0.05f64..5.0, -2.0f64..2.0), 1..9),
            lambda in 1.0f64..6.0,
        ) {
            let (w, y): (Vec<f64>, Vec<f64>) = units.into_iter().unzip();
            for direction in [Direction::Min, Direction::Max] {
                let fast = extrema(&w, &y, lambda, direction).unwrap();
                let slow = extrema_bruteforce(&w, &y, lambda, direction).unwrap();
                prop_assert!((fast - slow).abs() <= 1e-10, "fast={fast}, slow={slow}");
            }
        }

        /// Extrema stay inside the outcome range and respect nesting.
        #[test]
        fn extrema_range_and_nesting(
            units in prop::collection::vec((0.05f64..5.0, -2.0f64..2.0), 1..30),
            lambda in 1.0f64..8.0,
        ) {
            let (w, y): (Vec<f64>, Vec<f64>) = units.into_iter().unzip();
            let y_min = y.iter().copied().fold(f64::INFINITY, f64::min);
            let y_max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = extrema(&w, &y, lambda, Direction::Min).unwrap();
            let hi = extrema(&w, &y, lambda, Direction::Max).unwrap();
            prop_assert!(lo <= hi + 1e-12);
            prop_assert!(lo >= y_min - 1e-10 && hi <= y_max + 1e-10);

            let lo2 = extrema(&w, &y, lambda * 1.5, Direction::Min).unwrap();
            let hi2 = extrema(&w, &y, lambda * 1.5, Direction::Max).unwrap();
            prop_assert!(lo2 <= lo + 1e-12 && hi2 >= hi - 1e-12);
        }

        /// The odds ratio between e and its shift equals the weight-ratio
        /// form exactly, i.e. exp(h).
        #[test]
        fn ipw_odds_ratio_identity(e in 0.01f64..0.99, h in -2.0f64..2.0) {
            let shifted = shifted_ipw_propensity(e, h).unwrap();
            let or_direct = (e / (1.0 - e)) / (shifted / (1.0 - shifted));
            let or_weights = (1.0 / shifted - 1.0) / (1.0 / e - 1.0);
            prop_assert!((or_direct - or_weights).abs() <= 1e-12);
            prop_assert!((or_weights - h.exp()).abs() <= 1e-9 * h.exp());
        }
    }
}
