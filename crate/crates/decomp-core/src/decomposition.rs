//! The observed disparity and its two-part causal decomposition.
//!
//! The observed disparity `tau = mu1 - mu0` splits into a disparity
//! reduction `mu1 - mu_r0` (what equalizing the exposure distribution
//! across groups removes) and a residual disparity `mu_r0 - mu0` (what
//! remains afterwards). `mu_r0` is the Hájek-normalized RMPW-weighted mean
//! of the `G=1` outcomes, so multiplying all weights by a positive constant
//! changes nothing.

use serde::Serialize;

use crate::dataset::DecompositionDataset;
use crate::error::{Error, Result};
use crate::weights::RmpwWeights;

/// The decomposition point estimates. `reduction + residual` equals `tau`
/// by construction (up to rounding in the two subtractions).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionEstimate {
    pub mu1: f64,
    pub mu0: f64,
    pub mu_r0_hat: f64,
    pub tau: f64,
    pub reduction: f64,
    pub residual: f64,
}

/// Group outcome means and their difference `(mu1, mu0, tau)`.
pub fn observed_disparity(ds: &DecompositionDataset) -> Result<(f64, f64, f64)> {
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for i in 0..ds.n() {
        let g = ds.g()[i] as usize;
        sums[g] += ds.y()[i];
        counts[g] += 1;
    }
    for g in [0u8, 1u8] {
        if counts[g as usize] == 0 {
            return Err(Error::EmptyGroup { group: g });
        }
    }
    let mu0 = sums[0] / counts[0] as f64;
    let mu1 = sums[1] / counts[1] as f64;
    Ok((mu1, mu0, mu1 - mu0))
}

/// Hájek-normalized weighted mean of the `G=1` outcomes:
/// `Σ w_i y_i / Σ w_i` over the weighted units.
pub fn counterfactual_mean(ds: &DecompositionDataset, weights: &RmpwWeights) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::EmptyUnits);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, &i) in weights.unit_ids.iter().enumerate() {
        num += weights.w[k] * ds.y()[i];
        den += weights.w[k];
    }
    if den <= 0.0 {
        return Err(Error::ZeroWeightSum);
    }
    Ok(num / den)
}

/// Full decomposition: observed disparity, counterfactual mean, reduction,
/// and residual.
pub fn decompose(
    ds: &DecompositionDataset,
    weights: &RmpwWeights,
) -> Result<DecompositionEstimate> {
    let (mu1, mu0, tau) = observed_disparity(ds)?;
    let mu_r0_hat = counterfactual_mean(ds, weights)?;
    Ok(DecompositionEstimate {
        mu1,
        mu0,
        mu_r0_hat,
        tau,
        reduction: mu1 - mu_r0_hat,
        residual: mu_r0_hat - mu0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(g: Vec<u8>, z: Vec<u8>, y: Vec<f64>) -> DecompositionDataset {
        DecompositionDataset::new(
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
        .unwrap()
    }

    fn weights_for(ds: &DecompositionDataset, w: Vec<f64>) -> RmpwWeights {
        let unit_ids = ds.rows_with_g(1);
        assert_eq!(unit_ids.len(), w.len());
        RmpwWeights {
            e1_hat: vec![0.5; w.len()],
            e0_hat: vec![0.5; w.len()],
            unit_ids,
            w,
            clip_events: 0,
        }
    }

    #[test]
    fn observed_disparity_examples() {
        let d = ds(vec![1, 0], vec![0, 0], vec![1.0, 0.0]);
        let (mu1, mu0, tau) = observed_disparity(&d).unwrap();
        assert_eq!((mu1, mu0, tau), (1.0, 0.0, 1.0));

        let same = ds(vec![1, 0, 1, 0], vec![0, 0, 1, 1], vec![0.3, 0.3, 0.7, 0.7]);
        let (_, _, tau) = observed_disparity(&same).unwrap();
        assert!(tau.abs() < 1e-15);

        let empty = ds(vec![1, 1], vec![0, 1], vec![0.0, 1.0]);
        assert!(matches!(
            observed_disparity(&empty),
            Err(Error::EmptyGroup { group: 0 })
        ));
    }

    #[test]
    fn reference_values_are_internally_consistent() {
        // Published reference decomposition: group means 0.451 and 0.200,
        // reduction 0.04, residual 0.211. These satisfy the identities the
        // estimator enforces.
        let mu1: f64 = 0.451;
        let mu0: f64 = 0.200;
        assert!((mu1 - mu0 - 0.251).abs() < 1e-12);
        assert!((0.04 + 0.211 - 0.251f64).abs() < 1e-12);
    }

    #[test]
    fn counterfactual_mean_is_weighted_mean() {
        let d = ds(vec![1, 1], vec![0, 1], vec![0.0, 1.0]);
        let w = weights_for(&d, vec![1.0, 3.0]);
        assert!((counterfactual_mean(&d, &w).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn equal_weights_reduce_to_unweighted_mean() {
        let d = ds(vec![1, 1, 1, 0], vec![0, 1, 0, 0], vec![2.0, 4.0, 9.0, 0.0]);
        let w = weights_for(&d, vec![2.5, 2.5, 2.5]);
        assert!((counterfactual_mean(&d, &w).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn unit_weights_put_all_disparity_in_residual() {
        let d = ds(vec![1, 1, 0, 0], vec![0, 1, 0, 1], vec![1.0, 0.0, 0.0, 0.0]);
        let w = weights_for(&d, vec![1.0, 1.0]);
        let est = decompose(&d, &w).unwrap();
        assert_eq!(est.mu_r0_hat, est.mu1);
        assert_eq!(est.reduction, 0.0);
        assert_eq!(est.residual, est.tau);
    }

    #[test]
    fn single_unit_ignores_weight() {
        let d = ds(vec![1, 0], vec![1, 0], vec![0.42, 0.0]);
        let w = weights_for(&d, vec![17.0]);
        assert_eq!(counterfactual_mean(&d, &w).unwrap(), 0.42);
    }

    #[test]
    fn additivity_and_scale_properties() {
        let d = ds(
            vec![1, 1, 1, 0, 0],
            vec![0, 1, 0, 0, 1],
            vec![0.9, 0.1, 0.5, 0.2, 0.4],
        );
        let w = weights_for(&d, vec![0.5, 2.0, 1.5]);
        let est = decompose(&d, &w).unwrap();
        assert!((est.reduction + est.residual - est.tau).abs() < 1e-12);

        // Scaling outcomes by c scales every estimate by c.
        let c = -3.5;
        let scaled = ds(
            d.g().to_vec(),
            d.z().to_vec(),
            d.y().iter().map(|y| c * y).collect(),
        );
        let est_c = decompose(&scaled, &w).unwrap();
        assert!((est_c.tau - c * est.tau).abs() < 1e-12);
        assert!((est_c.reduction - c * est.reduction).abs() < 1e-12);
        assert!((est_c.residual - c * est.residual).abs() < 1e-12);

        // Scaling weights by c > 0 leaves the Hájek mean unchanged.
        let w_scaled = weights_for(&d, w.w.iter().map(|v| 7.25 * v).collect());
        assert!((counterfactual_mean(&d, &w_scaled).unwrap() - est.mu_r0_hat).abs() < 1e-12);
    }
}
