//! Binary logistic regression by Newton / iteratively reweighted least
//! squares, used for both group propensity models.
//!
//! The designs here are small (intercept, main effects, optional two-way
//! interactions; p well under a hundred), so the weighted normal equations
//! are solved by a dense Cholesky factorization each iteration. Step-halving
//! guards the Newton update so the log-likelihood never decreases.
//!
//! Two numerical policies live here:
//! - **Separation**: the MLE diverges under complete or quasi-separation.
//!   We declare separation once any coefficient magnitude exceeds
//!   [`SEPARATION_COEF_BOUND`]; beyond that the fitted probabilities are
//!   saturated to machine precision and the "estimate" is meaningless.
//! - **Clipping**: predicted probabilities are clipped to
//!   `[PROB_CLIP, 1 - PROB_CLIP]` so the overlap condition `0 < e < 1`
//!   holds numerically. Clipping events are counted by callers and surfaced
//!   in diagnostics.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::dataset::DecompositionDataset;
use crate::error::{Error, Result};

/// Gradient infinity-norm below which the fit is declared converged.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Newton iteration cap.
pub const DEFAULT_MAX_ITER: usize = 100;
/// Coefficient magnitude at which separation is declared.
pub const SEPARATION_COEF_BOUND: f64 = 15.0;
/// Probability clipping width at prediction time.
pub const PROB_CLIP: f64 = 1e-6;
const MAX_HALVINGS: usize = 10;

/// Which covariate block(s) enter the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CovariateSelection {
    AllowableOnly,
    AllCovariates,
}

/// Specification of a propensity design: covariate block selection and
/// whether all two-way interactions are appended. An intercept is always
/// present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DesignSpec {
    pub selection: CovariateSelection,
    pub include_two_way_interactions: bool,
}

impl DesignSpec {
    pub fn new(selection: CovariateSelection, include_two_way_interactions: bool) -> Self {
        Self {
            selection,
            include_two_way_interactions,
        }
    }

    /// Design width for a dataset: intercept + main effects + interactions.
    pub fn width(&self, ds: &DecompositionDataset) -> usize {
        let k = self.n_selected(ds);
        let pairs = if self.include_two_way_interactions {
            k * k.saturating_sub(1) / 2
        } else {
            0
        };
        1 + k + pairs
    }

    fn n_selected(&self, ds: &DecompositionDataset) -> usize {
        match self.selection {
            CovariateSelection::AllowableOnly => ds.n_allowable(),
            CovariateSelection::AllCovariates => ds.n_allowable() + ds.n_nonallowable(),
        }
    }
}

/// Dense row-major design matrix with column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
    labels: Vec<String>,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// New design containing the given rows (repetition allowed).
    pub fn select_rows(&self, indices: &[usize]) -> DesignMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            data,
            rows: indices.len(),
            cols: self.cols,
            labels: self.labels.clone(),
        }
    }
}

/// Build the design matrix for every row of the dataset.
///
/// Column order is deterministic: intercept, main effects in dataset order
/// (allowable block first), then two-way interactions in lexicographic pair
/// order over the selected columns.
pub fn build_design(ds: &DecompositionDataset, spec: &DesignSpec) -> Result<DesignMatrix> {
    let selected: Vec<(&str, &[f64])> = match spec.selection {
        CovariateSelection::AllowableOnly => (0..ds.n_allowable())
            .map(|j| (ds.allowable_names()[j].as_str(), ds.allowable_column(j)))
            .collect(),
        CovariateSelection::AllCovariates => (0..ds.n_allowable())
            .map(|j| (ds.allowable_names()[j].as_str(), ds.allowable_column(j)))
            .chain((0..ds.n_nonallowable()).map(|j| {
                (
                    ds.nonallowable_names()[j].as_str(),
                    ds.nonallowable_column(j),
                )
            }))
            .collect(),
    };

    for (i, (name, _)) in selected.iter().enumerate() {
        if selected[i + 1..].iter().any(|(other, _)| other == name) {
            return Err(Error::DuplicateColumn {
                column: (*name).to_string(),
            });
        }
    }

    let k = selected.len();
    let mut labels = vec!["(intercept)".to_string()];
    labels.extend(selected.iter().map(|(name, _)| (*name).to_string()));
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    if spec.include_two_way_interactions {
        for a in 0..k {
            for b in (a + 1)..k {
                pairs.push((a, b));
                labels.push(format!("{}:{}", selected[a].0, selected[b].0));
            }
        }
    }

    let cols = 1 + k + pairs.len();
    let n = ds.n();
    let mut data = Vec::with_capacity(n * cols);
    for i in 0..n {
        data.push(1.0);
        for (_, col) in &selected {
            data.push(col[i]);
        }
        for &(a, b) in &pairs {
            data.push(selected[a].1[i] * selected[b].1[i]);
        }
    }
    Ok(DesignMatrix {
        data,
        rows: n,
        cols,
        labels,
    })
}

/// Numerically stable logistic function.
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^t) without overflow.
fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// A fitted logistic model with convergence diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropensityModel {
    pub coefficients: Vec<f64>,
    pub design: DesignSpec,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    /// Log-likelihood after each accepted Newton step (index 0 = start).
    pub loglik_trace: Vec<f64>,
}

impl PropensityModel {
    /// Linear predictor for one design row.
    pub fn linear_predictor(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.coefficients.len() {
            return Err(Error::DimensionMismatch {
                context: "design row width".into(),
                expected: self.coefficients.len(),
                actual: row.len(),
            });
        }
        Ok(self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum())
    }

    /// Predicted probability, clipped to `[PROB_CLIP, 1 - PROB_CLIP]`, and
    /// whether clipping fired.
    pub fn predict_with_clip(&self, row: &[f64]) -> Result<(f64, bool)> {
        let p = expit(self.linear_predictor(row)?);
        if p < PROB_CLIP {
            Ok((PROB_CLIP, true))
        } else if p > 1.0 - PROB_CLIP {
            Ok((1.0 - PROB_CLIP, true))
        } else {
            Ok((p, false))
        }
    }
}

/// Predicted probability for one design row, clipped into `(0, 1)`.
pub fn predict_prob(model: &PropensityModel, row: &[f64]) -> Result<f64> {
    model.predict_with_clip(row).map(|(p, _)| p)
}

fn log_likelihood(x: &DesignMatrix, response: &[u8], beta: &DVector<f64>) -> f64 {
    let mut ll = 0.0;
    for (i, &r) in response.iter().enumerate() {
        let eta: f64 = x.row(i).iter().zip(beta.iter()).map(|(v, b)| v * b).sum();
        ll += f64::from(r) * eta - log1p_exp(eta);
    }
    ll
}

/// Maximum-likelihood fit by Newton iterations with step-halving.
///
/// Iterates until the gradient infinity-norm drops to `tol` or `max_iter`
/// is reached. Errors on a constant response, on separation, and on
/// singular weighted normal equations.
///
/// The design matrix carries no selection metadata, so the returned model
/// is tagged with the default spec; [`fit_on_rows`] stamps the actual one.
pub fn fit_logistic(
    x: &DesignMatrix,
    response: &[u8],
    tol: f64,
    max_iter: usize,
) -> Result<PropensityModel> {
    let n = x.rows();
    let p = x.cols();
    if response.len() != n {
        return Err(Error::DimensionMismatch {
            context: "response length".into(),
            expected: n,
            actual: response.len(),
        });
    }
    if n < p {
        return Err(Error::InsufficientRows { n, p });
    }
    let ones = response.iter().filter(|&&r| r == 1).count();
    if ones == 0 || ones == n {
        return Err(Error::ConstantResponse);
    }

    let mut beta = DVector::zeros(p);
    let mut ll = log_likelihood(x, response, &beta);
    let mut trace = vec![ll];
    let mut gradient_norm = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..max_iter {
        // Gradient X'(r - p) and Hessian X' diag(p(1-p)) X at the current beta.
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        for (i, &r) in response.iter().enumerate() {
            let row = x.row(i);
            let eta: f64 = row.iter().zip(beta.iter()).map(|(v, b)| v * b).sum();
            let prob = expit(eta);
            let resid = f64::from(r) - prob;
            let weight = prob * (1.0 - prob);
            for a in 0..p {
                grad[a] += row[a] * resid;
                for b in a..p {
                    hess[(a, b)] += weight * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }

        gradient_norm = grad.amax();
        iterations = iter;
        if gradient_norm <= tol {
            converged = true;
            break;
        }

        let direction = Cholesky::new(hess)
            .ok_or_else(|| Error::SingularSystem {
                context: "weighted normal equations".into(),
            })?
            .solve(&grad);

        // Step-halving: shrink the Newton step until the likelihood does not
        // decrease. If it still decreases after the last halving, the fit has
        // stalled at numerical precision; stop.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate = &beta + step * &direction;
            let candidate_ll = log_likelihood(x, response, &candidate);
            if candidate_ll >= ll {
                beta = candidate;
                ll = candidate_ll;
                trace.push(ll);
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        if !accepted {
            break;
        }

        let max_abs = beta.amax();
        if max_abs > SEPARATION_COEF_BOUND {
            return Err(Error::Separation {
                max_abs_coefficient: max_abs,
            });
        }
    }

    Ok(PropensityModel {
        coefficients: beta.iter().copied().collect(),
        design: DesignSpec::new(CovariateSelection::AllCovariates, false),
        converged,
        iterations,
        final_gradient_norm: gradient_norm,
        loglik_trace: trace,
    })
}

/// Fit on a row subset of a full design, tagging the model with its spec.
pub fn fit_on_rows(
    design: &DesignMatrix,
    spec: &DesignSpec,
    rows: &[usize],
    response: &[u8],
    tol: f64,
    max_iter: usize,
) -> Result<PropensityModel> {
    let sub = design.select_rows(rows);
    let sub_response: Vec<u8> = rows.iter().map(|&i| response[i]).collect();
    let mut model = fit_logistic(&sub, &sub_response, tol, max_iter)?;
    model.design = *spec;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DecompositionDataset;

    fn ds_with_covariates(p_a: usize, p_n: usize, n: usize) -> DecompositionDataset {
        // Deterministic covariate fill; g/z split keeps all four cells present.
        let col = |offset: usize| -> Vec<f64> {
            (0..n)
                .map(|i| ((i * 7 + offset * 3) % 11) as f64 - 5.0)
                .collect()
        };
        DecompositionDataset::new(
            (0..n).map(|i| (i % 2) as u8).collect(),
            (0..n).map(|i| ((i / 2) % 2) as u8).collect(),
            (0..n).map(|i| i as f64).collect(),
            (0..p_a).map(col).collect(),
            (p_a..p_a + p_n).map(col).collect(),
            (0..p_a).map(|j| format!("a{j}")).collect(),
            (0..p_n).map(|j| format!("x{j}")).collect(),
            "y".into(),
            "g".into(),
            "z".into(),
        )
        .unwrap()
    }

    #[test]
    fn design_widths_count_interactions() {
        let spec2 = DesignSpec::new(CovariateSelection::AllCovariates, true);
        assert_eq!(
            build_design(&ds_with_covariates(1, 1, 8), &spec2)
                .unwrap()
                .cols(),
            4
        );
        assert_eq!(
            build_design(&ds_with_covariates(2, 1, 8), &spec2)
                .unwrap()
                .cols(),
            7
        );
        let spec0 = DesignSpec::new(CovariateSelection::AllCovariates, true);
        assert_eq!(
            build_design(&ds_with_covariates(0, 0, 8), &spec0)
                .unwrap()
                .cols(),
            1
        );
        // width() agrees with the built matrix, including empty blocks.
        for (p_a, p_n) in [(0usize, 0usize), (1, 1), (2, 1), (0, 3)] {
            let ds = ds_with_covariates(p_a, p_n, 8);
            for spec in [
                DesignSpec::new(CovariateSelection::AllCovariates, true),
                DesignSpec::new(CovariateSelection::AllowableOnly, true),
                DesignSpec::new(CovariateSelection::AllowableOnly, false),
            ] {
                assert_eq!(spec.width(&ds), build_design(&ds, &spec).unwrap().cols());
            }
        }
    }

    #[test]
    fn design_column_order_is_deterministic() {
        let ds = ds_with_covariates(2, 1, 8);
        let spec = DesignSpec::new(CovariateSelection::AllCovariates, true);
        let design = build_design(&ds, &spec).unwrap();
        assert_eq!(
            design.labels(),
            &["(intercept)", "a0", "a1", "x0", "a0:a1", "a0:x0", "a1:x0"]
        );
        // Interactions multiply the underlying columns.
        let i = 3;
        let row = design.row(i);
        assert_eq!(row[0], 1.0);
        assert_eq!(row[4], row[1] * row[2]);
        assert_eq!(row[6], row[2] * row[3]);
    }

    #[test]
    fn allowable_only_selection_skips_nonallowable() {
        let ds = ds_with_covariates(1, 2, 8);
        let spec = DesignSpec::new(CovariateSelection::AllowableOnly, false);
        let design = build_design(&ds, &spec).unwrap();
        assert_eq!(design.labels(), &["(intercept)", "a0"]);
    }

    #[test]
    fn duplicate_labels_rejected() {
        let ds = DecompositionDataset::new(
            vec![0, 0, 1, 1],
            vec![0, 1, 0, 1],
            vec![0.0; 4],
            vec![vec![1.0; 4]],
            vec![vec![2.0; 4]],
            vec!["dup".into()],
            vec!["dup".into()],
            "y".into(),
            "g".into(),
            "z".into(),
        )
        .unwrap();
        let spec = DesignSpec::new(CovariateSelection::AllCovariates, false);
        assert!(matches!(
            build_design(&ds, &spec),
            Err(Error::DuplicateColumn { .. })
        ));
    }

    fn intercept_only(n: usize) -> DesignMatrix {
        DesignMatrix {
            data: vec![1.0; n],
            rows: n,
            cols: 1,
            labels: vec!["(intercept)".into()],
        }
    }

    #[test]
    fn intercept_only_balanced_response_gives_zero() {
        let x = intercept_only(4);
        let model = fit_logistic(&x, &[0, 1, 0, 1], DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(model.converged);
        assert!(model.coefficients[0].abs() < 1e-10);
        assert!((predict_prob(&model, &[1.0]).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn intercept_only_matches_closed_form_logit() {
        // MLE of an intercept-only model is logit of the response mean: ln 3 for 3/4.
        let x = intercept_only(4);
        let model = fit_logistic(&x, &[1, 1, 1, 0], DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((model.coefficients[0] - 3.0f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn perfectly_separated_data_errors() {
        let x = DesignMatrix {
            data: vec![1.0, -2.0, 1.0, -1.0, 1.0, 1.0, 1.0, 2.0],
            rows: 4,
            cols: 2,
            labels: vec!["(intercept)".into(), "x".into()],
        };
        let err = fit_logistic(&x, &[0, 0, 1, 1], DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap_err();
        assert!(matches!(err, Error::Separation { .. }));
    }

    #[test]
    fn constant_response_errors() {
        let x = intercept_only(4);
        assert!(matches!(
            fit_logistic(&x, &[1, 1, 1, 1], DEFAULT_TOL, DEFAULT_MAX_ITER),
            Err(Error::ConstantResponse)
        ));
    }

    #[test]
    fn predict_prob_examples() {
        let model = PropensityModel {
            coefficients: vec![0.0, 3.0f64.ln()],
            design: DesignSpec::new(CovariateSelection::AllCovariates, false),
            converged: true,
            iterations: 0,
            final_gradient_norm: 0.0,
            loglik_trace: vec![],
        };
        assert!((predict_prob(&model, &[1.0, 0.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!((predict_prob(&model, &[1.0, 1.0]).unwrap() - 0.75).abs() < 1e-12);
        let saturated = PropensityModel {
            coefficients: vec![50.0],
            ..model.clone()
        };
        let (p, clipped) = saturated.predict_with_clip(&[1.0]).unwrap();
        assert_eq!(p, 1.0 - PROB_CLIP);
        assert!(clipped);
        assert!(matches!(
            predict_prob(&model, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn fitted_mean_matches_response_mean() {
        // The intercept score equation forces mean(fitted) = mean(response).
        let ds = ds_with_covariates(2, 1, 40);
        let spec = DesignSpec::new(CovariateSelection::AllCovariates, false);
        let design = build_design(&ds, &spec).unwrap();
        // Response correlated with a0 but not separated.
        let response: Vec<u8> = (0..40)
            .map(|i| u8::from(design.row(i)[1] + ((i % 5) as f64) > 1.0))
            .collect();
        let model = fit_logistic(&design, &response, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(model.converged);
        let mean_fitted: f64 = (0..40)
            .map(|i| expit(model.linear_predictor(design.row(i)).unwrap()))
            .sum::<f64>()
            / 40.0;
        let mean_response = response.iter().map(|&r| f64::from(r)).sum::<f64>() / 40.0;
        assert!((mean_fitted - mean_response).abs() < 1e-8);
    }

    #[test]
    fn loglik_never_decreases() {
        let ds = ds_with_covariates(2, 0, 30);
        let spec = DesignSpec::new(CovariateSelection::AllCovariates, true);
        let design = build_design(&ds, &spec).unwrap();
        let response: Vec<u8> = (0..30).map(|i| ((i * 3 + 1) % 4 < 2) as u8).collect();
        let model = fit_logistic(&design, &response, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        for pair in model.loglik_trace.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-12);
        }
    }
}
