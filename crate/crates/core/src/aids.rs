//! Iterated linear least squares estimation (ILLE) of the share system.
//!
//! The first pass uses the Stone index as `ln P_t`. Every later pass holds
//! the translog index fixed at the previous pass's `alpha`/`gamma`, refits
//! the restricted SUR system, and stops once no retained coefficient moves
//! by more than `ille_tol`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{AidsError, Result};
use crate::indices::{stone_index, translog_index};
use crate::model::{
    build_design, complete_coefficients, completion_map, design_matrix, restrictions_for, CoefficientSet, ModelId,
    ModelSpec,
};
use crate::panel::SharePanel;
use crate::sur::{fit_restricted, Weighting};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Convergence {
    pub iterations: usize,
    pub final_delta: f64,
    pub converged: bool,
    /// Max absolute change of retained coefficients, one entry per pass after the first.
    pub trace: Vec<f64>,
    /// Passes whose residual covariance was singular and were fitted unweighted.
    pub unweighted_passes: usize,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub goods: Vec<String>,
    pub dropped_good: usize,
    pub coefficients: CoefficientSet,
    /// `(n-1) x k` estimated coefficients of the retained equations.
    pub retained_coefficients: DMatrix<f64>,
    /// Covariance of the retained coefficients (equation-major stacking).
    pub coefficient_covariance: DMatrix<f64>,
    /// Covariance of all `n x k` coefficients after completion (singular by construction).
    pub full_coefficient_covariance: DMatrix<f64>,
    pub residual_covariance: DMatrix<f64>,
    /// `None` for an exact fit.
    pub log_likelihood: Option<f64>,
    /// Free coefficients after restrictions.
    pub n_free_coefficients: usize,
    /// Free coefficients plus the distinct residual covariance terms.
    pub n_free_parameters: usize,
    /// `ln P_t` used in the final pass.
    pub translog_index: Vec<f64>,
    /// Cobb-Douglas `Q_t` (Model_1 only).
    pub aggregate_price: Option<Vec<f64>>,
    pub stage1_beta: Option<DVector<f64>>,
    pub design: DMatrix<f64>,
    pub column_labels: Vec<String>,
    pub fitted_shares: DMatrix<f64>,
    pub convergence: Convergence,
    pub r2_shares: Vec<Option<f64>>,
    pub r2_quantities: Vec<Option<f64>>,
    /// `max |R b - c|` on the final pass.
    pub restriction_violation: f64,
    pub exact_fit: bool,
}

impl FitResult {
    pub fn model(&self) -> ModelId {
        self.spec.model
    }

    pub fn n_goods(&self) -> usize {
        self.goods.len()
    }

    pub fn n_weeks(&self) -> usize {
        self.fitted_shares.nrows()
    }
}

/// Runs ILLE for `spec`. Model_1 first fits Model_4 to obtain the `beta`
/// that defines the aggregate price `Q`.
pub fn fit_aids(panel: &SharePanel, spec: &ModelSpec) -> Result<FitResult> {
    let stage1 = if spec.model.has_quadratic() {
        let first = fit_aids(panel, &spec.with_model(ModelId::Model4))
            .map_err(|e| e.context("stage-1 Model_4 fit for the aggregate price Q"))?;
        Some(first.coefficients.beta)
    } else {
        None
    };
    fit_aids_with_stage1(panel, spec, stage1.as_ref())
}

/// [`fit_aids`] with an explicit stage-1 `beta` for Model_1.
pub fn fit_aids_with_stage1(
    panel: &SharePanel,
    spec: &ModelSpec,
    stage1_beta: Option<&DVector<f64>>,
) -> Result<FitResult> {
    let (t, n) = (panel.n_weeks(), panel.n_goods());
    spec.validate(n)?;
    let k = spec.model.n_columns(n);
    if t < k + n {
        return Err(AidsError::InsufficientData(format!(
            "{} needs at least {} weeks for {n} goods, panel has {t}",
            spec.model,
            k + n
        )));
    }
    let stage1_beta = if spec.model.has_quadratic() {
        Some(stage1_beta.ok_or_else(|| {
            AidsError::Specification("Model_1 needs stage-1 beta coefficients".into())
        })?)
    } else {
        None
    };
    let restrictions = restrictions_for(spec, n)?;
    let mut log_index = stone_index(panel.shares(), panel.log_prices())?.as_vector();
    let mut previous: Option<DMatrix<f64>> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut unweighted_passes = 0;

    let (lin, index_used) = loop {
        iterations += 1;
        let system = build_design(panel, spec, &log_index, stage1_beta)?;
        let weighted = fit_restricted(&system, &restrictions, Weighting::FglsIterated, spec.sur_tol, spec.sur_max_iter);
        let lin = match weighted {
            // near-exact fits leave a rank-deficient residual covariance
            Err(AidsError::Numerical { condition, .. }) => {
                log::debug!(
                    "{} ILLE iteration {iterations}: singular FGLS weight (condition {condition:.3e}), unweighted pass",
                    spec.model
                );
                unweighted_passes += 1;
                fit_restricted(&system, &restrictions, Weighting::Identity, spec.sur_tol, spec.sur_max_iter)
            }
            other => other,
        }
        .map_err(|e| e.context(format!("{} ILLE iteration {iterations}", spec.model)))?;
        let coefs = complete_coefficients(&lin, spec, n)?;
        let next_index = translog_index(&coefs.alpha, &coefs.gamma, panel.log_prices(), spec.alpha0)?.as_vector();
        if let Some(prev) = &previous {
            let delta = (&lin.coefficients - prev).amax();
            trace.push(delta);
            if delta < spec.ille_tol {
                converged = true;
            }
        }
        if converged || iterations >= spec.ille_max_iter {
            break (lin, log_index);
        }
        previous = Some(lin.coefficients.clone());
        log_index = next_index;
    };

    let coefficients = complete_coefficients(&lin, spec, n)?;
    let design = design_matrix(panel, spec, &index_used, stage1_beta)?;
    let fitted_shares = &design * coefficients.to_matrix(spec.model).transpose();
    let (jac, _) = completion_map(spec, n);
    let full_cov = &jac * &lin.coefficient_covariance * jac.transpose();
    let m = n - 1;
    let aggregate_price = match stage1_beta {
        Some(beta) => Some(crate::indices::cobb_douglas_q(beta, panel.log_prices())?.values),
        None => None,
    };
    let goods = panel.source().goods().to_vec();
    let (r2_shares, r2_quantities) = r_squared_parts(&fitted_shares, panel);

    let result = FitResult {
        spec: spec.clone(),
        goods,
        dropped_good: spec.dropped_index(n),
        coefficients,
        restriction_violation: restrictions.max_violation(&lin.stacked()),
        retained_coefficients: lin.coefficients,
        coefficient_covariance: lin.coefficient_covariance,
        full_coefficient_covariance: (&full_cov + full_cov.transpose()) * 0.5,
        residual_covariance: lin.residual_covariance,
        log_likelihood: lin.log_likelihood,
        n_free_coefficients: lin.n_free,
        n_free_parameters: lin.n_free + m * (m + 1) / 2,
        translog_index: index_used.iter().copied().collect(),
        aggregate_price,
        stage1_beta: stage1_beta.cloned(),
        column_labels: crate::model::column_labels(spec.model, panel.source().goods()),
        design,
        fitted_shares,
        convergence: Convergence {
            iterations,
            final_delta: trace.last().copied().unwrap_or(0.0),
            converged,
            trace: trace.clone(),
            unweighted_passes,
        },
        r2_shares,
        r2_quantities,
        exact_fit: lin.exact_fit,
    };
    if !converged {
        return Err(AidsError::IlleNotConverged {
            trace,
            partial: Box::new(result),
        });
    }
    Ok(result)
}

fn r_squared_one(observed: &[f64], fitted: &[f64]) -> Option<f64> {
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let sst: f64 = observed.iter().map(|y| (y - mean).powi(2)).sum();
    // relative cut: a series constant up to rounding has no variance to explain
    let scale = observed.iter().map(|y| y * y).sum::<f64>();
    if sst <= 1e-24 * scale.max(f64::MIN_POSITIVE) {
        return None;
    }
    let ssr: f64 = observed.iter().zip(fitted).map(|(y, f)| (y - f).powi(2)).sum();
    Some(1.0 - ssr / sst)
}

fn r_squared_parts(fitted_shares: &DMatrix<f64>, panel: &SharePanel) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let n = panel.n_goods();
    let x = panel.total_expenditure();
    let prices = panel.source().prices();
    let quantities = panel.source().quantities();
    let mut shares = Vec::with_capacity(n);
    let mut qty = Vec::with_capacity(n);
    for i in 0..n {
        let obs: Vec<f64> = panel.shares().column(i).iter().copied().collect();
        let fit: Vec<f64> = fitted_shares.column(i).iter().copied().collect();
        shares.push(r_squared_one(&obs, &fit));
        let q_obs: Vec<f64> = quantities.column(i).iter().copied().collect();
        let q_fit: Vec<f64> = (0..fit.len()).map(|t| fit[t] * x[t] / prices[(t, i)]).collect();
        qty.push(r_squared_one(&q_obs, &q_fit));
    }
    (shares, qty)
}

/// R-squared of observed against fitted shares, and of observed quantities
/// against `w_hat X / p`. Values are not clamped and may be negative.
pub fn r_squared(fit: &FitResult, panel: &SharePanel) -> Result<(Vec<f64>, Vec<f64>)> {
    if fit.fitted_shares.shape() != panel.shares().shape() {
        return Err(AidsError::dimension(
            "fitted shares",
            format!("{}x{}", panel.n_weeks(), panel.n_goods()),
            format!("{}x{}", fit.fitted_shares.nrows(), fit.fitted_shares.ncols()),
        ));
    }
    let (s, q) = r_squared_parts(&fit.fitted_shares, panel);
    let unwrap = |v: Vec<Option<f64>>, series| {
        v.into_iter()
            .enumerate()
            .map(|(good, r)| r.ok_or(AidsError::UndefinedRSquared { good, series }))
            .collect::<Result<Vec<f64>>>()
    };
    Ok((unwrap(s, "share")?, unwrap(q, "quantity")?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LrResult {
    pub full: ModelId,
    pub nested: ModelId,
    pub stat: f64,
    pub df: i64,
    pub p_value: f64,
    /// Set when the statistic is negative (a nested fit beat the full one).
    pub warning: Option<String>,
}

/// Upper tail `P(chi2_df >= stat)`.
pub fn chi_square_upper_tail(stat: f64, df: f64) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    match ChiSquared::new(df) {
        Ok(dist) => dist.sf(stat),
        Err(_) => f64::NAN,
    }
}

/// Likelihood-ratio comparison `2 (LL_full - LL_nested)` with
/// `df = #Df_full - #Df_nested`.
///
/// `df == 0` is only accepted for a degenerate comparison (statistic 0), which
/// gets `p = 1`.
pub fn lr_test(full: &FitResult, nested: &FitResult) -> Result<LrResult> {
    let ll = |f: &FitResult| {
        f.log_likelihood.ok_or_else(|| {
            AidsError::Specification(format!(
                "{} is an exact fit; its likelihood is unbounded",
                f.spec.model
            ))
        })
    };
    lr_from_parts(
        full.spec.model,
        ll(full)?,
        full.n_free_parameters,
        nested.spec.model,
        ll(nested)?,
        nested.n_free_parameters,
    )
}

pub fn lr_from_parts(
    full: ModelId,
    ll_full: f64,
    df_full: usize,
    nested: ModelId,
    ll_nested: f64,
    df_nested: usize,
) -> Result<LrResult> {
    let df = df_full as i64 - df_nested as i64;
    let stat = 2.0 * (ll_full - ll_nested);
    if df == 0 && stat.abs() <= 1e-9 * ll_full.abs().max(1.0) {
        return Ok(LrResult {
            full,
            nested,
            stat: 0.0,
            df,
            p_value: 1.0,
            warning: None,
        });
    }
    if df <= 0 {
        return Err(AidsError::Specification(format!(
            "{nested} ({df_nested} parameters) is not smaller than {full} ({df_full} parameters)"
        )));
    }
    let warning = (stat < 0.0).then(|| {
        format!("negative LR statistic {stat:.4}: {nested} fits better than {full}; check convergence or nesting")
    });
    Ok(LrResult {
        full,
        nested,
        stat,
        df,
        p_value: chi_square_upper_tail(stat, df as f64),
        warning,
    })
}
