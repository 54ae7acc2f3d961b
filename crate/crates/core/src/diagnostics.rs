//! Regularity checks on a fitted system: monotonicity (fitted shares inside
//! the unit interval) and concavity (negative semidefinite Slutsky matrix),
//! both reported as the percentage of weeks that pass.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::aids::FitResult;
use crate::elasticity::{slutsky_matrix, EvalPoint, EvalSource};
use crate::error::Result;
use crate::model::CoefficientSet;
use crate::panel::SharePanel;

/// Default tolerance on the largest Slutsky eigenvalue.
pub const CONCAVITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ObservationFlags {
    pub monotone: bool,
    pub concave: bool,
    /// A fitted share was too small for the elasticity formulas.
    pub skipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityReport {
    pub monotonicity_pct: f64,
    pub concavity_pct: f64,
    pub tolerance: f64,
    pub per_observation_flags: Vec<ObservationFlags>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub pct: f64,
    pub flags: Vec<bool>,
    /// Weeks whose evaluation was skipped (counted as failures).
    pub skipped: Vec<usize>,
}

fn percentage(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        return 0.0;
    }
    100.0 * flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64
}

/// Weeks whose every share lies strictly inside `(0, 1)`.
pub fn monotonicity_from_shares(shares: &DMatrix<f64>) -> CheckOutcome {
    let flags: Vec<bool> = shares.row_iter().map(|r| r.iter().all(|&w| w > 0.0 && w < 1.0)).collect();
    CheckOutcome {
        pct: percentage(&flags),
        flags,
        skipped: Vec::new(),
    }
}

pub fn check_monotonicity(fit: &FitResult) -> CheckOutcome {
    monotonicity_from_shares(&fit.fitted_shares)
}

/// Largest eigenvalue of the symmetrized matrix.
pub fn max_eigenvalue(s: &DMatrix<f64>) -> f64 {
    let sym = (s + s.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.max()
}

pub fn is_negative_semidefinite(s: &DMatrix<f64>, tol: f64) -> bool {
    max_eigenvalue(s) <= tol
}

/// Concavity at one point.
pub fn concave_at(coeffs: &CoefficientSet, at: &EvalPoint, tol: f64) -> Result<bool> {
    Ok(is_negative_semidefinite(&slutsky_matrix(coeffs, at)?, tol))
}

/// Concavity at every week, using fitted shares and observed log prices.
pub fn check_concavity(fit: &FitResult, panel: &SharePanel, tol: f64) -> Result<CheckOutcome> {
    let n = fit.n_goods();
    let mut flags = Vec::with_capacity(fit.n_weeks());
    let mut skipped = Vec::new();
    for t in 0..fit.n_weeks() {
        let shares = fit.fitted_shares.row(t).transpose();
        let lp = panel.log_prices().row(t).transpose();
        let point = (shares.len() == n)
            .then(|| EvalPoint::new(shares, lp, EvalSource::Observation(t)).ok())
            .flatten();
        match point.map(|at| concave_at(&fit.coefficients, &at, tol)) {
            Some(Ok(pass)) => flags.push(pass),
            _ => {
                skipped.push(t);
                flags.push(false);
            }
        }
    }
    Ok(CheckOutcome {
        pct: percentage(&flags),
        flags,
        skipped,
    })
}

pub fn regularity_report(fit: &FitResult, panel: &SharePanel, tol: f64) -> Result<RegularityReport> {
    let mono = check_monotonicity(fit);
    let conc = check_concavity(fit, panel, tol)?;
    let per_observation_flags = mono
        .flags
        .iter()
        .zip(&conc.flags)
        .enumerate()
        .map(|(t, (&monotone, &concave))| ObservationFlags {
            monotone,
            concave,
            skipped: conc.skipped.contains(&t),
        })
        .collect();
    Ok(RegularityReport {
        monotonicity_pct: mono.pct,
        concavity_pct: conc.pct,
        tolerance: tol,
        per_observation_flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn point(w: &[f64], lp: &[f64]) -> EvalPoint {
        EvalPoint::new(DVector::from_row_slice(w), DVector::from_row_slice(lp), EvalSource::Given).unwrap()
    }

    /// NSD iff `-S` has a Cholesky factor after a tiny ridge.
    fn cholesky_nsd(s: &DMatrix<f64>) -> bool {
        let n = s.nrows();
        let neg = -(s + s.transpose()) * 0.5 + DMatrix::identity(n, n) * 1e-10;
        neg.cholesky().is_some()
    }

    #[test]
    fn cobb_douglas_slutsky_closed_form() {
        let mut c = CoefficientSet::zeros(4);
        c.alpha = DVector::from_element(4, 0.25);
        let at = point(&[0.25; 4], &[0.3, -0.1, 0.9, 0.0]);
        let s = slutsky_matrix(&c, &at).unwrap();
        let closed = DMatrix::from_fn(4, 4, |i, j| 0.25 * (0.25 - if i == j { 1.0 } else { 0.0 }));
        assert!((&s - &closed).amax() < 1e-15);
        assert!(is_negative_semidefinite(&s, CONCAVITY_TOL));
        assert!(cholesky_nsd(&s));
        // eigenvalues of w(w'1 - I) at uniform shares: 0 once, -0.25 three times
        assert!(max_eigenvalue(&s).abs() < 1e-15);
    }

    #[test]
    fn scalar_case_always_passes() {
        for w in [0.01, 0.5, 0.99] {
            let s = DMatrix::from_element(1, 1, w * (w - 1.0));
            assert!(is_negative_semidefinite(&s, CONCAVITY_TOL));
        }
    }

    #[test]
    fn slutsky_rows_sum_to_zero_under_restrictions() {
        let mut c = CoefficientSet::zeros(3);
        c.alpha = DVector::from_vec(vec![0.3, 0.3, 0.4]);
        c.beta = DVector::from_vec(vec![0.04, -0.01, -0.03]);
        c.gamma = DMatrix::from_row_slice(3, 3, &[0.08, -0.03, -0.05, -0.03, 0.06, -0.03, -0.05, -0.03, 0.08]);
        let at = point(&[0.2, 0.5, 0.3], &[0.3, 1.1, -0.6]);
        let s = slutsky_matrix(&c, &at).unwrap();
        for i in 0..3 {
            assert!(s.row(i).sum().abs() < 1e-12);
        }
    }

    /// Two goods, `gamma = g [[1,-1],[-1,1]]`, log prices zero. With
    /// `w_1 = a_1 + b_1 r` the compensated own-price elasticity changes sign at
    /// `g* = w_1 (1 - w_1) - b_1^2 r`.
    #[test]
    fn own_compensated_sign_flip_threshold() {
        let (a1, b1, r) = (0.4, 0.05, 0.5);
        let w1 = a1 + b1 * r;
        let threshold = w1 * (1.0 - w1) - b1 * b1 * r;
        let build = |g: f64| {
            let mut c = CoefficientSet::zeros(2);
            c.alpha = DVector::from_vec(vec![a1, 1.0 - a1]);
            c.beta = DVector::from_vec(vec![b1, -b1]);
            c.gamma = DMatrix::from_row_slice(2, 2, &[g, -g, -g, g]);
            c
        };
        let at = point(&[w1, 1.0 - w1], &[0.0, 0.0]);
        let below = slutsky_matrix(&build(threshold - 0.01), &at).unwrap();
        let above = slutsky_matrix(&build(threshold + 0.01), &at).unwrap();
        assert!(below[(0, 0)] < 0.0 && above[(0, 0)] > 0.0);
        assert!(concave_at(&build(threshold - 0.01), &at, CONCAVITY_TOL).unwrap());
        assert!(!concave_at(&build(threshold + 0.01), &at, CONCAVITY_TOL).unwrap());
        assert!(cholesky_nsd(&below));
        assert!(!cholesky_nsd(&above));
    }

    #[test]
    fn monotonicity_single_violation() {
        let mut w = DMatrix::from_element(10, 2, 0.5);
        w[(3, 0)] = -0.01;
        w[(3, 1)] = 1.01;
        let out = monotonicity_from_shares(&w);
        assert!((out.pct - 90.0).abs() < 1e-12);
        assert!(!out.flags[3]);
        assert_eq!(monotonicity_from_shares(&DMatrix::from_element(4, 2, 0.5)).pct, 100.0);
    }
}
