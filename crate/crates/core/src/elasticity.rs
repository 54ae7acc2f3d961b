//! Marshallian price and expenditure elasticities, their delta-method
//! standard errors, significance codes and good classifications.
//!
//! ```text
//! e_ij  = -d_ij + g_ij / w_i - (b_i / w_i) (a_j + sum_k g_jk ln p_k)
//! eta_i = 1 + b_i / w_i
//! ```
//!
//! Shifter coefficients (quadratic, seasonal, trend, log expenditure) act as
//! intercept shifts and do not enter either formula.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::aids::FitResult;
use crate::error::{AidsError, Result};
use crate::model::CoefficientSet;
use crate::panel::SharePanel;

/// Shares below this are treated as degenerate.
pub const MIN_SHARE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSource {
    SampleMean,
    Observation(usize),
    /// Share vector supplied directly (tests, model-implied shares).
    Given,
}

/// Shares and log prices at which elasticities are evaluated.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalPoint {
    pub shares: DVector<f64>,
    pub log_prices: DVector<f64>,
    pub source: EvalSource,
}

impl EvalPoint {
    pub fn new(shares: DVector<f64>, log_prices: DVector<f64>, source: EvalSource) -> Result<Self> {
        if shares.len() != log_prices.len() {
            return Err(AidsError::dimension("evaluation log prices", shares.len(), log_prices.len()));
        }
        if shares.iter().chain(log_prices.iter()).any(|v| !v.is_finite()) {
            return Err(AidsError::Numerical {
                message: "evaluation point has non-finite entries".into(),
                condition: f64::INFINITY,
            });
        }
        let total = shares.sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(AidsError::data(
                "evaluation point",
                format!("shares sum to {total}, expected 1"),
            ));
        }
        if let Some((good, &share)) = shares.iter().enumerate().find(|(_, &w)| !(w > 0.0 && w < 1.0)) {
            return Err(AidsError::DegenerateShare { good, share });
        }
        Ok(Self {
            shares,
            log_prices,
            source,
        })
    }

    /// Mean observed shares and mean log prices.
    pub fn sample_mean(panel: &SharePanel) -> Result<Self> {
        let t = panel.n_weeks() as f64;
        let shares = DVector::from_iterator(panel.n_goods(), panel.shares().column_iter().map(|c| c.sum() / t));
        let log_prices = DVector::from_iterator(panel.n_goods(), panel.log_prices().column_iter().map(|c| c.sum() / t));
        Self::new(shares, log_prices, EvalSource::SampleMean)
    }

    /// Observed shares and log prices of week `t`.
    pub fn observation(panel: &SharePanel, t: usize) -> Result<Self> {
        if t >= panel.n_weeks() {
            return Err(AidsError::dimension("observation index", format!("< {}", panel.n_weeks()), t));
        }
        Self::new(
            panel.shares().row(t).transpose(),
            panel.log_prices().row(t).transpose(),
            EvalSource::Observation(t),
        )
    }

    /// Fitted shares of week `t` with the observed log prices.
    pub fn fitted_observation(fit: &FitResult, panel: &SharePanel, t: usize) -> Result<Self> {
        if t >= fit.n_weeks() || t >= panel.n_weeks() {
            return Err(AidsError::dimension("observation index", format!("< {}", fit.n_weeks()), t));
        }
        Self::new(
            fit.fitted_shares.row(t).transpose(),
            panel.log_prices().row(t).transpose(),
            EvalSource::Observation(t),
        )
    }

    fn checked_shares(&self, n: usize) -> Result<&DVector<f64>> {
        if self.shares.len() != n {
            return Err(AidsError::dimension("evaluation point goods", n, self.shares.len()));
        }
        if let Some((good, &share)) = self.shares.iter().enumerate().find(|(_, &w)| w < MIN_SHARE) {
            return Err(AidsError::DegenerateShare { good, share });
        }
        Ok(&self.shares)
    }
}

/// `a_j + sum_k g_jk ln p_k` for every `j`.
fn price_index_slopes(coeffs: &CoefficientSet, lp: &DVector<f64>) -> DVector<f64> {
    &coeffs.alpha + &coeffs.gamma * lp
}

/// Marshallian (uncompensated) price elasticities, `n x n`.
pub fn marshallian(coeffs: &CoefficientSet, at: &EvalPoint) -> Result<DMatrix<f64>> {
    let n = coeffs.n_goods();
    let w = at.checked_shares(n)?;
    let slopes = price_index_slopes(coeffs, &at.log_prices);
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let kron = if i == j { 1.0 } else { 0.0 };
        -kron + coeffs.gamma[(i, j)] / w[i] - coeffs.beta[i] / w[i] * slopes[j]
    }))
}

/// Expenditure elasticities, length `n`.
pub fn expenditure(coeffs: &CoefficientSet, at: &EvalPoint) -> Result<DVector<f64>> {
    let n = coeffs.n_goods();
    let w = at.checked_shares(n)?;
    Ok(DVector::from_fn(n, |i, _| 1.0 + coeffs.beta[i] / w[i]))
}

/// Hicksian elasticities via the Slutsky equation, `e_ij + eta_i w_j`.
pub fn hicksian(coeffs: &CoefficientSet, at: &EvalPoint) -> Result<DMatrix<f64>> {
    let m = marshallian(coeffs, at)?;
    let eta = expenditure(coeffs, at)?;
    let w = &at.shares;
    Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] + eta[i] * w[j]))
}

/// Slutsky substitution matrix in share form, `S_ij = w_i (e_ij + eta_i w_j)`,
/// symmetrized.
pub fn slutsky_matrix(coeffs: &CoefficientSet, at: &EvalPoint) -> Result<DMatrix<f64>> {
    let h = hicksian(coeffs, at)?;
    let w = &at.shares;
    let s = DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| w[i] * h[(i, j)]);
    Ok((&s + s.transpose()) * 0.5)
}

/// `(marshallian[i][j], expenditure[i])` gradient vectors.
type Gradients = (Vec<Vec<DVector<f64>>>, Vec<DVector<f64>>);

/// Gradients of every elasticity with respect to the full coefficient vector
/// (goods-major stacking of the `n x k` coefficient matrix, `k` design columns).
pub(crate) fn elasticity_gradients(
    coeffs: &CoefficientSet,
    at: &EvalPoint,
    k: usize,
) -> Result<Gradients> {
    let n = coeffs.n_goods();
    let w = at.checked_shares(n)?;
    let lp = &at.log_prices;
    let slopes = price_index_slopes(coeffs, lp);
    let alpha = |g: usize| g * k;
    let gamma = |g: usize, j: usize| g * k + 1 + j;
    let beta = |g: usize| g * k + n + 1;
    let mut marsh = Vec::with_capacity(n);
    let mut expend = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            let mut g = DVector::zeros(n * k);
            g[gamma(i, j)] += 1.0 / w[i];
            g[beta(i)] += -slopes[j] / w[i];
            g[alpha(j)] += -coeffs.beta[i] / w[i];
            for kk in 0..n {
                g[gamma(j, kk)] += -coeffs.beta[i] / w[i] * lp[kk];
            }
            row.push(g);
        }
        marsh.push(row);
        let mut g = DVector::zeros(n * k);
        g[beta(i)] = 1.0 / w[i];
        expend.push(g);
    }
    Ok((marsh, expend))
}

/// Significance code from a two-sided normal p-value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Significance {
    #[serde(rename = "***")]
    P001,
    #[serde(rename = "**")]
    P01,
    #[serde(rename = "*")]
    P05,
    #[serde(rename = ".")]
    P10,
    #[serde(rename = "")]
    None,
}

impl Significance {
    pub fn from_p(p: f64) -> Self {
        if p < 0.001 {
            Significance::P001
        } else if p < 0.01 {
            Significance::P01
        } else if p < 0.05 {
            Significance::P05
        } else if p < 0.1 {
            Significance::P10
        } else {
            Significance::None
        }
    }

    /// Code for an estimate and its standard error. A zero standard error
    /// marks any finite estimate as `***`.
    pub fn from_estimate(estimate: f64, se: f64) -> Self {
        if !estimate.is_finite() || !se.is_finite() {
            return Significance::None;
        }
        if se == 0.0 {
            return Significance::P001;
        }
        Significance::from_p(two_sided_normal_p(estimate / se))
    }

    pub fn code(self) -> &'static str {
        match self {
            Significance::P001 => "***",
            Significance::P01 => "**",
            Significance::P05 => "*",
            Significance::P10 => ".",
            Significance::None => "",
        }
    }
}

impl fmt::Display for Significance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

pub fn two_sided_normal_p(z: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    2.0 * normal.sf(z.abs())
}

/// Legend printed under elasticity and LR tables.
pub const SIGNIFICANCE_LEGEND: &str =
    "Signif. codes (two-sided): '***' p < 0.001, '**' p < 0.01, '*' p < 0.05, '.' p < 0.1, ' ' otherwise";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StandardErrors {
    pub marshallian: DMatrix<f64>,
    pub expenditure: DVector<f64>,
}

fn check_psd(cov: &DMatrix<f64>) -> Result<()> {
    if cov.nrows() == 0 {
        return Ok(());
    }
    let asym = (cov - cov.transpose()).amax();
    let scale = cov.amax().max(f64::MIN_POSITIVE);
    if asym > 1e-8 * scale {
        return Err(AidsError::Numerical {
            message: format!("coefficient covariance is not symmetric (max asymmetry {asym:.3e})"),
            condition: f64::NAN,
        });
    }
    let eig = SymmetricEigen::new((cov + cov.transpose()) * 0.5);
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if min < -1e-8 * max.abs().max(f64::MIN_POSITIVE) {
        return Err(AidsError::Numerical {
            message: format!("coefficient covariance is not positive semidefinite (min eigenvalue {min:.3e})"),
            condition: if min != 0.0 { (max / min).abs() } else { f64::INFINITY },
        });
    }
    Ok(())
}

fn quad_form(g: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    (g.transpose() * cov * g)[(0, 0)].max(0.0)
}

/// Delta-method standard errors with the evaluation point held fixed, using
/// the covariance of all `n x k` completed coefficients.
pub fn std_errors_with_cov(
    coeffs: &CoefficientSet,
    full_cov: &DMatrix<f64>,
    k: usize,
    at: &EvalPoint,
) -> Result<StandardErrors> {
    let n = coeffs.n_goods();
    if full_cov.shape() != (n * k, n * k) {
        return Err(AidsError::dimension(
            "coefficient covariance",
            format!("{0}x{0}", n * k),
            format!("{}x{}", full_cov.nrows(), full_cov.ncols()),
        ));
    }
    check_psd(full_cov)?;
    let (gm, ge) = elasticity_gradients(coeffs, at, k)?;
    Ok(StandardErrors {
        marshallian: DMatrix::from_fn(n, n, |i, j| quad_form(&gm[i][j], full_cov).sqrt()),
        expenditure: DVector::from_fn(n, |i, _| quad_form(&ge[i], full_cov).sqrt()),
    })
}

pub fn std_errors(fit: &FitResult, at: &EvalPoint) -> Result<(StandardErrors, SignificanceTable)> {
    let k = fit.spec.model.n_columns(fit.n_goods());
    let se = std_errors_with_cov(&fit.coefficients, &fit.full_coefficient_covariance, k, at)?;
    let m = marshallian(&fit.coefficients, at)?;
    let e = expenditure(&fit.coefficients, at)?;
    let codes = SignificanceTable::new(&m, &e, &se);
    Ok((se, codes))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignificanceTable {
    pub marshallian: Vec<Vec<Significance>>,
    pub expenditure: Vec<Significance>,
}

impl SignificanceTable {
    pub fn new(m: &DMatrix<f64>, e: &DVector<f64>, se: &StandardErrors) -> Self {
        let n = e.len();
        Self {
            marshallian: (0..n)
                .map(|i| (0..n).map(|j| Significance::from_estimate(m[(i, j)], se.marshallian[(i, j)])).collect())
                .collect(),
            expenditure: (0..n).map(|i| Significance::from_estimate(e[i], se.expenditure[i])).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GoodClass {
    /// `eta > 1`.
    Luxury,
    /// `0 < eta <= 1` (the boundary `eta == 1` is a necessity).
    Necessity,
    /// `eta <= 0`.
    Inferior,
}

impl GoodClass {
    pub fn from_expenditure_elasticity(eta: f64) -> Self {
        if eta > 1.0 {
            GoodClass::Luxury
        } else if eta > 0.0 {
            GoodClass::Necessity
        } else {
            GoodClass::Inferior
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairClass {
    Substitute,
    Complement,
    Independent,
}

impl PairClass {
    pub fn from_cross_elasticity(e: f64) -> Self {
        if e > 0.0 {
            PairClass::Substitute
        } else if e < 0.0 {
            PairClass::Complement
        } else {
            PairClass::Independent
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification {
    pub goods: Vec<GoodClass>,
    /// `pairs[i][j]` for `i != j`; the diagonal is `None`.
    pub pairs: Vec<Vec<Option<PairClass>>>,
    /// `|e_ii| > 1`.
    pub own_price_elastic: Vec<bool>,
}

/// How the evaluation point is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    SampleMean,
    /// Elasticities at each observed week, averaged.
    PerObservation,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElasticityReport {
    pub goods: Vec<String>,
    pub mode: EvalMode,
    pub marshallian: DMatrix<f64>,
    pub expenditure: DVector<f64>,
    pub std_errors: StandardErrors,
    pub significance: SignificanceTable,
    pub classification: Classification,
}

/// Applies the luxury/necessity/inferior and substitute/complement rules.
pub fn classify(report: &ElasticityReport) -> Classification {
    let n = report.expenditure.len();
    Classification {
        goods: report.expenditure.iter().map(|&e| GoodClass::from_expenditure_elasticity(e)).collect(),
        pairs: (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (i != j).then(|| PairClass::from_cross_elasticity(report.marshallian[(i, j)])))
                    .collect()
            })
            .collect(),
        own_price_elastic: (0..n).map(|i| report.marshallian[(i, i)].abs() > 1.0).collect(),
    }
}

/// Full elasticity report (estimates, standard errors, codes, classes).
pub fn elasticity_report(fit: &FitResult, panel: &SharePanel, mode: EvalMode) -> Result<ElasticityReport> {
    let n = fit.n_goods();
    let k = fit.spec.model.n_columns(n);
    let coeffs = &fit.coefficients;
    let cov = &fit.full_coefficient_covariance;
    check_psd(cov)?;
    let (m, e, gm, ge) = match mode {
        EvalMode::SampleMean => {
            let at = EvalPoint::sample_mean(panel)?;
            let (gm, ge) = elasticity_gradients(coeffs, &at, k)?;
            (marshallian(coeffs, &at)?, expenditure(coeffs, &at)?, gm, ge)
        }
        EvalMode::PerObservation => {
            let t = panel.n_weeks();
            let mut m = DMatrix::zeros(n, n);
            let mut e = DVector::zeros(n);
            let mut gm = vec![vec![DVector::zeros(n * k); n]; n];
            let mut ge = vec![DVector::zeros(n * k); n];
            for obs in 0..t {
                let at = EvalPoint::observation(panel, obs)?;
                m += marshallian(coeffs, &at)?;
                e += expenditure(coeffs, &at)?;
                let (gmo, geo) = elasticity_gradients(coeffs, &at, k)?;
                for i in 0..n {
                    ge[i] += &geo[i];
                    for j in 0..n {
                        gm[i][j] += &gmo[i][j];
                    }
                }
            }
            let scale = 1.0 / t as f64;
            gm.iter_mut().flatten().for_each(|g| *g *= scale);
            ge.iter_mut().for_each(|g| *g *= scale);
            (m * scale, e * scale, gm, ge)
        }
    };
    let std_errors = StandardErrors {
        marshallian: DMatrix::from_fn(n, n, |i, j| quad_form(&gm[i][j], cov).sqrt()),
        expenditure: DVector::from_fn(n, |i, _| quad_form(&ge[i], cov).sqrt()),
    };
    let significance = SignificanceTable::new(&m, &e, &std_errors);
    let mut report = ElasticityReport {
        goods: fit.goods.clone(),
        mode,
        marshallian: m,
        expenditure: e,
        std_errors,
        significance,
        classification: Classification {
            goods: Vec::new(),
            pairs: Vec::new(),
            own_price_elastic: Vec::new(),
        },
    };
    report.classification = classify(&report);
    Ok(report)
}
