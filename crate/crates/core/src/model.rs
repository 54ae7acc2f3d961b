//! The four nested share-equation models, their regressor sets, the
//! homogeneity/symmetry restriction rows, and reconstruction of the dropped
//! equation from the adding-up identities.
//!
//! Design columns always come in this order:
//!
//! | position      | regressor                                  | models |
//! |---------------|--------------------------------------------|--------|
//! | 0             | intercept                                  | all    |
//! | 1..=n         | `ln p_1 .. ln p_n`                         | all    |
//! | n+1           | `ln(X_t / P_t)`                            | all    |
//! | next          | `ln(X_t / P_t)^2 / Q_t`                    | 1      |
//! | next three    | `cos(2 pi t / period)`, `sin(..)`, `t`     | 1, 2   |
//! | next          | `ln X_t`                                   | 3      |

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{AidsError, Result};
use crate::indices::cobb_douglas_q;
use crate::panel::SharePanel;
use crate::sur::{LinearFit, LinearSystem, RestrictionSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelId {
    /// Quadratic, trigonometric and trend shifters.
    #[serde(rename = "Model_1")]
    Model1,
    /// Trigonometric and trend shifters.
    #[serde(rename = "Model_2")]
    Model2,
    /// Additional logged total expenditure regressor.
    #[serde(rename = "Model_3")]
    Model3,
    /// Plain AIDS.
    #[serde(rename = "Model_4")]
    Model4,
}

impl ModelId {
    pub const ALL: [ModelId; 4] = [ModelId::Model1, ModelId::Model2, ModelId::Model3, ModelId::Model4];

    pub fn number(self) -> u8 {
        match self {
            ModelId::Model1 => 1,
            ModelId::Model2 => 2,
            ModelId::Model3 => 3,
            ModelId::Model4 => 4,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(ModelId::Model1),
            2 => Ok(ModelId::Model2),
            3 => Ok(ModelId::Model3),
            4 => Ok(ModelId::Model4),
            other => Err(AidsError::Specification(format!("unknown model {other}, expected 1-4"))),
        }
    }

    pub fn has_quadratic(self) -> bool {
        self == ModelId::Model1
    }

    pub fn has_seasonal(self) -> bool {
        matches!(self, ModelId::Model1 | ModelId::Model2)
    }

    pub fn has_log_expenditure(self) -> bool {
        self == ModelId::Model3
    }

    /// Number of design columns for `n` goods.
    pub fn n_columns(self, n: usize) -> usize {
        n + 2 + usize::from(self.has_quadratic()) + 3 * usize::from(self.has_seasonal())
            + usize::from(self.has_log_expenditure())
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Model_{}", self.number())
    }
}

impl FromStr for ModelId {
    type Err = AidsError;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s.trim().trim_start_matches("Model_").trim_start_matches("model_");
        let n: u8 = digits
            .parse()
            .map_err(|_| AidsError::Specification(format!("cannot parse model id '{s}'")))?;
        ModelId::from_number(n)
    }
}

/// Model choice plus estimation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: ModelId,
    /// Always imposed through equation dropping; `false` is rejected.
    pub adding_up: bool,
    pub homogeneity: bool,
    pub symmetry: bool,
    /// Period of the trigonometric shifters, in weeks.
    pub trig_period: f64,
    /// Constant of the translog price index.
    pub alpha0: f64,
    pub ille_tol: f64,
    pub ille_max_iter: usize,
    /// Tolerance of the inner FGLS loop.
    pub sur_tol: f64,
    pub sur_max_iter: usize,
    /// Index of the equation left out of estimation; `None` drops the last good.
    pub drop_good: Option<usize>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            model: ModelId::Model4,
            adding_up: true,
            homogeneity: true,
            symmetry: true,
            trig_period: 4.0,
            alpha0: 0.0,
            ille_tol: 1e-8,
            ille_max_iter: 500,
            sur_tol: 1e-8,
            sur_max_iter: 100,
            drop_good: None,
        }
    }
}

impl ModelSpec {
    pub fn new(model: ModelId) -> Self {
        Self {
            model,
            ..Self::default()
        }
    }

    pub fn with_model(&self, model: ModelId) -> Self {
        Self { model, ..self.clone() }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !self.adding_up {
            return Err(AidsError::Specification(
                "adding-up cannot be switched off: the full share system has a singular covariance".into(),
            ));
        }
        if !(self.trig_period.is_finite() && self.trig_period > 0.0) {
            return Err(AidsError::Specification(format!(
                "trig_period must be positive, got {}",
                self.trig_period
            )));
        }
        if !self.alpha0.is_finite() {
            return Err(AidsError::Specification("alpha0 must be finite".into()));
        }
        if !(self.ille_tol > 0.0 && self.sur_tol > 0.0) {
            return Err(AidsError::Specification("tolerances must be positive".into()));
        }
        if self.ille_max_iter == 0 || self.sur_max_iter == 0 {
            return Err(AidsError::Specification("iteration limits must be positive".into()));
        }
        if n < 2 {
            return Err(AidsError::Specification(format!("a demand system needs n >= 2 goods, got {n}")));
        }
        if let Some(d) = self.drop_good {
            if d >= n {
                return Err(AidsError::Specification(format!(
                    "drop_good {d} out of range for {n} goods"
                )));
            }
        }
        Ok(())
    }

    pub fn dropped_index(&self, n: usize) -> usize {
        self.drop_good.unwrap_or(n - 1)
    }

    /// Goods whose equations are estimated, in panel order.
    pub fn retained(&self, n: usize) -> Vec<usize> {
        let d = self.dropped_index(n);
        (0..n).filter(|&g| g != d).collect()
    }

    /// Plain-text `key=value` form, one setting per line.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("model={}\n", self.model.number()));
        out.push_str(&format!("adding_up={}\n", self.adding_up));
        out.push_str(&format!("homogeneity={}\n", self.homogeneity));
        out.push_str(&format!("symmetry={}\n", self.symmetry));
        out.push_str(&format!("trig_period={:?}\n", self.trig_period));
        out.push_str(&format!("alpha0={:?}\n", self.alpha0));
        out.push_str(&format!("ille_tol={:?}\n", self.ille_tol));
        out.push_str(&format!("ille_max_iter={}\n", self.ille_max_iter));
        out.push_str(&format!("sur_tol={:?}\n", self.sur_tol));
        out.push_str(&format!("sur_max_iter={}\n", self.sur_max_iter));
        if let Some(d) = self.drop_good {
            out.push_str(&format!("drop_good={d}\n"));
        }
        out
    }

    /// Parses the `key=value` form. Blank lines and `#` comments are skipped;
    /// missing keys keep their defaults.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut spec = ModelSpec::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| AidsError::Format(format!("config line {}: expected key=value", lineno + 1)))?;
            spec.set(key.trim(), value.trim())
                .map_err(|e| e.context(format!("config line {}", lineno + 1)))?;
        }
        Ok(spec)
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| AidsError::Format(format!("invalid value '{value}' for '{key}'")))
        }
        match key {
            "model" => self.model = value.parse()?,
            "adding_up" => self.adding_up = parse(key, value)?,
            "homogeneity" => self.homogeneity = parse(key, value)?,
            "symmetry" => self.symmetry = parse(key, value)?,
            "trig_period" => self.trig_period = parse(key, value)?,
            "alpha0" => self.alpha0 = parse(key, value)?,
            "ille_tol" | "tol" => self.ille_tol = parse(key, value)?,
            "ille_max_iter" | "max_iter" => self.ille_max_iter = parse(key, value)?,
            "sur_tol" => self.sur_tol = parse(key, value)?,
            "sur_max_iter" => self.sur_max_iter = parse(key, value)?,
            "drop_good" => {
                self.drop_good = if value == "last" { None } else { Some(parse(key, value)?) }
            }
            other => return Err(AidsError::Format(format!("unknown model setting '{other}'"))),
        }
        Ok(())
    }
}

/// Full n-good coefficient set. Shifter vectors not used by a model are zero.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoefficientSet {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub lambda: DVector<f64>,
    pub trig_cos: DVector<f64>,
    pub trig_sin: DVector<f64>,
    pub trend: DVector<f64>,
    pub logx: DVector<f64>,
}

/// Largest absolute deviation from each theoretical identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RestrictionCheck {
    pub alpha_sum: f64,
    pub beta_sum: f64,
    pub gamma_column_sums: f64,
    pub gamma_row_sums: f64,
    pub gamma_asymmetry: f64,
    pub shifter_sums: f64,
}

impl RestrictionCheck {
    pub fn max(&self) -> f64 {
        [
            self.alpha_sum,
            self.beta_sum,
            self.gamma_column_sums,
            self.gamma_row_sums,
            self.gamma_asymmetry,
            self.shifter_sums,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

impl CoefficientSet {
    pub fn zeros(n: usize) -> Self {
        Self {
            alpha: DVector::zeros(n),
            beta: DVector::zeros(n),
            gamma: DMatrix::zeros(n, n),
            lambda: DVector::zeros(n),
            trig_cos: DVector::zeros(n),
            trig_sin: DVector::zeros(n),
            trend: DVector::zeros(n),
            logx: DVector::zeros(n),
        }
    }

    pub fn n_goods(&self) -> usize {
        self.alpha.len()
    }

    pub fn check(&self) -> RestrictionCheck {
        let n = self.n_goods();
        let col = (0..n).map(|j| self.gamma.column(j).sum().abs()).fold(0.0, f64::max);
        let row = (0..n).map(|i| self.gamma.row(i).sum().abs()).fold(0.0, f64::max);
        let asym = (&self.gamma - self.gamma.transpose()).amax();
        let shifters = [&self.lambda, &self.trig_cos, &self.trig_sin, &self.trend, &self.logx]
            .iter()
            .map(|v| v.sum().abs())
            .fold(0.0, f64::max);
        RestrictionCheck {
            alpha_sum: (self.alpha.sum() - 1.0).abs(),
            beta_sum: self.beta.sum().abs(),
            gamma_column_sums: col,
            gamma_row_sums: row,
            gamma_asymmetry: asym,
            shifter_sums: shifters,
        }
    }

    /// Coefficients laid out as an `n x k` matrix matching the design of `model`.
    pub fn to_matrix(&self, model: ModelId) -> DMatrix<f64> {
        let n = self.n_goods();
        let k = model.n_columns(n);
        let mut b = DMatrix::zeros(n, k);
        for i in 0..n {
            b[(i, 0)] = self.alpha[i];
            for j in 0..n {
                b[(i, 1 + j)] = self.gamma[(i, j)];
            }
            b[(i, n + 1)] = self.beta[i];
            let mut c = n + 2;
            if model.has_quadratic() {
                b[(i, c)] = self.lambda[i];
                c += 1;
            }
            if model.has_seasonal() {
                b[(i, c)] = self.trig_cos[i];
                b[(i, c + 1)] = self.trig_sin[i];
                b[(i, c + 2)] = self.trend[i];
                c += 3;
            }
            if model.has_log_expenditure() {
                b[(i, c)] = self.logx[i];
            }
        }
        b
    }

    /// Inverse of [`CoefficientSet::to_matrix`].
    pub fn from_matrix(b: &DMatrix<f64>, model: ModelId) -> Self {
        let n = b.nrows();
        let mut out = Self::zeros(n);
        for i in 0..n {
            out.alpha[i] = b[(i, 0)];
            for j in 0..n {
                out.gamma[(i, j)] = b[(i, 1 + j)];
            }
            out.beta[i] = b[(i, n + 1)];
            let mut c = n + 2;
            if model.has_quadratic() {
                out.lambda[i] = b[(i, c)];
                c += 1;
            }
            if model.has_seasonal() {
                out.trig_cos[i] = b[(i, c)];
                out.trig_sin[i] = b[(i, c + 1)];
                out.trend[i] = b[(i, c + 2)];
                c += 3;
            }
            if model.has_log_expenditure() {
                out.logx[i] = b[(i, c)];
            }
        }
        out
    }
}

/// Labels of the design columns, in order.
pub fn column_labels(model: ModelId, goods: &[String]) -> Vec<String> {
    let mut labels = vec!["intercept".to_string()];
    labels.extend(goods.iter().map(|g| format!("ln_p_{g}")));
    labels.push("ln_real_expenditure".into());
    if model.has_quadratic() {
        labels.push("quadratic_over_q".into());
    }
    if model.has_seasonal() {
        labels.extend(["cos".to_string(), "sin".to_string(), "trend".to_string()]);
    }
    if model.has_log_expenditure() {
        labels.push("ln_expenditure".into());
    }
    labels
}

/// The common `T x k` regressor matrix for `model`.
///
/// `stage1_beta` must be given for Model_1 (it defines the Cobb-Douglas
/// aggregate price `Q`) and is ignored otherwise.
pub fn design_matrix(
    panel: &SharePanel,
    spec: &ModelSpec,
    log_price_index: &DVector<f64>,
    stage1_beta: Option<&DVector<f64>>,
) -> Result<DMatrix<f64>> {
    let (t, n) = (panel.n_weeks(), panel.n_goods());
    if log_price_index.len() != t {
        return Err(AidsError::dimension("log price index", t, log_price_index.len()));
    }
    let q = if spec.model.has_quadratic() {
        let beta = stage1_beta.ok_or_else(|| {
            AidsError::Specification("Model_1 needs stage-1 beta coefficients for the aggregate price Q".into())
        })?;
        Some(cobb_douglas_q(beta, panel.log_prices())?.values)
    } else {
        None
    };
    let k = spec.model.n_columns(n);
    let lp = panel.log_prices();
    let x = panel.total_expenditure();
    let omega = 2.0 * std::f64::consts::PI / spec.trig_period;
    let mut d = DMatrix::zeros(t, k);
    for r in 0..t {
        let ln_x = x[r].ln();
        let real = ln_x - log_price_index[r];
        d[(r, 0)] = 1.0;
        for j in 0..n {
            d[(r, 1 + j)] = lp[(r, j)];
        }
        d[(r, n + 1)] = real;
        let mut c = n + 2;
        if let Some(q) = &q {
            d[(r, c)] = real * real / q[r];
            c += 1;
        }
        if spec.model.has_seasonal() {
            let tt = r as f64;
            d[(r, c)] = (omega * tt).cos();
            d[(r, c + 1)] = (omega * tt).sin();
            d[(r, c + 2)] = tt;
            c += 3;
        }
        if spec.model.has_log_expenditure() {
            d[(r, c)] = ln_x;
        }
    }
    if let Some((r, c)) = (0..t).flat_map(|r| (0..k).map(move |c| (r, c))).find(|&(r, c)| !d[(r, c)].is_finite()) {
        return Err(AidsError::Numerical {
            message: format!("non-finite design entry at week {r}, column {c}"),
            condition: f64::INFINITY,
        });
    }
    Ok(d)
}

/// Share equations of the retained goods against the model's regressors.
pub fn build_design(
    panel: &SharePanel,
    spec: &ModelSpec,
    log_price_index: &DVector<f64>,
    stage1_beta: Option<&DVector<f64>>,
) -> Result<LinearSystem> {
    let n = panel.n_goods();
    spec.validate(n)?;
    let design = design_matrix(panel, spec, log_price_index, stage1_beta)?;
    let retained = spec.retained(n);
    let shares = panel.shares();
    let responses = DMatrix::from_fn(panel.n_weeks(), retained.len(), |r, i| shares[(r, retained[i])]);
    let goods = panel.source().goods();
    LinearSystem::new(
        responses,
        design,
        retained.iter().map(|&g| goods[g].clone()).collect(),
        column_labels(spec.model, goods),
    )
}

/// Homogeneity (zero gamma row sums) and symmetry rows over the retained
/// equations. Adding-up needs no rows: it is the dropped equation.
pub fn restrictions_for(spec: &ModelSpec, n: usize) -> Result<RestrictionSet> {
    spec.validate(n)?;
    let retained = spec.retained(n);
    let m = retained.len();
    let k = spec.model.n_columns(n);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    if spec.homogeneity {
        for i in 0..m {
            let mut row = vec![0.0; m * k];
            for j in 0..n {
                row[i * k + 1 + j] = 1.0;
            }
            rows.push(row);
        }
    }
    if spec.symmetry {
        for a in 0..m {
            for b in (a + 1)..m {
                let mut row = vec![0.0; m * k];
                row[a * k + 1 + retained[b]] = 1.0;
                row[b * k + 1 + retained[a]] = -1.0;
                rows.push(row);
            }
        }
    }
    let matrix = DMatrix::from_fn(rows.len(), m * k, |r, c| rows[r][c]);
    RestrictionSet::new(matrix, DVector::zeros(rows.len()))
}

/// Linear map from retained coefficients to the full set:
/// `vec(B_full) = J vec(B_retained) + offset`, both equation-major.
pub fn completion_map(spec: &ModelSpec, n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let k = spec.model.n_columns(n);
    let retained = spec.retained(n);
    let d = spec.dropped_index(n);
    let m = retained.len();
    let mut j = DMatrix::zeros(n * k, m * k);
    for (i, &g) in retained.iter().enumerate() {
        for c in 0..k {
            j[(g * k + c, i * k + c)] = 1.0;
            j[(d * k + c, i * k + c)] = -1.0;
        }
    }
    let mut offset = DVector::zeros(n * k);
    offset[d * k] = 1.0;
    (j, offset)
}

/// Recovers the dropped equation from the adding-up identities and returns
/// all `n` goods' coefficients.
pub fn complete_coefficients(fit: &LinearFit, spec: &ModelSpec, n: usize) -> Result<CoefficientSet> {
    let k = spec.model.n_columns(n);
    let m = n - 1;
    if fit.coefficients.shape() != (m, k) {
        return Err(AidsError::dimension(
            "retained coefficients",
            format!("{m}x{k}"),
            format!("{}x{}", fit.coefficients.nrows(), fit.coefficients.ncols()),
        ));
    }
    Ok(complete_matrix(&fit.coefficients, spec, n))
}

pub(crate) fn complete_matrix(retained_coefs: &DMatrix<f64>, spec: &ModelSpec, n: usize) -> CoefficientSet {
    let k = spec.model.n_columns(n);
    let retained = spec.retained(n);
    let d = spec.dropped_index(n);
    let mut full = DMatrix::zeros(n, k);
    for (i, &g) in retained.iter().enumerate() {
        full.set_row(g, &retained_coefs.row(i));
    }
    for c in 0..k {
        let s: f64 = (0..retained.len()).map(|i| retained_coefs[(i, c)]).sum();
        full[(d, c)] = if c == 0 { 1.0 - s } else { -s };
    }
    CoefficientSet::from_matrix(&full, spec.model)
}
