//! Synthetic panels drawn from a known coefficient set, used as the ground
//! truth for estimator and elasticity checks.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{AidsError, Result};
use crate::indices::translog_at;
use crate::model::{CoefficientSet, ModelId};
use crate::panel::{MarketPanel, WeekId};

/// Independent Gaussian random walks in log prices, starting at `log_mean`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PriceProcess {
    pub log_mean: DVector<f64>,
    pub volatility: DVector<f64>,
    pub seed: u64,
}

/// IID normal log total expenditure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpenditureProcess {
    pub mean: f64,
    pub volatility: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthConfig {
    pub truth: CoefficientSet,
    /// Decides which shifters of `truth` enter the shares.
    pub model: ModelId,
    pub weeks: usize,
    pub goods: Vec<String>,
    pub region: String,
    pub price_process: PriceProcess,
    pub expenditure_process: ExpenditureProcess,
    pub noise_sd: f64,
    pub noise_seed: u64,
    pub alpha0: f64,
    pub trig_period: f64,
    /// Redraws of a week's disturbance before giving up.
    pub max_retries: usize,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.truth.n_goods();
        if n < 2 {
            return Err(AidsError::Generation("at least two goods are needed".into()));
        }
        if self.weeks == 0 {
            return Err(AidsError::Generation("weeks must be positive".into()));
        }
        if self.goods.len() != n {
            return Err(AidsError::dimension("good labels", n, self.goods.len()));
        }
        if self.price_process.log_mean.len() != n || self.price_process.volatility.len() != n {
            return Err(AidsError::dimension(
                "price process",
                n,
                format!("{}/{}", self.price_process.log_mean.len(), self.price_process.volatility.len()),
            ));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(AidsError::Generation(format!("noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        let bad = |v: f64| v.is_nan() || v < 0.0;
        if self.price_process.volatility.iter().any(|&v| bad(v)) || bad(self.expenditure_process.volatility) {
            return Err(AidsError::Generation("volatilities must be >= 0".into()));
        }
        if self.trig_period.is_nan() || self.trig_period <= 0.0 {
            return Err(AidsError::Generation("trig_period must be positive".into()));
        }
        let violation = self.truth.check().max();
        if violation > 1e-10 {
            return Err(AidsError::Generation(format!(
                "truth violates the theoretical restrictions by {violation:.3e}"
            )));
        }
        Ok(())
    }
}

/// `n x (n-1)` orthonormal basis of the sum-zero subspace (Helmert contrasts).
pub fn sum_zero_basis(n: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(n, n - 1);
    for c in 0..n - 1 {
        let m = (c + 1) as f64;
        let scale = 1.0 / (m * (m + 1.0)).sqrt();
        for r in 0..=c {
            h[(r, c)] = scale;
        }
        h[(c + 1, c)] = -m * scale;
    }
    h
}

/// Noise-free shares for one week.
pub fn model_shares(
    truth: &CoefficientSet,
    model: ModelId,
    log_prices: &[f64],
    ln_x: f64,
    week: usize,
    alpha0: f64,
    trig_period: f64,
) -> DVector<f64> {
    let n = truth.n_goods();
    let ln_p = translog_at(&truth.alpha, &truth.gamma, log_prices, alpha0);
    let real = ln_x - ln_p;
    let lp = DVector::from_column_slice(log_prices);
    let mut w = &truth.alpha + &truth.gamma * &lp + &truth.beta * real;
    if model.has_quadratic() {
        let q = truth.beta.dot(&lp).exp();
        w += &truth.lambda * (real * real / q);
    }
    if model.has_seasonal() {
        let angle = 2.0 * PI * week as f64 / trig_period;
        w += &truth.trig_cos * angle.cos() + &truth.trig_sin * angle.sin() + &truth.trend * week as f64;
    }
    if model.has_log_expenditure() {
        w += &truth.logx * ln_x;
    }
    debug_assert_eq!(w.len(), n);
    w
}

fn interior(w: &DVector<f64>) -> bool {
    w.iter().all(|&s| s > 0.0 && s < 1.0)
}

/// Draws a panel from `config`. Deterministic for fixed seeds.
pub fn generate(config: &SynthConfig) -> Result<MarketPanel> {
    config.validate()?;
    let n = config.truth.n_goods();
    let t = config.weeks;
    let mut price_rng = ChaCha8Rng::seed_from_u64(config.price_process.seed);
    let mut spend_rng = ChaCha8Rng::seed_from_u64(config.expenditure_process.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.noise_seed);
    let basis = sum_zero_basis(n);

    let mut log_prices = DMatrix::zeros(t, n);
    let mut current = config.price_process.log_mean.clone();
    for r in 0..t {
        if r > 0 {
            for j in 0..n {
                let z: f64 = StandardNormal.sample(&mut price_rng);
                current[j] += config.price_process.volatility[j] * z;
            }
        }
        log_prices.row_mut(r).copy_from(&current.transpose());
    }
    let ln_x: Vec<f64> = (0..t)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut spend_rng);
            config.expenditure_process.mean + config.expenditure_process.volatility * z
        })
        .collect();

    let mut prices = DMatrix::zeros(t, n);
    let mut quantities = DMatrix::zeros(t, n);
    for r in 0..t {
        let lp: Vec<f64> = log_prices.row(r).iter().copied().collect();
        let mean = model_shares(&config.truth, config.model, &lp, ln_x[r], r, config.alpha0, config.trig_period);
        if !interior(&mean) {
            let (good, share) = mean
                .iter()
                .copied()
                .enumerate()
                .find(|&(_, s)| !(s > 0.0 && s < 1.0))
                .unwrap_or((0, f64::NAN));
            return Err(AidsError::Generation(format!(
                "week {r}: noise-free share of good {good} is {share:.4}; use a tamer truth or less price volatility"
            )));
        }
        let mut shares = None;
        for _ in 0..=config.max_retries {
            let z = DVector::from_fn(n - 1, |_, _| {
                let v: f64 = StandardNormal.sample(&mut noise_rng);
                v * config.noise_sd
            });
            let candidate = &mean + &basis * z;
            if interior(&candidate) {
                shares = Some(candidate);
                break;
            }
        }
        let shares = shares.ok_or_else(|| {
            AidsError::Generation(format!(
                "week {r}: shares left (0, 1) in {} draws; lower noise_sd",
                config.max_retries + 1
            ))
        })?;
        let x = ln_x[r].exp();
        for j in 0..n {
            let p = lp[j].exp();
            prices[(r, j)] = p;
            quantities[(r, j)] = shares[j] * x / p;
        }
    }
    let weeks = (1..=t as i64).map(WeekId::Index).collect();
    MarketPanel::new(config.region.clone(), config.goods.clone(), weeks, prices, quantities)
}

/// Canonical restriction-consistent, regular truth for `n` goods.
///
/// * `n = 2`: `alpha = (0.5, 0.5)`, `beta = (0.05, -0.05)`, `gamma = 0.05 [[1,-1],[-1,1]]`.
/// * `n >= 3`: `alpha_i = 1/n + 0.1 (i - (n-1)/2) / (n-1)`,
///   `beta_i = 0.05 cos(2 pi i / n)` centred to sum zero,
///   `gamma = 0.1 (I - J/n) + 0.02 v v'` with `v = e_0 - e_1`.
pub fn default_truth(n: usize) -> CoefficientSet {
    assert!(n >= 2, "default_truth needs at least two goods");
    let mut c = CoefficientSet::zeros(n);
    if n == 2 {
        c.alpha = DVector::from_vec(vec![0.5, 0.5]);
        c.beta = DVector::from_vec(vec![0.05, -0.05]);
        c.gamma = DMatrix::from_row_slice(2, 2, &[0.05, -0.05, -0.05, 0.05]);
        return c;
    }
    let nf = n as f64;
    let mid = (nf - 1.0) / 2.0;
    c.alpha = DVector::from_fn(n, |i, _| 1.0 / nf + 0.1 * (i as f64 - mid) / (nf - 1.0));
    let raw = DVector::from_fn(n, |i, _| 0.05 * (2.0 * PI * i as f64 / nf).cos());
    let centre = raw.mean();
    c.beta = raw.add_scalar(-centre);
    let mut v = DVector::zeros(n);
    v[0] = 1.0;
    v[1] = -1.0;
    c.gamma = (DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / nf)) * 0.1 + &v * v.transpose() * 0.02;
    c
}

/// Price means (in levels) used by [`default_config`] for four goods.
pub const DEFAULT_PRICE_LEVELS: [f64; 4] = [20.13, 14.45, 9.12, 7.35];

/// Model_4 config around [`default_truth`]: price volatility 0.03, log
/// expenditure centred 0.5 above the translog index at mean prices with
/// volatility 0.1. Seeds for prices, expenditure and noise derive from `seed`.
pub fn default_config(n: usize, weeks: usize, noise_sd: f64, seed: u64) -> SynthConfig {
    let truth = default_truth(n);
    let log_mean = if n == DEFAULT_PRICE_LEVELS.len() {
        DVector::from_iterator(n, DEFAULT_PRICE_LEVELS.iter().map(|p| p.ln()))
    } else {
        DVector::from_fn(n, |i, _| (5.0 + 2.0 * i as f64).ln())
    };
    let lp: Vec<f64> = log_mean.iter().copied().collect();
    let ln_p = translog_at(&truth.alpha, &truth.gamma, &lp, 0.0);
    SynthConfig {
        truth,
        model: ModelId::Model4,
        weeks,
        goods: (1..=n).map(|i| format!("good{i}")).collect(),
        region: "synthetic".into(),
        price_process: PriceProcess {
            log_mean,
            volatility: DVector::from_element(n, 0.03),
            seed: seed.wrapping_mul(3).wrapping_add(1),
        },
        expenditure_process: ExpenditureProcess {
            mean: ln_p + 0.5,
            volatility: 0.1,
            seed: seed.wrapping_mul(3).wrapping_add(2),
        },
        noise_sd,
        noise_seed: seed.wrapping_mul(3).wrapping_add(3),
        alpha0: 0.0,
        trig_period: 4.0,
        max_retries: 100,
    }
}
