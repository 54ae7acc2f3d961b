//! End-to-end runs on synthetic panels with known truth.

use demand_aids::diagnostics::{regularity_report, CONCAVITY_TOL};
use demand_aids::elasticity::{elasticity_report, marshallian, EvalMode, EvalPoint, EvalSource};
use demand_aids::synth::{default_config, generate};
use demand_aids::{compute_shares, fit_aids, lr_test, ModelId, ModelSpec};
use nalgebra::DVector;

fn shifter() -> DVector<f64> {
    DVector::from_vec(vec![0.004, -0.002, -0.001, -0.001])
}

fn worst_error(model: ModelId, weeks: usize, noise: f64, seed: u64) -> f64 {
    let mut cfg = default_config(4, weeks, noise, seed);
    cfg.model = model;
    let truth = cfg.truth.clone();
    let panel = compute_shares(&generate(&cfg).unwrap());
    let fit = fit_aids(&panel, &ModelSpec::new(model)).unwrap();
    (fit.coefficients.gamma - &truth.gamma)
        .amax()
        .max((fit.coefficients.beta - &truth.beta).amax())
}

#[test]
fn seasonal_and_expenditure_shifters_are_recovered_without_noise() {
    for model in [ModelId::Model2, ModelId::Model3] {
        let mut cfg = default_config(4, 160, 0.0, 5);
        cfg.model = model;
        let s = shifter();
        if model.has_seasonal() {
            cfg.truth.trig_cos = s.clone();
            cfg.truth.trig_sin = -s.clone();
            cfg.truth.trend = &s * 0.01;
        }
        if model.has_log_expenditure() {
            cfg.truth.logx = &s * 3.0;
        }
        let panel = compute_shares(&generate(&cfg).unwrap());
        let fit = fit_aids(&panel, &ModelSpec::new(model)).unwrap();
        let err = (fit.coefficients.to_matrix(model) - cfg.truth.to_matrix(model)).amax();
        assert!(err < 1e-6, "{model}: {err:e}");
        assert!((&fit.fitted_shares - panel.shares()).amax() < 1e-8);
    }
}

#[test]
fn estimation_error_shrinks_with_sample_length() {
    let seeds = 0..6u64;
    let mean = |weeks| seeds.clone().map(|s| worst_error(ModelId::Model4, weeks, 0.005, s)).sum::<f64>() / 6.0;
    let (short, long) = (mean(80), mean(320));
    assert!(long < 0.75 * short, "T=80 {short:.4}, T=320 {long:.4}");
}

#[test]
fn quadratic_model_nests_the_base_model_on_noisy_data() {
    let panel = compute_shares(&generate(&default_config(4, 160, 0.005, 11)).unwrap());
    let full = fit_aids(&panel, &ModelSpec::new(ModelId::Model1)).unwrap();
    let base = fit_aids(&panel, &ModelSpec::new(ModelId::Model4)).unwrap();
    assert!(full.convergence.converged);
    assert_eq!(full.stage1_beta.as_ref().unwrap().len(), 4);
    let lr = lr_test(&full, &base).unwrap();
    assert_eq!(lr.df, 12);
    assert!(lr.stat >= -1e-6);
    assert!((0.0..=1.0).contains(&lr.p_value));
}

#[test]
fn per_observation_mode_averages_weekly_elasticities() {
    let panel = compute_shares(&generate(&default_config(4, 80, 0.005, 2)).unwrap());
    let fit = fit_aids(&panel, &ModelSpec::default()).unwrap();
    let report = elasticity_report(&fit, &panel, EvalMode::PerObservation).unwrap();
    let mut sum = nalgebra::DMatrix::zeros(4, 4);
    for t in 0..panel.n_weeks() {
        let at = EvalPoint::new(
            panel.shares().row(t).transpose(),
            panel.log_prices().row(t).transpose(),
            EvalSource::Observation(t),
        )
        .unwrap();
        sum += marshallian(&fit.coefficients, &at).unwrap();
    }
    let avg = sum / panel.n_weeks() as f64;
    assert!((report.marshallian - avg).amax() < 1e-12);
    assert!(report.std_errors.marshallian.iter().all(|s| s.is_finite() && *s >= 0.0));
}

#[test]
fn default_truth_is_regular_at_every_week() {
    let panel = compute_shares(&generate(&default_config(4, 160, 0.0, 4)).unwrap());
    let fit = fit_aids(&panel, &ModelSpec::default()).unwrap();
    let report = regularity_report(&fit, &panel, CONCAVITY_TOL).unwrap();
    assert_eq!(report.monotonicity_pct, 100.0);
    assert_eq!(report.concavity_pct, 100.0);
    assert_eq!(report.per_observation_flags.len(), 160);
}
