//! Monte Carlo check that the estimator recovers known coefficients and that
//! the error falls as the panel grows.

use demand_aids::synth::{default_config, generate};
use demand_aids::{compute_shares, fit_aids, ModelSpec};

fn main() -> demand_aids::Result<()> {
    let seeds = 10;
    for weeks in [80, 160, 320] {
        let mut worst: f64 = 0.0;
        let mut mean = 0.0;
        for seed in 0..seeds {
            let cfg = default_config(4, weeks, 0.005, seed);
            let panel = compute_shares(&generate(&cfg)?);
            let fit = fit_aids(&panel, &ModelSpec::default())?;
            let err = (&fit.coefficients.gamma - &cfg.truth.gamma)
                .amax()
                .max((&fit.coefficients.beta - &cfg.truth.beta).amax());
            worst = worst.max(err);
            mean += err / seeds as f64;
        }
        println!("T = {weeks:>3}: mean max error {mean:.4}, worst {worst:.4}");
    }
    Ok(())
}
