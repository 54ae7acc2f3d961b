//! Fits all four share specifications to one panel and compares them with
//! likelihood-ratio tests against the most general model.

use demand_aids::aids::r_squared;
use demand_aids::report::{lr_table, r_squared_table};
use demand_aids::synth::{default_config, generate};
use demand_aids::{compute_shares, fit_aids, lr_test, ModelId, ModelSpec};

fn main() -> demand_aids::Result<()> {
    let panel = compute_shares(&generate(&default_config(4, 160, 0.005, 21))?);
    let fits = ModelId::ALL
        .iter()
        .map(|&m| fit_aids(&panel, &ModelSpec::new(m)))
        .collect::<demand_aids::Result<Vec<_>>>()?;

    for fit in &fits {
        let (shares, _) = r_squared(fit, &panel)?;
        println!(
            "{}: LL {:.3}, {} free parameters, {} ILLE passes, share R2 {:?}",
            fit.model(),
            fit.log_likelihood.unwrap_or(f64::NAN),
            fit.n_free_parameters,
            fit.convergence.iterations,
            shares.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>()
        );
    }
    let refs: Vec<_> = fits.iter().collect();
    print!("\n{}", r_squared_table("synthetic", &refs).to_markdown());

    let full = &fits[0];
    let rows: Vec<_> = fits[1..].iter().map(|f| (f, lr_test(full, f))).collect();
    print!("\n{}", lr_table("LR tests against Model_1", full, &rows).to_markdown());
    Ok(())
}
