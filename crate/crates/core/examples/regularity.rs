//! Monotonicity and concavity checks, first on a well-behaved panel, then on
//! one generated from a price response that breaks negativity.

use demand_aids::diagnostics::{regularity_report, CONCAVITY_TOL};
use demand_aids::synth::{default_config, generate};
use demand_aids::{compute_shares, fit_aids, ModelSpec};
use nalgebra::DVector;

fn main() -> demand_aids::Result<()> {
    let regular = default_config(4, 160, 0.0, 3);

    let mut violating = regular.clone();
    let v = DVector::from_vec(vec![1.0, -1.0, 0.0, 0.0]);
    violating.truth.gamma += &v * v.transpose() * 0.2;

    for (name, cfg) in [("regular", regular), ("violating", violating)] {
        let panel = compute_shares(&generate(&cfg)?);
        let fit = fit_aids(&panel, &ModelSpec::default())?;
        let report = regularity_report(&fit, &panel, CONCAVITY_TOL)?;
        println!(
            "{name:>9}: monotone {:.1}% of weeks, concave {:.1}% of weeks",
            report.monotonicity_pct, report.concavity_pct
        );
    }
    Ok(())
}
