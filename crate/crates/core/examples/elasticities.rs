//! Marshallian, expenditure and Hicksian elasticities at the sample mean,
//! with delta-method standard errors and good/pair classification.

use demand_aids::elasticity::{elasticity_report, hicksian, EvalMode, EvalPoint};
use demand_aids::report::elasticity_table;
use demand_aids::synth::{default_config, generate};
use demand_aids::{compute_shares, fit_aids, ModelId, ModelSpec};

fn main() -> demand_aids::Result<()> {
    let panel = compute_shares(&generate(&default_config(4, 160, 0.005, 8))?);
    let fit = fit_aids(&panel, &ModelSpec::new(ModelId::Model3))?;
    let report = elasticity_report(&fit, &panel, EvalMode::SampleMean)?;

    println!("{}", elasticity_table(&[("synthetic".to_string(), &report)]).to_markdown());

    for (good, class) in report.goods.iter().zip(&report.classification.goods) {
        println!("{good}: {class:?}");
    }
    let compensated = hicksian(&fit.coefficients, &EvalPoint::sample_mean(&panel)?)?;
    println!("\nHicksian elasticities:{compensated:.4}");
    Ok(())
}
