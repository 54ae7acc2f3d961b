//! Stone, translog and Cobb-Douglas price aggregates on a synthetic panel.

use demand_aids::indices::{cobb_douglas_q, stone_index, translog_index};
use demand_aids::synth::{default_config, generate};
use demand_aids::compute_shares;

fn main() -> demand_aids::Result<()> {
    let cfg = default_config(4, 12, 0.005, 3);
    let truth = cfg.truth.clone();
    let panel = compute_shares(&generate(&cfg)?);

    let stone = stone_index(panel.shares(), panel.log_prices())?;
    let translog = translog_index(&truth.alpha, &truth.gamma, panel.log_prices(), 0.0)?;
    let q = cobb_douglas_q(&truth.beta, panel.log_prices())?;

    println!("week   ln P stone   ln P translog   Q");
    for t in 0..panel.n_weeks() {
        println!(
            "{:>4}   {:>10.5}   {:>13.5}   {:.5}",
            t + 1,
            stone.values[t],
            translog.values[t],
            q.values[t]
        );
    }
    Ok(())
}
