//! Reads a long-format weekly panel and prints descriptive statistics.
//!
//! `cargo run --example summarize_panel`

use demand_aids::panel::{read_panel, summary_stats, CsvLayout};
use demand_aids::report::summary_table;

const PANEL: &str = "\
week,good,price,quantity
1,beef,20.10,0.012
1,pork,14.40,0.018
1,chicken,9.10,0.031
2,beef,20.45,0.011
2,pork,14.20,0.019
2,chicken,9.25,0.030
3,beef,19.90,0.013
3,pork,14.65,0.017
3,chicken,9.05,0.032
4,beef,20.30,0.012
4,pork,14.50,0.018
4,chicken,9.30,0.029
";

fn main() -> demand_aids::Result<()> {
    let panel = read_panel(PANEL.as_bytes(), &CsvLayout::default(), "demo")?;
    println!("{} weeks x {} goods", panel.n_weeks(), panel.goods().len());
    let stats = summary_stats(&panel)?;
    print!("{}", summary_table(&stats).to_markdown());
    Ok(())
}
