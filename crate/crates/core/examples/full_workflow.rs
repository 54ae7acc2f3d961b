//! Synthesizes two regional panels, writes them as CSV, then runs the
//! command-line pipeline on them: fit, compare and elasticities.

use std::path::Path;

fn run(args: &[&str]) {
    let mut argv = vec!["aids"];
    argv.extend_from_slice(args);
    let code = demand_aids::cli::run(argv);
    assert_eq!(code, 0, "aids {} failed", args.join(" "));
}

fn main() {
    let dir = std::env::temp_dir().join("aids_full_workflow");
    let out = dir.to_str().unwrap();
    run(&["synth", "--seed", "17", "--region", "north", "--region", "south", "--out", out]);

    let north = dir.join("north.csv");
    let south = dir.join("south.csv");
    let inputs = ["--input", north.to_str().unwrap(), "--input", south.to_str().unwrap(), "--out", out];
    for cmd in ["summarize", "fit", "compare", "elasticities"] {
        let mut args = vec![cmd];
        args.extend_from_slice(&inputs);
        run(&args);
    }

    for name in ["lr_models_north.md", "elasticity_summary.md", "regularity.md"] {
        let text = std::fs::read_to_string(Path::new(out).join(name)).unwrap();
        println!("{name}\n{text}");
    }
    println!("all outputs in {out}");
}
