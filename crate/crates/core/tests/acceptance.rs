//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use demand_aids::aids::{chi_square_upper_tail, fit_aids, lr_from_parts, FitResult};
use demand_aids::diagnostics::{check_concavity, check_monotonicity, CONCAVITY_TOL};
use demand_aids::elasticity::{expenditure, marshallian, EvalPoint, EvalSource};
use demand_aids::model::{CoefficientSet, ModelId, ModelSpec};
use demand_aids::panel::{coefficient_of_variation, compute_shares, SharePanel};
use demand_aids::synth::{default_config, default_truth, generate, model_shares};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn oracle_panel(noise: f64, seed: u64) -> SharePanel {
    compute_shares(&generate(&default_config(4, 160, noise, seed)).expect("oracle panel"))
}

fn fit(panel: &SharePanel, spec: &ModelSpec) -> Result<FitResult, String> {
    fit_aids(panel, spec).map_err(|e| e.to_string())
}

fn lr_arithmetic() -> Outcome {
    let cases = [(5.5970, 3usize, 0.1330), (13.492, 9, 0.1416)];
    let mut seen = Vec::new();
    for (stat, df, expected) in cases {
        let direct = chi_square_upper_tail(stat, df as f64);
        // same statistic through the likelihood-ratio path
        let lr = lr_from_parts(ModelId::Model1, 1000.0 + stat / 2.0, 18 + df, ModelId::Model4, 1000.0, 18)
            .map_err(|e| e.to_string())?;
        ensure((direct - expected).abs() <= 5e-4, || format!("p({stat}, {df}) = {direct:.5}, expected {expected}"))?;
        ensure((lr.p_value - direct).abs() < 1e-12, || format!("LR path p = {}", lr.p_value))?;
        seen.push(format!("p({stat},{df})={direct:.4}"));
    }
    Ok(seen.join(" "))
}

fn published_cv() -> Outcome {
    // (column, SD, mean, CV) as published, rounded
    let columns = [
        ("quantity lamb", 53.63, 81.0, 66.21),
        ("quantity beef", 0.56, 4.364, 12.74),
        ("quantity pork", 0.39, 2.510, 15.53),
        ("quantity poultry", 3.57, 6.656, 53.71),
        ("price lamb", 3.42, 20.13, 17.01),
        ("price beef", 2.03, 14.45, 14.03),
        ("price pork", 0.84, 9.12, 9.23),
        ("price poultry", 2.16, 7.35, 29.40),
    ];
    let mut worst: f64 = 0.0;
    for (name, sd, mean, cv) in columns {
        let got = coefficient_of_variation(sd, mean);
        ensure((got - cv).abs() <= 0.1, || format!("{name}: {got:.3} vs published {cv}"))?;
        worst = worst.max((got - cv).abs());
    }
    Ok(format!("8 columns, max gap {worst:.3} pp"))
}

fn oracle_recovery() -> Outcome {
    let truth = default_truth(4);
    let exact = fit(&oracle_panel(0.0, 1), &ModelSpec::default())?;
    let m = ModelId::Model4;
    let err0 = (exact.coefficients.to_matrix(m) - truth.to_matrix(m)).amax();
    ensure(err0 <= 1e-8, || format!("noise 0: max error {err0:.3e}"))?;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let f = fit(&oracle_panel(0.005, seed), &ModelSpec::default())?;
        let e = (&f.coefficients.gamma - &truth.gamma)
            .amax()
            .max((&f.coefficients.beta - &truth.beta).amax());
        ensure(e <= 0.02, || format!("noise 0.005 seed {seed}: max gamma/beta error {e:.4}"))?;
        worst = worst.max(e);
    }
    Ok(format!("noise 0: {err0:.2e}; noise 0.005 over 20 seeds: worst {worst:.4}"))
}

/// `ln q_i` of the nonlinear Model_4 demand at log prices `lp` and log expenditure `lx`.
fn log_demand(c: &CoefficientSet, lp: &[f64], lx: f64, i: usize) -> f64 {
    let w = model_shares(c, ModelId::Model4, lp, lx, 0, 0.0, 4.0);
    w[i].ln() + lx - lp[i]
}

fn elasticity_finite_differences() -> Outcome {
    let f = fit(&oracle_panel(0.005, 3), &ModelSpec::default())?;
    let c = &f.coefficients;
    let base = default_config(4, 1, 0.0, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let lp: Vec<f64> = base.price_process.log_mean.iter().map(|m| m + rng.random_range(-0.3..0.3)).collect();
        let lx = base.expenditure_process.mean + rng.random_range(-0.3..0.3);
        let w = model_shares(c, ModelId::Model4, &lp, lx, 0, 0.0, 4.0);
        let at = EvalPoint::new(w, DVector::from_vec(lp.clone()), EvalSource::Given).map_err(|e| e.to_string())?;
        let e = marshallian(c, &at).map_err(|e| e.to_string())?;
        let eta = expenditure(c, &at).map_err(|e| e.to_string())?;
        let check = |analytic: f64, fd: f64, what: String| {
            let gap = (analytic - fd).abs() / analytic.abs().max(1e-3);
            ensure(gap <= 1e-5, || format!("{what}: analytic {analytic:.8} vs finite difference {fd:.8}")).map(|_| gap)
        };
        for i in 0..4 {
            for j in 0..4 {
                let (mut up, mut down) = (lp.clone(), lp.clone());
                up[j] += h;
                down[j] -= h;
                let fd = (log_demand(c, &up, lx, i) - log_demand(c, &down, lx, i)) / (2.0 * h);
                worst = worst.max(check(e[(i, j)], fd, format!("e[{i}][{j}]"))?);
            }
            let fd = (log_demand(c, &lp, lx + h, i) - log_demand(c, &lp, lx - h, i)) / (2.0 * h);
            worst = worst.max(check(eta[i], fd, format!("eta[{i}]"))?);
        }
    }
    Ok(format!("10 points, 200 entries, max relative gap {worst:.2e}"))
}

fn restriction_exactness() -> Outcome {
    let panel = oracle_panel(0.005, 4);
    let mut worst: f64 = 0.0;
    for model in ModelId::ALL {
        let f = fit(&panel, &ModelSpec::new(model))?;
        let identities = f.coefficients.check().max();
        let sums = f.fitted_shares.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max);
        for (what, v) in [("identities", identities), ("R b - c", f.restriction_violation), ("share sums", sums)] {
            ensure(v <= 1e-10, || format!("{model}: {what} off by {v:.3e}"))?;
            worst = worst.max(v);
        }
    }
    Ok(format!("4 models, max deviation {worst:.2e}"))
}

fn aggregation_identities() -> Outcome {
    let panel = oracle_panel(0.005, 5);
    let mut worst_engel: f64 = 0.0;
    let mut worst_cournot: f64 = 0.0;
    for model in ModelId::ALL {
        let f = fit(&panel, &ModelSpec::new(model))?;
        let at = EvalPoint::sample_mean(&panel).map_err(|e| e.to_string())?;
        let e = marshallian(&f.coefficients, &at).map_err(|e| e.to_string())?;
        let eta = expenditure(&f.coefficients, &at).map_err(|e| e.to_string())?;
        let engel = (at.shares.dot(&eta) - 1.0).abs();
        ensure(engel <= 1e-10, || format!("{model}: Engel off by {engel:.3e}"))?;
        for i in 0..4 {
            let cournot = (e.row(i).sum() + eta[i]).abs();
            ensure(cournot <= 1e-8, || format!("{model}: homogeneity row {i} off by {cournot:.3e}"))?;
            worst_cournot = worst_cournot.max(cournot);
        }
        worst_engel = worst_engel.max(engel);
    }
    Ok(format!("Engel {worst_engel:.2e}, homogeneity {worst_cournot:.2e}"))
}

fn dropped_equation_invariance() -> Outcome {
    let panel = oracle_panel(0.005, 6);
    let mut worst: f64 = 0.0;
    for model in ModelId::ALL {
        let mut first = ModelSpec::new(model);
        first.drop_good = Some(0);
        let mut last = ModelSpec::new(model);
        last.drop_good = Some(3);
        let a = fit(&panel, &first)?.coefficients.to_matrix(model);
        let b = fit(&panel, &last)?.coefficients.to_matrix(model);
        let gap = (a - b).amax();
        ensure(gap <= 1e-6, || format!("{model}: drop good 1 vs good 4 differ by {gap:.3e}"))?;
        worst = worst.max(gap);
    }
    Ok(format!("4 models, max gap {worst:.2e}"))
}

fn nesting_monotonicity() -> Outcome {
    let panel = oracle_panel(0.005, 7);
    let ll: Vec<f64> = ModelId::ALL
        .iter()
        .map(|&m| fit(&panel, &ModelSpec::new(m)).map(|f| f.log_likelihood.unwrap_or(f64::NAN)))
        .collect::<Result<_, _>>()?;
    let slack = 1e-6;
    ensure(ll[0] >= ll[1] - slack, || format!("LL1 {:.6} < LL2 {:.6}", ll[0], ll[1]))?;
    ensure(ll[1] >= ll[3] - slack, || format!("LL2 {:.6} < LL4 {:.6}", ll[1], ll[3]))?;
    ensure(ll[2] >= ll[3] - slack, || format!("LL3 {:.6} < LL4 {:.6}", ll[2], ll[3]))?;
    Ok(format!("LL = {:.3} / {:.3} / {:.3} / {:.3}", ll[0], ll[1], ll[2], ll[3]))
}

fn regularity() -> Outcome {
    let panel = oracle_panel(0.005, 8);
    let f = fit(&panel, &ModelSpec::default())?;
    let mono = check_monotonicity(&f).pct;
    let conc = check_concavity(&f, &panel, CONCAVITY_TOL).map_err(|e| e.to_string())?.pct;
    ensure(mono == 100.0 && conc == 100.0, || format!("regular panel: monotonicity {mono}%, concavity {conc}%"))?;

    // own-price curvature of good 1 pushed past w1 (1 - w1)
    let mut cfg = default_config(4, 160, 0.0, 8);
    let mut v = DVector::zeros(4);
    v[0] = 1.0;
    v[1] = -1.0;
    cfg.truth.gamma += &v * v.transpose() * 0.15;
    let bad_panel = compute_shares(&generate(&cfg).map_err(|e| e.to_string())?);
    let bad = fit(&bad_panel, &ModelSpec::default())?;
    let bad_conc = check_concavity(&bad, &bad_panel, CONCAVITY_TOL).map_err(|e| e.to_string())?.pct;
    ensure(bad_conc < 100.0, || format!("violating fixture: concavity {bad_conc}%"))?;
    Ok(format!("regular: {mono}% / {conc}%; violating fixture concavity {bad_conc}%"))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_aids"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.code() == Some(0), || {
        format!("`aids {}` exited {:?}: {}", args.join(" "), out.status.code(), String::from_utf8_lossy(&out.stderr))
    })
}

fn golden_run(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let data = dir.join("data");
    let out = dir.join("out");
    let (d, o) = (data.to_str().unwrap(), out.to_str().unwrap());
    run_cli(&["synth", "--seed", "17", "--region", "north", "--region", "south", "--out", d])?;
    let north = format!("{d}/north.csv");
    let south = format!("{d}/south.csv");
    let inputs = ["--input", north.as_str(), "--input", south.as_str()];
    let tail = ["--out", o, "--format", "csv", "--format", "md"];
    for cmd in ["fit", "compare", "elasticities"] {
        run_cli(&[&[cmd][..], &inputs[..], &tail[..]].concat())?;
    }
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    Ok(files)
}

fn csv_rows(files: &[(String, Vec<u8>)], name: &str) -> Result<usize, String> {
    let (_, bytes) = files.iter().find(|(n, _)| n == name).ok_or_else(|| format!("missing {name}"))?;
    Ok(String::from_utf8_lossy(bytes).lines().count() - 1)
}

fn cli_golden_run() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = golden_run(a.path())?;
    let second = golden_run(b.path())?;
    ensure(first.len() == second.len(), || "different file sets".into())?;
    for ((na, ba), (nb, bb)) in first.iter().zip(&second) {
        ensure(na == nb && ba == bb, || format!("{na} differs between runs"))?;
    }
    let shapes = [
        ("r_squared_north.csv", 4),
        ("lr_models_north.csv", 4),
        ("lr_model2_model3_north.csv", 2),
        ("elasticities.csv", 8),
        ("elasticity_summary.csv", 20),
    ];
    for (name, rows) in shapes {
        let got = csv_rows(&first, name)?;
        ensure(got == rows, || format!("{name}: {got} rows, expected {rows}"))?;
    }
    let fits = first.iter().filter(|(n, _)| n.starts_with("fit_")).count();
    ensure(fits == 8, || format!("{fits} fit files, expected 8"))?;
    Ok(format!("{} files byte-identical across two runs", first.len()))
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 LR p-value arithmetic", lr_arithmetic, Duration::from_secs(1)),
        ("2 coefficient-of-variation reproduction", published_cv, Duration::from_secs(1)),
        ("3 oracle recovery", oracle_recovery, Duration::from_secs(60)),
        ("4 elasticities vs finite differences", elasticity_finite_differences, Duration::from_secs(10)),
        ("5 restriction exactness", restriction_exactness, Duration::from_secs(60)),
        ("6 aggregation identities", aggregation_identities, Duration::from_secs(60)),
        ("7 dropped-equation invariance", dropped_equation_invariance, Duration::from_secs(60)),
        ("8 log-likelihood nesting", nesting_monotonicity, Duration::from_secs(60)),
        ("9 regularity", regularity, Duration::from_secs(10)),
        ("10 CLI golden run", cli_golden_run, Duration::from_secs(120)),
    ];
    let mut failures = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|msg| {
            if elapsed <= budget {
                Ok(msg)
            } else {
                Err(format!("{msg}; took {elapsed:.2?}, budget {budget:.0?}"))
            }
        });
        match outcome {
            Ok(msg) => println!("PASS  criterion {name}: {msg} ({elapsed:.2?})"),
            Err(msg) => {
                failures += 1;
                println!("FAIL  criterion {name}: {msg} ({elapsed:.2?})");
            }
        }
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
