//! Command-line front end: `summarize`, `fit`, `compare`, `elasticities`
//! and `synth`, each a thin shell over the library.
//!
//! Exit codes: 0 success, 1 usage, 2 data or I/O, 3 numerical or convergence.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::aids::{fit_aids, lr_test, FitResult};
use crate::diagnostics::{regularity_report, RegularityReport, CONCAVITY_TOL};
use crate::elasticity::{elasticity_report, EvalMode};
use crate::error::{AidsError, ErrorKind, Result};
use crate::model::{ModelId, ModelSpec};
use crate::panel::{compute_shares, load_panel, summary_stats, write_panel_csv, CsvLayout, MarketPanel};
use crate::report::{
    elasticity_summary_table, elasticity_table, lr_table, r_squared_table, regularity_table, summary_table,
    FitDocument, Format, Table,
};
use crate::synth::{default_config, generate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Model used by `elasticities` when none is given.
pub const DEFAULT_ELASTICITY_MODEL: ModelId = ModelId::Model3;

#[derive(Parser, Debug)]
#[command(name = "aids", version, about = "Almost Ideal Demand System estimation")]
#[command(args_override_self = true)]
pub struct Cli {
    /// key=value file supplying any flag (command-line flags win).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Descriptive statistics of prices and quantities per region.
    Summarize(CommonArgs),
    /// Estimate models and write per-fit JSON plus an R-squared table.
    Fit(FitArgs),
    /// Likelihood-ratio comparison of the four models.
    Compare(FitArgs),
    /// Elasticities, significance codes and regularity for one model.
    Elasticities(ElasticityArgs),
    /// Write synthetic panels drawn from the default truth.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Long-format panel CSV (week,good,price,quantity); repeat for regions.
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    /// Region label per input, in order (default: file stem).
    #[arg(long)]
    pub region: Vec<String>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Output format; repeat for several.
    #[arg(long, value_enum)]
    pub format: Vec<FormatArg>,
}

#[derive(Args, Debug, Clone)]
pub struct SpecArgs {
    #[arg(long)]
    pub alpha0: Option<f64>,
    #[arg(long)]
    pub trig_period: Option<f64>,
    /// ILLE convergence tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// ILLE iteration cap.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Good label or 1-based index of the dropped equation.
    #[arg(long)]
    pub drop_good: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Model number 1-4; repeat for several (default: all).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub model: Vec<u8>,
}

#[derive(Args, Debug, Clone)]
pub struct ElasticityArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub model: Option<u8>,
    #[arg(long, value_enum, default_value = "mean")]
    pub eval_point: EvalPointArg,
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub goods: usize,
    #[arg(long, default_value_t = 160)]
    pub weeks: usize,
    #[arg(long, default_value_t = 0.005)]
    pub noise_sd: f64,
    /// Region labels; one panel per label.
    #[arg(long)]
    pub region: Vec<String>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
    Md,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
            FormatArg::Md => Format::Markdown,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalPointArg {
    Mean,
    PerObs,
}

/// Resolved settings of a run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub inputs: Vec<(String, PathBuf)>,
    pub models: Vec<ModelId>,
    pub spec: ModelSpec,
    pub drop_good: Option<String>,
    pub out: PathBuf,
    pub formats: Vec<Format>,
}

impl RunConfig {
    fn from_common(common: &CommonArgs) -> Result<Self> {
        if !common.region.is_empty() && common.region.len() != common.input.len() {
            return Err(AidsError::Specification(format!(
                "{} --region labels for {} --input files",
                common.region.len(),
                common.input.len()
            )));
        }
        let inputs = common
            .input
            .iter()
            .enumerate()
            .map(|(i, path)| {
                let label = common.region.get(i).cloned().unwrap_or_else(|| {
                    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("region{}", i + 1))
                });
                (label, path.clone())
            })
            .collect();
        let formats: BTreeSet<Format> = common.format.iter().map(|&f| f.into()).collect();
        let formats = if formats.is_empty() {
            vec![Format::Csv, Format::Markdown]
        } else {
            formats.into_iter().collect()
        };
        Ok(Self {
            inputs,
            models: ModelId::ALL.to_vec(),
            spec: ModelSpec::default(),
            drop_good: None,
            out: common.out.clone(),
            formats,
        })
    }

    fn with_spec(mut self, args: &SpecArgs) -> Result<Self> {
        if let Some(v) = args.alpha0 {
            self.spec.alpha0 = v;
        }
        if let Some(v) = args.trig_period {
            self.spec.trig_period = v;
        }
        if let Some(v) = args.tol {
            self.spec.ille_tol = v;
        }
        if let Some(v) = args.max_iter {
            self.spec.ille_max_iter = v;
        }
        self.drop_good = args.drop_good.clone();
        Ok(self)
    }

    fn spec_for(&self, panel: &MarketPanel, model: ModelId) -> Result<ModelSpec> {
        let mut spec = self.spec.with_model(model);
        if let Some(label) = &self.drop_good {
            let goods = panel.goods();
            let index = goods
                .iter()
                .position(|g| g == label)
                .or_else(|| label.parse::<usize>().ok().filter(|&i| (1..=goods.len()).contains(&i)).map(|i| i - 1))
                .ok_or_else(|| {
                    AidsError::Specification(format!("--drop-good '{label}' is not one of {}", goods.join(", ")))
                })?;
            spec.drop_good = Some(index);
        }
        spec.validate(panel.n_goods())?;
        Ok(spec)
    }

    fn load(&self) -> Result<Vec<(String, MarketPanel)>> {
        self.inputs
            .iter()
            .map(|(region, path)| {
                let panel = load_panel(path, &CsvLayout::default())?.with_region(region.clone());
                Ok((region.clone(), panel))
            })
            .collect()
    }
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &AidsError) -> i32 {
    match err.kind() {
        ErrorKind::Specification => EXIT_USAGE,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numerical => EXIT_NUMERICAL,
    }
}

/// Writes `contents` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| AidsError::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut file = fs::File::create(&tmp).map_err(|e| AidsError::io(&tmp, e))?;
    file.write_all(contents.as_bytes()).map_err(|e| AidsError::io(&tmp, e))?;
    file.sync_all().map_err(|e| AidsError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| AidsError::io(path, e))
}

fn write_table(out: &Path, stem: &str, table: &Table, formats: &[Format]) -> Result<Vec<PathBuf>> {
    formats
        .iter()
        .map(|&f| {
            let path = out.join(format!("{stem}.{}", f.extension()));
            write_atomic(&path, &table.render(f)?)?;
            Ok(path)
        })
        .collect()
}

fn file_stem(region: &str) -> String {
    region
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Outcome of one (region, model) estimation. Non-converged fits keep the
/// partial result.
struct FitJob {
    region: String,
    model: ModelId,
    result: Result<FitResult>,
}

impl FitJob {
    fn fit(&self) -> Option<&FitResult> {
        match &self.result {
            Ok(fit) => Some(fit),
            Err(AidsError::IlleNotConverged { partial, .. }) => Some(partial),
            Err(AidsError::Context { source, .. }) => match source.as_ref() {
                AidsError::IlleNotConverged { partial, .. } => Some(partial),
                _ => None,
            },
            Err(_) => None,
        }
    }

    fn converged(&self) -> bool {
        self.result.is_ok()
    }
}

fn run_fits(config: &RunConfig, panels: &[(String, MarketPanel)], models: &[ModelId]) -> Result<Vec<FitJob>> {
    let mut jobs = Vec::new();
    for (region, panel) in panels {
        for &model in models {
            jobs.push((region.clone(), panel, config.spec_for(panel, model)?));
        }
    }
    Ok(jobs
        .into_par_iter()
        .map(|(region, panel, spec)| {
            if spec.model.has_quadratic() {
                log::info!("{region} {}: running the stage-1 Model_4 fit for the aggregate price Q", spec.model);
            }
            let result = fit_aids(&compute_shares(panel), &spec).map_err(|e| e.context(format!("{region} {}", spec.model)));
            FitJob {
                region,
                model: spec.model,
                result,
            }
        })
        .collect())
}

fn cmd_summarize(config: &RunConfig) -> Result<()> {
    for (region, panel) in config.load()? {
        let table = summary_table(&summary_stats(&panel)?);
        for path in write_table(&config.out, &format!("summary_{}", file_stem(&region)), &table, &config.formats)? {
            log::info!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn cmd_fit(config: &RunConfig) -> Result<()> {
    let panels = config.load()?;
    let jobs = run_fits(config, &panels, &config.models)?;
    for (region, panel) in &panels {
        let shares = compute_shares(panel);
        let mut fits = Vec::new();
        for job in jobs.iter().filter(|j| &j.region == region) {
            match job.fit() {
                Some(fit) => {
                    let regularity = regularity_report(fit, &shares, CONCAVITY_TOL).ok();
                    let doc = FitDocument::new(region, fit, regularity);
                    let path = config.out.join(format!("fit_{}_{}.json", file_stem(region), job.model));
                    write_atomic(&path, &doc.to_json()?)?;
                    if !job.converged() {
                        log::warn!("{region} {}: did not converge; {} is marked non-final", job.model, path.display());
                    }
                    fits.push(fit);
                }
                None => log::error!("{region} {}: {}", job.model, job.result.as_ref().err().map(|e| e.to_string()).unwrap_or_default()),
            }
        }
        write_table(&config.out, &format!("r_squared_{}", file_stem(region)), &r_squared_table(region, &fits), &config.formats)?;
    }
    if let Some(job) = jobs.into_iter().find(|j| j.result.is_err()) {
        return job.result.map(|_| ());
    }
    Ok(())
}

fn cmd_compare(config: &RunConfig) -> Result<()> {
    let panels = config.load()?;
    let jobs = run_fits(config, &panels, &ModelId::ALL)?;
    for (region, _) in &panels {
        let get = |m: ModelId| -> Result<&FitResult> {
            let job = jobs.iter().find(|j| &j.region == region && j.model == m).expect("every model was fitted");
            match &job.result {
                Ok(fit) => Ok(fit),
                Err(e) => Err(AidsError::Specification(format!("cannot compare: {e}"))),
            }
        };
        let m1 = get(ModelId::Model1);
        let (m1, m2, m3, m4) = match (m1, get(ModelId::Model2), get(ModelId::Model3), get(ModelId::Model4)) {
            (Ok(a), Ok(b), Ok(c), Ok(d)) => (a, b, c, d),
            _ => {
                return jobs
                    .into_iter()
                    .find(|j| &j.region == region && j.result.is_err())
                    .map(|j| j.result.map(|_| ()))
                    .unwrap_or(Ok(()));
            }
        };
        let all = lr_table(
            format!("Likelihood ratio tests against Model_1: {region}"),
            m1,
            &[(m2, lr_test(m1, m2)), (m3, lr_test(m1, m3)), (m4, lr_test(m1, m4))],
        );
        let pair = lr_table(
            format!("Likelihood ratio test of Model_3 against Model_2: {region}"),
            m2,
            &[(m3, lr_test(m2, m3))],
        );
        let stem = file_stem(region);
        write_table(&config.out, &format!("lr_models_{stem}"), &all, &config.formats)?;
        write_table(&config.out, &format!("lr_model2_model3_{stem}"), &pair, &config.formats)?;
    }
    Ok(())
}

fn cmd_elasticities(config: &RunConfig, model: ModelId, mode: EvalMode) -> Result<()> {
    let panels = config.load()?;
    let jobs = run_fits(config, &panels, &[model])?;
    let mut reports = Vec::new();
    let mut regularity: Vec<(String, ModelId, RegularityReport)> = Vec::new();
    let mut failure = None;
    for ((region, panel), job) in panels.iter().zip(&jobs) {
        let fit = match &job.result {
            Ok(fit) => fit,
            Err(e) => {
                log::warn!("{region}: excluded from the elasticity tables ({e})");
                failure.get_or_insert_with(|| e.to_string());
                continue;
            }
        };
        let shares = compute_shares(panel);
        reports.push((region.clone(), elasticity_report(fit, &shares, mode)?));
        regularity.push((region.clone(), model, regularity_report(fit, &shares, CONCAVITY_TOL)?));
    }
    if reports.is_empty() {
        return Err(AidsError::Numerical {
            message: format!("no region produced a converged {model} fit: {}", failure.unwrap_or_default()),
            condition: f64::NAN,
        });
    }
    let refs: Vec<(String, &_)> = reports.iter().map(|(r, e)| (r.clone(), e)).collect();
    let mut stacked = elasticity_table(&refs);
    stacked.title = format!("{} ({model}, {})", stacked.title, match mode {
        EvalMode::SampleMean => "sample means",
        EvalMode::PerObservation => "averaged over weeks",
    });
    write_table(&config.out, "elasticities", &stacked, &config.formats)?;
    write_table(&config.out, "elasticity_summary", &elasticity_summary_table(&refs), &config.formats)?;
    let reg_rows: Vec<_> = regularity.iter().map(|(r, m, rep)| (r.clone(), *m, rep)).collect();
    write_table(&config.out, "regularity", &regularity_table(&reg_rows), &config.formats)?;
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    if args.goods < 2 {
        return Err(AidsError::Specification("--goods must be at least 2".into()));
    }
    let regions = if args.region.is_empty() {
        vec!["synthetic".to_string()]
    } else {
        args.region.clone()
    };
    for (i, region) in regions.iter().enumerate() {
        let mut cfg = default_config(args.goods, args.weeks, args.noise_sd, args.seed.wrapping_add(i as u64 * 1000));
        cfg.region = region.clone();
        let panel = generate(&cfg)?;
        let mut buf = Vec::new();
        write_panel_csv(&panel, &mut buf)?;
        let path = args.out.join(format!("{}.csv", file_stem(region)));
        write_atomic(&path, &String::from_utf8(buf).map_err(|e| AidsError::Format(e.to_string()))?)?;
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

/// Reads a key=value file into `--key value` arguments. Blank lines and
/// lines starting with `#` are skipped; underscores in keys become dashes.
pub fn config_args(path: &Path) -> Result<Vec<OsString>> {
    let text = fs::read_to_string(path).map_err(|e| AidsError::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            AidsError::Format(format!("{}: line {}: expected key=value", path.display(), lineno + 1))
        })?;
        let key = key.trim().replace('_', "-");
        for v in value.split(',').map(str::trim).filter(|v| !v.is_empty()) {
            out.push(OsString::from(format!("--{key}")));
            out.push(OsString::from(v));
        }
    }
    Ok(out)
}

/// Inserts config-file flags right after the subcommand so that explicit
/// flags, which come later, take precedence.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut config = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut iter = args.into_iter();
    while let Some(a) = iter.next() {
        if a == "--config" {
            config = iter.next().map(PathBuf::from);
        } else if let Some(p) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            config = Some(PathBuf::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let extra = config_args(&path)?;
    let commands = ["summarize", "fit", "compare", "elasticities", "synth"];
    let pos = rest.iter().position(|a| a.to_str().is_some_and(|s| commands.contains(&s)));
    match pos {
        Some(p) => {
            let tail = rest.split_off(p + 1);
            rest.extend(extra);
            rest.extend(tail);
            Ok(rest)
        }
        None => Ok(rest),
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Summarize(common) => cmd_summarize(&RunConfig::from_common(common)?),
        Command::Fit(args) => {
            let mut config = RunConfig::from_common(&args.common)?.with_spec(&args.spec)?;
            if !args.model.is_empty() {
                let set: BTreeSet<u8> = args.model.iter().copied().collect();
                config.models = set.into_iter().map(ModelId::from_number).collect::<Result<_>>()?;
            }
            cmd_fit(&config)
        }
        Command::Compare(args) => cmd_compare(&RunConfig::from_common(&args.common)?.with_spec(&args.spec)?),
        Command::Elasticities(args) => {
            let config = RunConfig::from_common(&args.common)?.with_spec(&args.spec)?;
            let model = args.model.map(ModelId::from_number).transpose()?.unwrap_or(DEFAULT_ELASTICITY_MODEL);
            let mode = match args.eval_point {
                EvalPointArg::Mean => EvalMode::SampleMean,
                EvalPointArg::PerObs => EvalMode::PerObservation,
            };
            cmd_elasticities(&config, model, mode)
        }
        Command::Synth(args) => cmd_synth(args),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args = match expand_config(args.into_iter().map(Into::into).collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e).max(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
