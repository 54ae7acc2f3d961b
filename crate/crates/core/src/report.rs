//! Rendering of summaries, fits, likelihood-ratio comparisons and
//! elasticities as CSV, markdown or JSON.
//!
//! Every renderer is a pure function of its input with fixed number
//! formatting, so identical inputs give byte-identical text.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::aids::{FitResult, LrResult};
use crate::diagnostics::RegularityReport;
use crate::elasticity::{ElasticityReport, GoodClass, Significance, SIGNIFICANCE_LEGEND};
use crate::error::{AidsError, Result};
use crate::model::ModelId;
use crate::panel::{SeriesStats, SummaryTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Markdown => "md",
        }
    }
}

impl FromStr for Format {
    type Err = AidsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "md" | "markdown" => Ok(Format::Markdown),
            other => Err(AidsError::Specification(format!(
                "unknown format '{other}' (expected json, csv or md)"
            ))),
        }
    }
}

/// A rectangular table of already formatted cells.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Lines printed under the markdown table.
    pub notes: Vec<String>,
}

impl Table {
    fn new(title: impl Into<String>, header: Vec<String>) -> Self {
        Self {
            title: title.into(),
            header,
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| AidsError::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| AidsError::Format(e.to_string()))
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        if !self.title.is_empty() {
            let _ = writeln!(out, "### {}\n", self.title);
        }
        let _ = writeln!(out, "| {} |", self.header.join(" | "));
        let _ = writeln!(out, "|{}|", self.header.iter().map(|_| "---").collect::<Vec<_>>().join("|"));
        for row in &self.rows {
            let _ = writeln!(out, "| {} |", row.join(" | "));
        }
        if !self.notes.is_empty() {
            out.push('\n');
            for note in &self.notes {
                let _ = writeln!(out, "{note}");
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
            Format::Markdown => Ok(self.to_markdown()),
        }
    }
}

pub fn fmt_num(v: f64, decimals: usize) -> String {
    if v.is_nan() {
        "NA".into()
    } else if v == 0.0 {
        // avoid "-0.0000"
        format!("{:.*}", decimals, 0.0)
    } else {
        format!("{v:.decimals$}")
    }
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "NA".into(), |x| fmt_num(x, decimals))
}

/// p-values below `1e-16` print as `<2e-16`.
pub fn fmt_p_value(p: f64) -> String {
    if p.is_nan() {
        "NA".into()
    } else if p < 1e-16 {
        "<2e-16".into()
    } else if p < 1e-4 {
        format!("{p:.3e}")
    } else {
        format!("{p:.4}")
    }
}

fn stats_row(label: &str, pick: impl Fn(&SeriesStats) -> f64, t: &SummaryTable) -> Vec<String> {
    let mut row = vec![label.to_string()];
    row.extend(t.quantity.iter().map(|s| fmt_num(pick(s), 4)));
    row.extend(t.price.iter().map(|s| fmt_num(pick(s), 4)));
    row
}

/// Min/Max/Mean/SD/CV rows with quantity then price columns per good.
pub fn summary_table(t: &SummaryTable) -> Table {
    let mut header = vec!["statistic".to_string()];
    header.extend(t.goods.iter().map(|g| format!("quantity_{g}")));
    header.extend(t.goods.iter().map(|g| format!("price_{g}")));
    let mut table = Table::new(format!("Consumption and price statistics: {}", t.region), header);
    table.rows = vec![
        stats_row("Min", |s| s.min, t),
        stats_row("Max", |s| s.max, t),
        stats_row("Mean", |s| s.mean, t),
        stats_row("SD", |s| s.sd, t),
        stats_row("CV (%)", |s| s.cv, t),
    ];
    table
}

/// R-squared of shares and quantities, one row per fitted model.
pub fn r_squared_table(region: &str, fits: &[&FitResult]) -> Table {
    let goods = fits.first().map(|f| f.goods.clone()).unwrap_or_default();
    let mut header = vec!["model".to_string()];
    header.extend(goods.iter().map(|g| format!("share_r2_{g}")));
    header.extend(goods.iter().map(|g| format!("quantity_r2_{g}")));
    let mut table = Table::new(format!("Expenditure share and quantity R-squared: {region}"), header);
    for fit in fits {
        let mut row = vec![fit.model().to_string()];
        row.extend(fit.r2_shares.iter().map(|r| fmt_opt(*r, 4)));
        row.extend(fit.r2_quantities.iter().map(|r| fmt_opt(*r, 4)));
        table.rows.push(row);
    }
    table
}

fn ll_cell(fit: &FitResult) -> String {
    fmt_opt(fit.log_likelihood, 4)
}

/// `#Df, LogLik, Df, Chisq, Pr(>Chisq)` rows; the first row is the reference
/// model and each later row is tested against it.
pub fn lr_table(title: impl Into<String>, reference: &FitResult, rows: &[(&FitResult, Result<LrResult>)]) -> Table {
    let header = ["Model", "#Df", "LogLik", "Df", "Chisq", "Pr(>Chisq)", "Signif"]
        .map(String::from)
        .to_vec();
    let mut table = Table::new(title, header);
    table.rows.push(vec![
        reference.model().to_string(),
        reference.n_free_parameters.to_string(),
        ll_cell(reference),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
    ]);
    for (fit, lr) in rows {
        let mut row = vec![fit.model().to_string(), fit.n_free_parameters.to_string(), ll_cell(fit)];
        match lr {
            Ok(lr) => {
                row.push(lr.df.to_string());
                row.push(fmt_num(lr.stat, 4));
                row.push(fmt_p_value(lr.p_value));
                row.push(Significance::from_p(lr.p_value).code().to_string());
                if let Some(w) = &lr.warning {
                    table.notes.push(format!("{}: {w}", fit.model()));
                }
            }
            Err(e) => {
                row.extend(["NA", "NA", "NA", ""].map(String::from));
                table.notes.push(format!("{}: {e}", fit.model()));
            }
        }
        table.rows.push(row);
    }
    table.notes.push(SIGNIFICANCE_LEGEND.to_string());
    table
}

fn class_label(c: GoodClass) -> &'static str {
    match c {
        GoodClass::Luxury => "luxury",
        GoodClass::Necessity => "necessity",
        GoodClass::Inferior => "inferior",
    }
}

/// Marshallian and expenditure elasticities stacked by region, one row per
/// (region, good), with standard errors and significance codes.
pub fn elasticity_table(reports: &[(String, &ElasticityReport)]) -> Table {
    let goods = reports.first().map(|(_, r)| r.goods.clone()).unwrap_or_default();
    let mut header = vec!["region".to_string(), "good".to_string()];
    for g in &goods {
        header.extend([format!("e_{g}"), format!("se_{g}"), format!("sig_{g}")]);
    }
    header.extend(["expenditure", "se_expenditure", "sig_expenditure", "class"].map(String::from));
    let mut table = Table::new("Marshallian price and expenditure elasticities", header);
    for (region, r) in reports {
        for (i, good) in r.goods.iter().enumerate() {
            let mut row = vec![region.clone(), good.clone()];
            for j in 0..r.goods.len() {
                row.push(fmt_num(r.marshallian[(i, j)], 4));
                row.push(fmt_num(r.std_errors.marshallian[(i, j)], 4));
                row.push(r.significance.marshallian[i][j].code().to_string());
            }
            row.push(fmt_num(r.expenditure[i], 4));
            row.push(fmt_num(r.std_errors.expenditure[i], 4));
            row.push(r.significance.expenditure[i].code().to_string());
            row.push(class_label(r.classification.goods[i]).to_string());
            table.rows.push(row);
        }
    }
    table.notes.push(SIGNIFICANCE_LEGEND.to_string());
    table
        .notes
        .push("Goods: luxury if expenditure elasticity > 1, necessity if in (0, 1] (1 counts as necessity), inferior if <= 0.".into());
    table
}

fn min_mean_max_sd(values: &[f64]) -> [f64; 4] {
    let n = values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    [min, mean.clamp(min, max), max, sd]
}

/// Min/Mean/Max/SD of each elasticity across regions.
pub fn elasticity_summary_table(reports: &[(String, &ElasticityReport)]) -> Table {
    let header = ["good", "elasticity", "Min", "Mean", "Max", "SD"].map(String::from).to_vec();
    let mut table = Table::new("Elasticity summary across regions", header);
    let Some((_, first)) = reports.first() else {
        return table;
    };
    let goods = &first.goods;
    let n = goods.len();
    let push = |table: &mut Table, good: &str, label: String, values: Vec<f64>| {
        let mut row = vec![good.to_string(), label];
        row.extend(min_mean_max_sd(&values).iter().map(|&v| fmt_num(v, 4)));
        table.rows.push(row);
    };
    for i in 0..n {
        for j in 0..n {
            let values = reports.iter().map(|(_, r)| r.marshallian[(i, j)]).collect();
            push(&mut table, &goods[i], format!("price_{}", goods[j]), values);
        }
        let values = reports.iter().map(|(_, r)| r.expenditure[i]).collect();
        push(&mut table, &goods[i], "expenditure".into(), values);
    }
    let note = if reports.len() < 2 { "; SD is NA with fewer than two" } else { "" };
    table.notes.push(format!("Across {} region(s){note}.", reports.len()));
    table
}

/// Monotonicity and concavity percentages per region.
pub fn regularity_table(rows: &[(String, ModelId, &RegularityReport)]) -> Table {
    let header = ["region", "model", "monotonicity_pct", "concavity_pct"].map(String::from).to_vec();
    let mut table = Table::new("Regularity", header);
    for (region, model, r) in rows {
        table.rows.push(vec![
            region.clone(),
            model.to_string(),
            fmt_num(r.monotonicity_pct, 2),
            fmt_num(r.concavity_pct, 2),
        ]);
    }
    table
}

#[derive(Clone, Debug, Serialize)]
pub struct CoefficientRow {
    pub good: String,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceDoc {
    pub converged: bool,
    pub iterations: usize,
    pub final_delta: f64,
    pub trace: Vec<f64>,
    pub unweighted_passes: usize,
}

/// JSON form of a fit.
#[derive(Clone, Debug, Serialize)]
pub struct FitDocument {
    pub region: String,
    pub model: ModelId,
    /// `false` when the estimation stopped before converging.
    #[serde(rename = "final")]
    pub is_final: bool,
    pub settings: String,
    pub goods: Vec<String>,
    pub dropped_good: String,
    pub columns: Vec<String>,
    pub coefficients: Vec<CoefficientRow>,
    pub log_likelihood: Option<f64>,
    pub n_free_coefficients: usize,
    pub n_free_parameters: usize,
    pub residual_covariance: Vec<Vec<f64>>,
    pub r2_shares: Vec<Option<f64>>,
    pub r2_quantities: Vec<Option<f64>>,
    pub restriction_violation: f64,
    pub exact_fit: bool,
    pub convergence: ConvergenceDoc,
    pub stage1_beta: Option<Vec<f64>>,
    pub regularity: Option<RegularityReport>,
}

impl FitDocument {
    pub fn new(region: &str, fit: &FitResult, regularity: Option<RegularityReport>) -> Self {
        let n = fit.n_goods();
        let model = fit.model();
        let k = model.n_columns(n);
        let b = fit.coefficients.to_matrix(model);
        let cov = &fit.full_coefficient_covariance;
        let coefficients = (0..n)
            .map(|i| CoefficientRow {
                good: fit.goods[i].clone(),
                estimates: (0..k).map(|c| b[(i, c)]).collect(),
                std_errors: (0..k).map(|c| cov[(i * k + c, i * k + c)].max(0.0).sqrt()).collect(),
            })
            .collect();
        let s = &fit.residual_covariance;
        Self {
            region: region.to_string(),
            model,
            is_final: fit.convergence.converged,
            settings: fit.spec.to_config_string(),
            goods: fit.goods.clone(),
            dropped_good: fit.goods[fit.dropped_good].clone(),
            columns: fit.column_labels.clone(),
            coefficients,
            log_likelihood: fit.log_likelihood,
            n_free_coefficients: fit.n_free_coefficients,
            n_free_parameters: fit.n_free_parameters,
            residual_covariance: s.row_iter().map(|r| r.iter().copied().collect()).collect(),
            r2_shares: fit.r2_shares.clone(),
            r2_quantities: fit.r2_quantities.clone(),
            restriction_violation: fit.restriction_violation,
            exact_fit: fit.exact_fit,
            convergence: ConvergenceDoc {
                converged: fit.convergence.converged,
                iterations: fit.convergence.iterations,
                final_delta: fit.convergence.final_delta,
                trace: fit.convergence.trace.clone(),
                unweighted_passes: fit.convergence.unweighted_passes,
            },
            stage1_beta: fit.stage1_beta.as_ref().map(|b| b.iter().copied().collect()),
            regularity,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_value_rendering() {
        assert_eq!(fmt_p_value(1e-20), "<2e-16");
        assert_eq!(fmt_p_value(0.13304), "0.1330");
        assert_eq!(fmt_p_value(2.5e-6), "2.500e-6");
        assert_eq!(fmt_p_value(1.0), "1.0000");
    }

    #[test]
    fn numbers_have_no_negative_zero() {
        assert_eq!(fmt_num(-0.0, 3), "0.000");
        assert_eq!(fmt_num(f64::NAN, 3), "NA");
        assert_eq!(fmt_num(-1.23456, 2), "-1.23");
    }

    #[test]
    fn markdown_and_csv_shapes() {
        let mut t = Table::new("T", vec!["a".into(), "b".into()]);
        t.rows.push(vec!["1".into(), "x,y".into()]);
        assert_eq!(t.to_csv().unwrap(), "a,b\n1,\"x,y\"\n");
        let md = t.to_markdown();
        assert!(md.contains("| a | b |\n|---|---|\n| 1 | x,y |\n"));
    }

    #[test]
    fn summary_statistics_across_regions() {
        let [min, mean, max, sd] = min_mean_max_sd(&[1.0, 2.0, 3.0]);
        assert_eq!((min, mean, max, sd), (1.0, 2.0, 3.0, 1.0));
        assert!(min_mean_max_sd(&[4.0])[3].is_nan());
    }

    #[test]
    fn format_parsing() {
        assert_eq!("MD".parse::<Format>().unwrap(), Format::Markdown);
        assert_eq!("csv".parse::<Format>().unwrap(), Format::Csv);
        assert!("xml".parse::<Format>().is_err());
    }
}
