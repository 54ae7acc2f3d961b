//! Weekly price/quantity panels, expenditure shares and descriptive statistics.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{AidsError, Result};

/// Week identifier as read from the input file.
///
/// Model formulas never use this value directly; they use the position
/// `t = 0..T-1` in the sorted panel.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WeekId {
    Index(i64),
    Date(NaiveDate),
}

impl WeekId {
    fn parse(raw: &str) -> Option<WeekId> {
        let raw = raw.trim();
        if let Ok(i) = raw.parse::<i64>() {
            return Some(WeekId::Index(i));
        }
        NaiveDate::parse_from_str(raw, "%Y-%m-%d").ok().map(WeekId::Date)
    }
}

impl fmt::Display for WeekId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeekId::Index(i) => write!(f, "{i}"),
            WeekId::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
        }
    }
}

/// T x n weekly prices and quantities for one region.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketPanel {
    region: String,
    goods: Vec<String>,
    weeks: Vec<WeekId>,
    prices: DMatrix<f64>,
    quantities: DMatrix<f64>,
}

impl MarketPanel {
    /// Validates and builds a panel. Rows of `prices`/`quantities` are weeks,
    /// columns are goods.
    pub fn new(
        region: impl Into<String>,
        goods: Vec<String>,
        weeks: Vec<WeekId>,
        prices: DMatrix<f64>,
        quantities: DMatrix<f64>,
    ) -> Result<Self> {
        let (t, n) = prices.shape();
        if quantities.shape() != (t, n) {
            return Err(AidsError::dimension(
                "quantity matrix",
                format!("{t}x{n}"),
                format!("{}x{}", quantities.nrows(), quantities.ncols()),
            ));
        }
        if goods.len() != n {
            return Err(AidsError::dimension("goods labels", n, goods.len()));
        }
        if weeks.len() != t {
            return Err(AidsError::dimension("week identifiers", t, weeks.len()));
        }
        if n == 0 || t == 0 {
            return Err(AidsError::InsufficientData("panel has no goods or no weeks".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for g in &goods {
            if !seen.insert(g.as_str()) {
                return Err(AidsError::data(format!("good '{g}'"), "duplicate good label"));
            }
        }
        for w in weeks.windows(2) {
            if w[0] >= w[1] {
                return Err(AidsError::data(
                    format!("week {}", w[1]),
                    "week identifiers must be strictly increasing",
                ));
            }
        }
        for (name, m) in [("price", &prices), ("quantity", &quantities)] {
            for r in 0..t {
                for c in 0..n {
                    let v = m[(r, c)];
                    if !(v.is_finite() && v > 0.0) {
                        return Err(AidsError::data(
                            format!("week {}, good '{}'", weeks[r], goods[c]),
                            format!("{name} must be finite and strictly positive, got {v}"),
                        ));
                    }
                }
            }
        }
        Ok(Self {
            region: region.into(),
            goods,
            weeks,
            prices,
            quantities,
        })
    }

    pub fn region(&self) -> &str {
        &self.region
    }

    pub fn goods(&self) -> &[String] {
        &self.goods
    }

    pub fn weeks(&self) -> &[WeekId] {
        &self.weeks
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn quantities(&self) -> &DMatrix<f64> {
        &self.quantities
    }

    pub fn n_goods(&self) -> usize {
        self.goods.len()
    }

    pub fn n_weeks(&self) -> usize {
        self.weeks.len()
    }

    /// Same data under another region label.
    pub fn with_region(mut self, region: impl Into<String>) -> Self {
        self.region = region.into();
        self
    }
}

/// Column mapping for CSV input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CsvLayout {
    /// One row per (week, good).
    Long {
        week: String,
        good: String,
        price: String,
        quantity: String,
    },
    /// One row per week; each good has its own price and quantity column.
    Wide { week: String, goods: Vec<WideGood> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WideGood {
    pub label: String,
    pub price: String,
    pub quantity: String,
}

impl Default for CsvLayout {
    fn default() -> Self {
        CsvLayout::Long {
            week: "week".into(),
            good: "good".into(),
            price: "price".into(),
            quantity: "quantity".into(),
        }
    }
}

/// Loads a panel from a CSV file. The region label is the file stem.
pub fn load_panel(path: impl AsRef<Path>, layout: &CsvLayout) -> Result<MarketPanel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| AidsError::io(path, e))?;
    let region = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "region".into());
    read_panel(file, layout, region).map_err(|e| match e {
        e @ AidsError::Io { .. } => e,
        other => other.context(format!("reading {}", path.display())),
    })
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| AidsError::Format(format!("missing column '{name}'")))
}

fn parse_value(raw: &str, line: u64, what: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| AidsError::data(format!("line {line}"), format!("non-numeric {what} '{raw}'")))?;
    if !(v.is_finite() && v > 0.0) {
        return Err(AidsError::data(
            format!("line {line}"),
            format!("{what} must be finite and strictly positive, got {raw}"),
        ));
    }
    Ok(v)
}

fn parse_week(raw: &str, line: u64) -> Result<WeekId> {
    WeekId::parse(raw).ok_or_else(|| {
        AidsError::data(
            format!("line {line}"),
            format!("week '{raw}' is neither an integer nor a YYYY-MM-DD date"),
        )
    })
}

/// Reads a panel from any CSV source.
pub fn read_panel<R: Read>(reader: R, layout: &CsvLayout, region: impl Into<String>) -> Result<MarketPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut cells: HashMap<(WeekId, usize), (f64, f64)> = HashMap::new();
    let mut goods: Vec<String> = Vec::new();
    let mut weeks: Vec<WeekId> = Vec::new();

    match layout {
        CsvLayout::Long {
            week,
            good,
            price,
            quantity,
        } => {
            let (wi, gi, pi, qi) = (
                column_index(&headers, week)?,
                column_index(&headers, good)?,
                column_index(&headers, price)?,
                column_index(&headers, quantity)?,
            );
            let mut good_pos: HashMap<String, usize> = HashMap::new();
            for record in rdr.records() {
                let record = record?;
                let line = record.position().map_or(0, |p| p.line());
                let field = |i: usize| record.get(i).unwrap_or("");
                let w = parse_week(field(wi), line)?;
                let g = field(gi).to_string();
                let p = parse_value(field(pi), line, "price")?;
                let q = parse_value(field(qi), line, "quantity")?;
                let next = good_pos.len();
                let gpos = *good_pos.entry(g.clone()).or_insert_with(|| {
                    goods.push(g.clone());
                    next
                });
                if cells.insert((w.clone(), gpos), (p, q)).is_some() {
                    return Err(AidsError::data(
                        format!("line {line}"),
                        format!("duplicate observation for week {w}, good '{g}'"),
                    ));
                }
                weeks.push(w);
            }
        }
        CsvLayout::Wide { week, goods: cols } => {
            let wi = column_index(&headers, week)?;
            let idx = cols
                .iter()
                .map(|g| Ok((column_index(&headers, &g.price)?, column_index(&headers, &g.quantity)?)))
                .collect::<Result<Vec<_>>>()?;
            goods = cols.iter().map(|g| g.label.clone()).collect();
            for record in rdr.records() {
                let record = record?;
                let line = record.position().map_or(0, |p| p.line());
                let w = parse_week(record.get(wi).unwrap_or(""), line)?;
                for (gpos, &(pi, qi)) in idx.iter().enumerate() {
                    let p = parse_value(record.get(pi).unwrap_or(""), line, "price")?;
                    let q = parse_value(record.get(qi).unwrap_or(""), line, "quantity")?;
                    if cells.insert((w.clone(), gpos), (p, q)).is_some() {
                        return Err(AidsError::data(
                            format!("line {line}"),
                            format!("duplicate week {w}"),
                        ));
                    }
                }
                weeks.push(w);
            }
        }
    }

    weeks.sort();
    weeks.dedup();
    if weeks.is_empty() {
        return Err(AidsError::InsufficientData("no data rows".into()));
    }
    let dated = weeks.iter().filter(|w| matches!(w, WeekId::Date(_))).count();
    if dated != 0 && dated != weeks.len() {
        return Err(AidsError::Format(
            "week column mixes integer indices and calendar dates".into(),
        ));
    }

    let (t, n) = (weeks.len(), goods.len());
    let mut prices = DMatrix::zeros(t, n);
    let mut quantities = DMatrix::zeros(t, n);
    for (r, w) in weeks.iter().enumerate() {
        for (c, g) in goods.iter().enumerate() {
            let (p, q) = cells.get(&(w.clone(), c)).ok_or_else(|| {
                AidsError::data(
                    format!("week {w}"),
                    format!("unbalanced panel: good '{g}' has no observation"),
                )
            })?;
            prices[(r, c)] = *p;
            quantities[(r, c)] = *q;
        }
    }
    MarketPanel::new(region, goods, weeks, prices, quantities)
}

/// Writes a panel as long-format CSV (`week,good,price,quantity`).
pub fn write_panel_csv<W: Write>(panel: &MarketPanel, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["week", "good", "price", "quantity"])?;
    for (t, w) in panel.weeks.iter().enumerate() {
        for (i, g) in panel.goods.iter().enumerate() {
            wtr.write_record([
                w.to_string(),
                g.clone(),
                panel.prices[(t, i)].to_string(),
                panel.quantities[(t, i)].to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| AidsError::io("<csv writer>", e))?;
    Ok(())
}

/// Expenditure shares, total expenditure and log prices derived from a panel.
#[derive(Clone, Debug)]
pub struct SharePanel {
    log_prices: DMatrix<f64>,
    shares: DMatrix<f64>,
    total_expenditure: DVector<f64>,
    source: Arc<MarketPanel>,
}

impl SharePanel {
    pub fn log_prices(&self) -> &DMatrix<f64> {
        &self.log_prices
    }

    pub fn shares(&self) -> &DMatrix<f64> {
        &self.shares
    }

    pub fn total_expenditure(&self) -> &DVector<f64> {
        &self.total_expenditure
    }

    pub fn source(&self) -> &MarketPanel {
        &self.source
    }

    pub fn n_goods(&self) -> usize {
        self.shares.ncols()
    }

    pub fn n_weeks(&self) -> usize {
        self.shares.nrows()
    }
}

/// Builds expenditure shares `w_it = p_it q_it / X_t` with `X_t = sum_i p_it q_it`.
pub fn compute_shares(panel: &MarketPanel) -> SharePanel {
    let expenditure = panel.prices.component_mul(&panel.quantities);
    let (t, n) = expenditure.shape();
    let total = DVector::from_fn(t, |r, _| expenditure.row(r).sum());
    let shares = DMatrix::from_fn(t, n, |r, c| expenditure[(r, c)] / total[r]);
    SharePanel {
        log_prices: panel.prices.map(f64::ln),
        shares,
        total_expenditure: total,
        source: Arc::new(panel.clone()),
    }
}

/// Min, max, mean, sample standard deviation and coefficient of variation of one series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
    /// `100 * sd / mean`, in percent.
    pub cv: f64,
}

impl SeriesStats {
    /// Requires at least two points (sample SD uses an n-1 denominator).
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(AidsError::InsufficientData(format!(
                "sample standard deviation needs at least 2 observations, got {}",
                values.len()
            )));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        let sd = (ss / (n - 1.0)).sqrt();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            min,
            max,
            // clamp away last-bit drift so that min <= mean <= max always holds
            mean: mean.clamp(min, max),
            sd,
            cv: coefficient_of_variation(sd, mean),
        })
    }
}

/// `100 * sd / mean`.
pub fn coefficient_of_variation(sd: f64, mean: f64) -> f64 {
    100.0 * sd / mean
}

/// Per-good descriptive statistics for prices and quantities.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryTable {
    pub region: String,
    pub goods: Vec<String>,
    pub quantity: Vec<SeriesStats>,
    pub price: Vec<SeriesStats>,
}

pub fn summary_stats(panel: &MarketPanel) -> Result<SummaryTable> {
    if panel.n_weeks() < 2 {
        return Err(AidsError::InsufficientData(format!(
            "summary statistics need T >= 2 weeks, panel has {}",
            panel.n_weeks()
        )));
    }
    let column_stats = |m: &DMatrix<f64>| -> Result<Vec<SeriesStats>> {
        m.column_iter()
            .map(|c| SeriesStats::from_values(c.as_slice()))
            .collect()
    };
    Ok(SummaryTable {
        region: panel.region.clone(),
        goods: panel.goods.clone(),
        quantity: column_stats(&panel.quantities)?,
        price: column_stats(&panel.prices)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_good_csv() -> &'static str {
        "week,good,price,quantity\n\
         0,beef,2,5\n0,pork,3,4\n\
         1,beef,2.5,4\n1,pork,3,5\n\
         2,beef,2,6\n2,pork,3.5,4\n"
    }

    #[test]
    fn loads_long_csv() {
        let p = read_panel(two_good_csv().as_bytes(), &CsvLayout::default(), "ca").unwrap();
        assert_eq!(p.n_weeks(), 3);
        assert_eq!(p.n_goods(), 2);
        assert_eq!(p.goods(), &["beef".to_string(), "pork".to_string()]);
        assert_eq!(p.prices()[(1, 0)], 2.5);
        assert_eq!(p.quantities()[(2, 1)], 4.0);
    }

    #[test]
    fn rows_are_sorted_by_week() {
        let csv = "week,good,price,quantity\n2,a,1,1\n0,a,2,1\n1,a,3,1\n";
        let p = read_panel(csv.as_bytes(), &CsvLayout::default(), "r").unwrap();
        assert_eq!(p.weeks(), &[WeekId::Index(0), WeekId::Index(1), WeekId::Index(2)]);
        assert_eq!(p.prices().column(0).as_slice(), &[2.0, 3.0, 1.0]);
    }

    #[test]
    fn iso_dates_are_accepted() {
        let csv = "week,good,price,quantity\n2019-08-31,a,1,1\n2019-08-24,a,2,1\n";
        let p = read_panel(csv.as_bytes(), &CsvLayout::default(), "r").unwrap();
        assert_eq!(p.weeks()[0].to_string(), "2019-08-24");
    }

    #[test]
    fn zero_price_is_a_data_error_naming_the_row() {
        let csv = "week,good,price,quantity\n0,a,1,1\n0,b,0,1\n";
        let err = read_panel(csv.as_bytes(), &CsvLayout::default(), "r").unwrap_err();
        match err {
            AidsError::Data { location, .. } => assert_eq!(location, "line 3"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_quantity_is_a_data_error() {
        let csv = "week,good,price,quantity\n0,a,1,abc\n";
        let err = read_panel(csv.as_bytes(), &CsvLayout::default(), "r").unwrap_err();
        assert!(matches!(err, AidsError::Data { .. }), "{err}");
    }

    #[test]
    fn unbalanced_panel_is_rejected() {
        let csv = "week,good,price,quantity\n0,beef,1,1\n0,pork,1,1\n1,pork,1,1\n2,beef,1,1\n2,pork,1,1\n";
        let err = read_panel(csv.as_bytes(), &CsvLayout::default(), "r").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unbalanced") && msg.contains("beef"), "{msg}");
    }

    #[test]
    fn duplicate_cell_is_rejected() {
        let csv = "week,good,price,quantity\n0,a,1,1\n0,a,2,1\n";
        let err = read_panel(csv.as_bytes(), &CsvLayout::default(), "r").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn missing_column_is_a_format_error() {
        let csv = "week,good,price\n0,a,1\n";
        let err = read_panel(csv.as_bytes(), &CsvLayout::default(), "r").unwrap_err();
        assert!(matches!(err, AidsError::Format(_)));
    }

    #[test]
    fn wide_layout() {
        let csv = "wk,p_a,q_a,p_b,q_b\n0,1,2,3,4\n1,1.5,2,3,5\n";
        let layout = CsvLayout::Wide {
            week: "wk".into(),
            goods: vec![
                WideGood { label: "a".into(), price: "p_a".into(), quantity: "q_a".into() },
                WideGood { label: "b".into(), price: "p_b".into(), quantity: "q_b".into() },
            ],
        };
        let p = read_panel(csv.as_bytes(), &layout, "r").unwrap();
        assert_eq!(p.prices()[(1, 0)], 1.5);
        assert_eq!(p.quantities()[(1, 1)], 5.0);
    }

    #[test]
    fn shares_hand_example() {
        let panel = MarketPanel::new(
            "r",
            vec!["a".into(), "b".into()],
            vec![WeekId::Index(0)],
            DMatrix::from_row_slice(1, 2, &[2.0, 3.0]),
            DMatrix::from_row_slice(1, 2, &[5.0, 4.0]),
        )
        .unwrap();
        let s = compute_shares(&panel);
        assert_eq!(s.total_expenditure()[0], 22.0);
        assert_relative_eq!(s.shares()[(0, 0)], 10.0 / 22.0, epsilon = 1e-15);
        assert_relative_eq!(s.shares()[(0, 1)], 12.0 / 22.0, epsilon = 1e-15);
        assert_relative_eq!(s.log_prices()[(0, 1)], 3f64.ln());
    }

    #[test]
    fn single_good_has_unit_shares() {
        let panel = MarketPanel::new(
            "r",
            vec!["a".into()],
            vec![WeekId::Index(0), WeekId::Index(1)],
            DMatrix::from_column_slice(2, 1, &[2.0, 7.0]),
            DMatrix::from_column_slice(2, 1, &[3.0, 0.5]),
        )
        .unwrap();
        assert!(compute_shares(&panel).shares().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn cv_of_lamb_quantities() {
        assert!((coefficient_of_variation(53.63, 81.0) - 66.21).abs() < 0.005);
    }

    #[test]
    fn stats_of_one_two_three() {
        let s = SeriesStats::from_values(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.min, s.max, s.mean), (1.0, 3.0, 2.0));
        assert_relative_eq!(s.sd, 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.cv, 50.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_series_has_zero_dispersion() {
        let s = SeriesStats::from_values(&[4.2; 5]).unwrap();
        assert_eq!(s.sd, 0.0);
        assert_eq!(s.cv, 0.0);
    }

    #[test]
    fn summary_needs_two_weeks() {
        let panel = MarketPanel::new(
            "r",
            vec!["a".into()],
            vec![WeekId::Index(0)],
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        assert!(matches!(summary_stats(&panel), Err(AidsError::InsufficientData(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn panel_strategy() -> impl Strategy<Value = MarketPanel> {
            (1usize..6, 1usize..8).prop_flat_map(|(n, t)| {
                (
                    proptest::collection::vec(0.01f64..100.0, n * t),
                    proptest::collection::vec(0.01f64..1000.0, n * t),
                )
                    .prop_map(move |(p, q)| {
                        MarketPanel::new(
                            "p",
                            (0..n).map(|i| format!("g{i}")).collect(),
                            (0..t as i64).map(WeekId::Index).collect(),
                            DMatrix::from_vec(t, n, p),
                            DMatrix::from_vec(t, n, q),
                        )
                        .unwrap()
                    })
            })
        }

        proptest! {
            #[test]
            fn share_rows_sum_to_one(panel in panel_strategy()) {
                let s = compute_shares(&panel);
                for r in 0..s.n_weeks() {
                    prop_assert!((s.shares().row(r).sum() - 1.0).abs() < 1e-12);
                    prop_assert!(s.shares().row(r).iter().all(|&w| (0.0..=1.0).contains(&w)));
                    let x: f64 = (0..s.n_goods())
                        .map(|i| panel.prices()[(r, i)] * panel.quantities()[(r, i)])
                        .sum();
                    prop_assert!((s.total_expenditure()[r] - x).abs() <= 1e-9 * x);
                }
            }

            #[test]
            fn shares_ignore_uniform_quantity_scaling(panel in panel_strategy(), k in 0.1f64..50.0) {
                let scaled = MarketPanel::new(
                    "p",
                    panel.goods().to_vec(),
                    panel.weeks().to_vec(),
                    panel.prices().clone(),
                    panel.quantities() * k,
                ).unwrap();
                let (a, b) = (compute_shares(&panel), compute_shares(&scaled));
                for (x, y) in a.shares().iter().zip(b.shares().iter()) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
                for (x, y) in a.total_expenditure().iter().zip(b.total_expenditure().iter()) {
                    prop_assert!((k * x - y).abs() <= 1e-12 * y);
                }
            }

            #[test]
            fn stats_are_ordered(values in proptest::collection::vec(0.01f64..1e4, 2..40)) {
                let s = SeriesStats::from_values(&values).unwrap();
                prop_assert!(s.min <= s.mean && s.mean <= s.max);
                prop_assert!(s.cv >= 0.0);
            }
        }
    }
}
