//! Summary tables, plot-ready hourly series and impact totals, as CSV or
//! JSON. Every number is rounded to 3 decimals so both formats carry the
//! same values.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::SecondsFormat;
use serde::{Deserialize, Serialize};

use super::IoError;
use crate::accounting::{ImpactReport, ImpactRow};
use crate::counterfactual::{Scenario, ScenarioResult};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(format!("unknown format `{s}` (expected csv or json)")),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        })
    }
}

fn r3(x: f64) -> f64 {
    let r = (x * 1000.0).round() / 1000.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub unit: String,
    pub actual: f64,
    pub counterfactual: f64,
    pub delta: f64,
    pub pct_delta: Option<f64>,
}

impl From<&ImpactRow> for SummaryRow {
    fn from(r: &ImpactRow) -> Self {
        SummaryRow {
            label: r.label.clone(),
            unit: r.unit.clone(),
            actual: r3(r.actual),
            counterfactual: r3(r.counterfactual),
            delta: r3(r.delta),
            pct_delta: r.pct_delta.map(r3),
        }
    }
}

/// One hour of the price tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub hour_id: String,
    pub actual_price: f64,
    pub actual_plus_dc: f64,
    pub cf_price: f64,
    pub french_minus_actual: Option<f64>,
    pub french_minus_cf: Option<f64>,
    pub cf_flow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactEntry {
    pub key: String,
    pub unit: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: Scenario,
    pub hours: u32,
    pub summary: Vec<SummaryRow>,
    pub series: Vec<SeriesRow>,
    pub impact: Vec<ImpactEntry>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(result: &ScenarioResult, impact: &ImpactReport) -> Report {
        let series = result
            .hours
            .iter()
            .map(|h| SeriesRow {
                hour_id: h.hour_id.to_rfc3339_opts(SecondsFormat::Secs, true),
                actual_price: r3(h.actual_price),
                actual_plus_dc: r3(h.consumer_price_actual),
                cf_price: r3(h.cf_price),
                french_minus_actual: h.french_price.map(|f| r3(f - h.actual_price)),
                french_minus_cf: h.french_price.map(|f| r3(f - h.cf_price)),
                cf_flow: r3(h.cf_flow),
            })
            .collect();
        let e = |key: &str, unit: &str, value: f64| ImpactEntry {
            key: key.to_string(),
            unit: unit.to_string(),
            value: r3(value),
        };
        let m = &impact.margins;
        let rents = &impact.rents;
        let hl = &impact.headline;
        let entries = vec![
            e("consumer_cost", "EUR/MWh", impact.consumer_cost_per_mwh),
            e(
                "consumer_delta_spain",
                "MEUR",
                impact.consumer_delta_spain.millions(),
            ),
            e(
                "consumer_delta_portugal",
                "MEUR",
                impact.consumer_delta_portugal.millions(),
            ),
            e(
                "rent_funding_spain",
                "MEUR",
                impact.rent_funding_spain.millions(),
            ),
            e(
                "rent_funding_portugal",
                "MEUR",
                impact.rent_funding_portugal.millions(),
            ),
            e(
                "rent_funding_morocco",
                "MEUR",
                impact.rent_funding_morocco.millions(),
            ),
            e("rent_total_actual", "MEUR", rents.total.actual.millions()),
            e("rent_total_cf", "MEUR", rents.total.cf.millions()),
            e("rent_total_delta", "MEUR", rents.total.delta.millions()),
            e("rent_spain_actual", "MEUR", rents.spain.actual.millions()),
            e("rent_spain_cf", "MEUR", rents.spain.cf.millions()),
            e("delta_fossil_gen", "MWh/h", impact.delta_fossil_gen),
            e("co2_delta", "t", impact.co2_delta_t),
            e("gas_delta", "MWh", impact.gas_delta_mwh),
            e("headline_saving", "EUR/MWh", hl.saving_per_mwh),
            e("headline_demand", "MWh/h", hl.demand_mwh),
            e("headline_per_hour", "EUR", hl.per_hour.euros()),
            e("headline_horizon", "MEUR", hl.horizon.millions()),
            e(
                "headline_per_hour_affected",
                "EUR",
                hl.per_hour_affected.euros(),
            ),
            e(
                "headline_horizon_affected",
                "MEUR",
                hl.horizon_affected.millions(),
            ),
            e(
                "incumbent_privileged_gain",
                "MEUR",
                m.incumbent_privileged_gain / 1e6,
            ),
            e(
                "new_generation_revenue",
                "MEUR",
                m.new_generation_revenue / 1e6,
            ),
            e(
                "new_generation_min_margin",
                "MEUR",
                m.new_generation_min_margin / 1e6,
            ),
            e(
                "inframarginal_merchant_loss",
                "MEUR",
                m.inframarginal_merchant_loss / 1e6,
            ),
            e("system_income_loss", "MEUR", m.system_income_loss / 1e6),
        ];
        Report {
            scenario: result.scenario,
            hours: impact.hours,
            summary: impact.rows.iter().map(SummaryRow::from).collect(),
            series,
            impact: entries,
            notes: impact.notes.clone(),
        }
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Report, IoError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(IoError::file(path))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), IoError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(IoError::file(&path))?;
    Ok((path, BufWriter::new(file)))
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<PathBuf, IoError> {
    let (path, w) = create(dir, name)?;
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(IoError::file(&path))?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, IoError> {
    let (path, mut w) = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    use std::io::Write;
    w.write_all(b"\n").map_err(IoError::file(&path))?;
    w.flush().map_err(IoError::file(&path))?;
    Ok(path)
}

/// Writes the report into `dir`: `summary.csv`, `hourly.csv` and
/// `impact.csv` for CSV, `report.json` for JSON. Returns the written paths.
pub fn emit_report(
    report: &Report,
    format: OutputFormat,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, IoError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(IoError::file(dir))?;
    match format {
        OutputFormat::Csv => Ok(vec![
            write_csv(dir, "summary.csv", &report.summary)?,
            write_csv(dir, "hourly.csv", &report.series)?,
            write_csv(dir, "impact.csv", &report.impact)?,
        ]),
        OutputFormat::Json => Ok(vec![write_json(dir, "report.json", report)?]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedRow {
    pub label: String,
    pub unit: String,
    pub actual: f64,
    /// Counterfactual value per input report, in input order.
    pub counterfactual: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedReport {
    pub scenarios: Vec<Scenario>,
    pub rows: Vec<MergedRow>,
    pub reports: Vec<Report>,
}

/// Lines up several JSON reports side by side: one table with the actual
/// column taken from the first report and one counterfactual column per
/// report. Writes `merged.json` and `merged.csv` into `dir`.
pub fn merge_reports(inputs: &[PathBuf], dir: impl AsRef<Path>) -> Result<MergedReport, IoError> {
    if inputs.is_empty() {
        return Err(IoError::Config(
            "report-merge needs at least one report".into(),
        ));
    }
    let reports = inputs
        .iter()
        .map(Report::read_json)
        .collect::<Result<Vec<_>, _>>()?;
    let first = &reports[0];
    let mut rows = Vec::with_capacity(first.summary.len());
    for row in &first.summary {
        let mut cf = Vec::with_capacity(reports.len());
        for (r, path) in reports.iter().zip(inputs) {
            let other = r
                .summary
                .iter()
                .find(|o| o.label == row.label)
                .ok_or_else(|| {
                    IoError::Config(format!("{} has no `{}` row", path.display(), row.label))
                })?;
            cf.push(other.counterfactual);
        }
        rows.push(MergedRow {
            label: row.label.clone(),
            unit: row.unit.clone(),
            actual: row.actual,
            counterfactual: cf,
        });
    }
    let merged = MergedReport {
        scenarios: reports.iter().map(|r| r.scenario).collect(),
        rows,
        reports,
    };

    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(IoError::file(dir))?;
    write_json(dir, "merged.json", &merged)?;
    let (path, w) = create(dir, "merged.csv")?;
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![
        "label".to_string(),
        "unit".to_string(),
        "actual".to_string(),
    ];
    header.extend(merged.scenarios.iter().map(|s| s.to_string()));
    wtr.write_record(&header)?;
    for row in &merged.rows {
        let mut rec = vec![row.label.clone(), row.unit.clone(), row.actual.to_string()];
        rec.extend(row.counterfactual.iter().map(f64::to_string));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(IoError::file(&path))?;
    Ok(merged)
}
