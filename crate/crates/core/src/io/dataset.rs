//! Hourly dataset CSV: one file per horizon, offer/bid/meta rows keyed by
//! hour.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;

use super::IoError;
use crate::counterfactual::HourRecord;
use crate::coupling::InterconnectorHour;
use crate::market::{DemandBid, SegmentKind, SupplyOffer};

pub const COLUMNS: [&str; 22] = [
    "hour_id",
    "row_kind",
    "unit_or_agent_id",
    "technology",
    "price_eur_mwh",
    "quantity_mwh",
    "privileged",
    "gas_indexed",
    "capped",
    "affected",
    "segment_kind",
    "country",
    "gc_eur_mwh",
    "dc_eur_mwh",
    "actual_price_eur_mwh",
    "french_price_eur_mwh",
    "ntc_export_mwh",
    "ntc_import_mwh",
    "actual_flow_mwh",
    "affected_share_es",
    "affected_share_pt",
    "morocco_demand_mwh",
];

const HOUR: usize = 0;
const KIND: usize = 1;
const ID: usize = 2;
const TECH: usize = 3;
const PRICE: usize = 4;
const QTY: usize = 5;
const PRIVILEGED: usize = 6;
const GAS_INDEXED: usize = 7;
const CAPPED: usize = 8;
const AFFECTED: usize = 9;
const SEGMENT_KIND: usize = 10;
const COUNTRY: usize = 11;
const GC: usize = 12;
const DC: usize = 13;
const ACTUAL_PRICE: usize = 14;
const FRENCH_PRICE: usize = 15;
const NTC_EXPORT: usize = 16;
const NTC_IMPORT: usize = 17;
const FLOW: usize = 18;
const SHARE_ES: usize = 19;
const SHARE_PT: usize = 20;
const MOROCCO: usize = 21;

struct Row<'a> {
    line: u64,
    rec: &'a csv::StringRecord,
}

impl Row<'_> {
    fn raw(&self, col: usize) -> &str {
        self.rec.get(col).unwrap_or("").trim()
    }

    fn text(&self, col: usize) -> Result<&str, IoError> {
        let s = self.raw(col);
        if s.is_empty() {
            return Err(self.bad(col, "required field is blank"));
        }
        Ok(s)
    }

    fn bad(&self, col: usize, reason: impl Into<String>) -> IoError {
        IoError::BadField {
            line: self.line,
            column: COLUMNS[col],
            reason: reason.into(),
        }
    }

    fn number(&self, col: usize) -> Result<f64, IoError> {
        self.opt_number(col)?
            .ok_or_else(|| self.bad(col, "required field is blank"))
    }

    fn opt_number(&self, col: usize) -> Result<Option<f64>, IoError> {
        let s = self.raw(col);
        if s.is_empty() {
            return Ok(None);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(IoError::BadNumber {
                line: self.line,
                column: COLUMNS[col],
            }),
        }
    }

    fn flag(&self, col: usize) -> Result<bool, IoError> {
        match self.raw(col) {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(self.bad(col, format!("flag must be 0 or 1, got `{other}`"))),
        }
    }

    fn parsed<T: std::str::FromStr<Err = String>>(&self, col: usize) -> Result<T, IoError> {
        self.text(col)?
            .parse()
            .map_err(|e: String| self.bad(col, e))
    }
}

struct Meta {
    gc: f64,
    dc: f64,
    actual_price: f64,
    french_price: Option<f64>,
    ntc_export: Option<f64>,
    ntc_import: Option<f64>,
    actual_flow: Option<f64>,
    share_es: f64,
    share_pt: f64,
    morocco: f64,
}

#[derive(Default)]
struct Partial {
    offers: Vec<SupplyOffer>,
    bids: Vec<DemandBid>,
    meta: Option<Meta>,
}

/// Reads and validates a dataset file.
pub fn read_dataset(
    path: impl AsRef<Path>,
    demand_ceiling: f64,
) -> Result<Vec<HourRecord>, IoError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(IoError::file(path))?;
    parse_dataset(std::io::BufReader::new(file), demand_ceiling)
}

/// Parses a dataset, grouping rows by hour. Records come back sorted by
/// hour and validated against `demand_ceiling`.
pub fn parse_dataset(reader: impl Read, demand_ceiling: f64) -> Result<Vec<HourRecord>, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != COLUMNS {
        return Err(IoError::Header {
            expected: COLUMNS.join(","),
            found: found.join(","),
        });
    }

    let mut hours: BTreeMap<DateTime<Utc>, Partial> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = Row { line, rec: &rec };
        let hour = DateTime::parse_from_rfc3339(row.text(HOUR)?)
            .map_err(|e| row.bad(HOUR, e.to_string()))?
            .with_timezone(&Utc);
        let entry = hours.entry(hour).or_default();
        match row.text(KIND)? {
            "offer" => entry.offers.push(parse_offer(&row)?),
            "bid" => entry.bids.push(parse_bid(&row)?),
            "meta" => {
                if entry.meta.is_some() {
                    return Err(IoError::DuplicateMeta(hour));
                }
                entry.meta = Some(parse_meta(&row)?);
            }
            other => {
                return Err(row.bad(
                    KIND,
                    format!("row_kind must be offer, bid or meta, got `{other}`"),
                ))
            }
        }
    }
    if hours.is_empty() {
        return Err(IoError::EmptyDataset);
    }

    // a blank capacity falls back to the largest recorded flow
    let max_flow = hours
        .values()
        .filter_map(|p| p.meta.as_ref().and_then(|m| m.actual_flow))
        .fold(0.0f64, |acc, f| acc.max(f.abs()));

    let mut out = Vec::with_capacity(hours.len());
    for (hour_id, p) in hours {
        let meta = p.meta.ok_or(IoError::MissingMeta(hour_id))?;
        let interconnector = meta.french_price.map(|french_price| InterconnectorHour {
            ntc_export: meta.ntc_export.unwrap_or(max_flow),
            ntc_import: meta.ntc_import.unwrap_or(max_flow),
            french_price,
            actual_flow: meta.actual_flow.unwrap_or(0.0),
        });
        let record = HourRecord {
            hour_id,
            supply_offers: p.offers,
            demand_bids: p.bids,
            gc_per_mwh: meta.gc,
            dc_per_mwh: meta.dc,
            actual_price: meta.actual_price,
            interconnector,
            affected_share_spain: meta.share_es,
            affected_share_portugal: meta.share_pt,
            morocco_demand: meta.morocco,
        };
        record
            .validate(demand_ceiling)
            .map_err(|source| IoError::InvalidHour {
                hour: hour_id,
                source,
            })?;
        out.push(record);
    }
    Ok(out)
}

fn parse_offer(row: &Row<'_>) -> Result<SupplyOffer, IoError> {
    let tech = row.text(TECH)?;
    let technology = tech.parse().map_err(|_| IoError::UnknownTechnology {
        line: row.line,
        value: tech.to_string(),
    })?;
    Ok(SupplyOffer {
        unit_id: row.text(ID)?.to_string(),
        technology,
        country: row.parsed(COUNTRY)?,
        price: row.number(PRICE)?,
        quantity: row.number(QTY)?,
        privileged: row.flag(PRIVILEGED)?,
        gas_indexed: row.flag(GAS_INDEXED)?,
        capped: row.flag(CAPPED)?,
    })
}

fn parse_bid(row: &Row<'_>) -> Result<DemandBid, IoError> {
    Ok(DemandBid {
        agent_id: row.text(ID)?.to_string(),
        country: row.parsed(COUNTRY)?,
        price: row.number(PRICE)?,
        quantity: row.number(QTY)?,
        affected: row.flag(AFFECTED)?,
        segment_kind: row.parsed::<SegmentKind>(SEGMENT_KIND)?,
    })
}

fn parse_meta(row: &Row<'_>) -> Result<Meta, IoError> {
    Ok(Meta {
        gc: row.number(GC)?,
        dc: row.number(DC)?,
        actual_price: row.number(ACTUAL_PRICE)?,
        french_price: row.opt_number(FRENCH_PRICE)?,
        ntc_export: row.opt_number(NTC_EXPORT)?,
        ntc_import: row.opt_number(NTC_IMPORT)?,
        actual_flow: row.opt_number(FLOW)?,
        share_es: row.number(SHARE_ES)?,
        share_pt: row.number(SHARE_PT)?,
        morocco: row.number(MOROCCO)?,
    })
}

fn price(v: f64) -> String {
    format!("{v:.2}")
}

fn qty(v: f64) -> String {
    format!("{v:.3}")
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn hour_text(h: DateTime<Utc>) -> String {
    h.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Writes records in hour order, prices at 0.01 €/MWh, quantities at
/// 0.001 MWh and shares at 0.0001.
pub fn write_dataset(records: &[HourRecord], writer: impl Write) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(COLUMNS)?;
    let mut sorted: Vec<&HourRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.hour_id);
    for r in sorted {
        let hour = hour_text(r.hour_id);
        for o in &r.supply_offers {
            let mut row = vec![String::new(); COLUMNS.len()];
            row[HOUR] = hour.clone();
            row[KIND] = "offer".into();
            row[ID] = o.unit_id.clone();
            row[TECH] = o.technology.as_str().into();
            row[PRICE] = price(o.price);
            row[QTY] = qty(o.quantity);
            row[PRIVILEGED] = flag(o.privileged).into();
            row[GAS_INDEXED] = flag(o.gas_indexed).into();
            row[CAPPED] = flag(o.capped).into();
            row[COUNTRY] = o.country.code().into();
            wtr.write_record(&row)?;
        }
        for b in &r.demand_bids {
            let mut row = vec![String::new(); COLUMNS.len()];
            row[HOUR] = hour.clone();
            row[KIND] = "bid".into();
            row[ID] = b.agent_id.clone();
            row[PRICE] = price(b.price);
            row[QTY] = qty(b.quantity);
            row[AFFECTED] = flag(b.affected).into();
            row[SEGMENT_KIND] = b.segment_kind.as_str().into();
            row[COUNTRY] = b.country.code().into();
            wtr.write_record(&row)?;
        }
        let mut row = vec![String::new(); COLUMNS.len()];
        row[HOUR] = hour;
        row[KIND] = "meta".into();
        row[GC] = price(r.gc_per_mwh);
        row[DC] = price(r.dc_per_mwh);
        row[ACTUAL_PRICE] = price(r.actual_price);
        if let Some(ic) = &r.interconnector {
            row[FRENCH_PRICE] = price(ic.french_price);
            row[NTC_EXPORT] = qty(ic.ntc_export);
            row[NTC_IMPORT] = qty(ic.ntc_import);
            row[FLOW] = qty(ic.actual_flow);
        }
        row[SHARE_ES] = format!("{:.4}", r.affected_share_spain);
        row[SHARE_PT] = format!("{:.4}", r.affected_share_portugal);
        row[MOROCCO] = qty(r.morocco_demand);
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(IoError::file("<dataset>"))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deviation {
    pub hour_id: DateTime<Utc>,
    pub recorded_price: f64,
    pub cleared_price: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub hours: usize,
    pub tolerance: f64,
    pub deviations: Vec<Deviation>,
    /// Hours whose stored curves do not clear, with the reason.
    pub failures: Vec<(DateTime<Utc>, String)>,
    pub max_abs_deviation: f64,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.deviations.is_empty() && self.failures.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} hours checked, tolerance {:.2} EUR/MWh, max |deviation| {:.4} EUR/MWh",
            self.hours, self.tolerance, self.max_abs_deviation
        )?;
        writeln!(
            f,
            "{} hours beyond tolerance, {} hours failed to clear",
            self.deviations.len(),
            self.failures.len()
        )?;
        for d in &self.deviations {
            writeln!(
                f,
                "  {}  recorded {:.2}  cleared {:.2}  deviation {:+.2}",
                hour_text(d.hour_id),
                d.recorded_price,
                d.cleared_price,
                d.deviation
            )?;
        }
        for (h, why) in &self.failures {
            writeln!(f, "  {}  {why}", hour_text(*h))?;
        }
        Ok(())
    }
}

/// Re-clears every hour from its stored curves and compares the result with
/// the recorded price.
pub fn validate_dataset(records: &[HourRecord], tolerance: f64) -> ValidationReport {
    let mut deviations = Vec::new();
    let mut failures = Vec::new();
    let mut max_abs: f64 = 0.0;
    for r in records {
        match r.clear_actual() {
            Ok(c) => {
                let dev = c.price - r.actual_price;
                max_abs = max_abs.max(dev.abs());
                if dev.abs() > tolerance {
                    deviations.push(Deviation {
                        hour_id: r.hour_id,
                        recorded_price: r.actual_price,
                        cleared_price: c.price,
                        deviation: dev,
                    });
                }
            }
            Err(e) => failures.push((r.hour_id, e.to_string())),
        }
    }
    ValidationReport {
        hours: records.len(),
        tolerance,
        deviations,
        failures,
        max_abs_deviation: max_abs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::DEFAULT_DEMAND_CEILING;

    const HEADER: &str = "hour_id,row_kind,unit_or_agent_id,technology,price_eur_mwh,quantity_mwh,privileged,gas_indexed,capped,affected,segment_kind,country,gc_eur_mwh,dc_eur_mwh,actual_price_eur_mwh,french_price_eur_mwh,ntc_export_mwh,ntc_import_mwh,actual_flow_mwh,affected_share_es,affected_share_pt,morocco_demand_mwh";

    fn fixture(meta: bool) -> String {
        let mut s = format!("{HEADER}\n");
        let h = "2022-06-15T10:00:00Z";
        s += &format!("{h},offer,nuc1,nuclear,5.00,100.000,0,0,1,,,ES,,,,,,,,,,\n");
        s += &format!("{h},offer,ccgt1,ccgt,120.00,100.000,1,0,0,,,ES,,,,,,,,,,\n");
        s += &format!("{h},offer,hyd1,hydro_reservoir,90.00,50.000,0,1,0,,,PT,,,,,,,,,,\n");
        s += &format!("{h},bid,es,,3000.00,150.000,,,,1,domestic_inelastic,ES,,,,,,,,,,\n");
        s += &format!("{h},bid,ind,,80.00,20.000,,,,0,domestic_elastic,PT,,,,,,,,,,\n");
        if meta {
            s += &format!("{h},meta,,,,,,,,,,,100.00,40.00,90.00,150.00,500.000,400.000,0.000,0.5900,0.3500,278.000\n");
        }
        s
    }

    #[test]
    fn one_hour_fixture() {
        let recs = parse_dataset(fixture(true).as_bytes(), DEFAULT_DEMAND_CEILING).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.supply_offers.len(), 3);
        assert_eq!(r.demand_bids.len(), 2);
        assert_eq!(r.affected_share_spain, 0.59);
        assert_eq!(r.interconnector.unwrap().ntc_import, 400.0);
        assert!(r.supply_offers[0].capped);
    }

    #[test]
    fn missing_meta_names_the_hour() {
        let err = parse_dataset(fixture(false).as_bytes(), DEFAULT_DEMAND_CEILING).unwrap_err();
        match err {
            IoError::MissingMeta(h) => assert_eq!(hour_text(h), "2022-06-15T10:00:00Z"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn duplicate_meta_is_rejected() {
        let mut s = fixture(true);
        let last = s.lines().last().unwrap().to_string();
        s += &format!("{last}\n");
        assert!(matches!(
            parse_dataset(s.as_bytes(), DEFAULT_DEMAND_CEILING),
            Err(IoError::DuplicateMeta(_))
        ));
    }

    #[test]
    fn bad_number_reports_line_and_column() {
        let s = fixture(true).replace("120.00", "12O.00");
        match parse_dataset(s.as_bytes(), DEFAULT_DEMAND_CEILING).unwrap_err() {
            IoError::BadNumber { line, column } => {
                assert_eq!(line, 3);
                assert_eq!(column, "price_eur_mwh");
            }
            e => panic!("unexpected {e}"),
        }
        let s = fixture(true).replace("120.00", "inf");
        assert!(matches!(
            parse_dataset(s.as_bytes(), DEFAULT_DEMAND_CEILING),
            Err(IoError::BadNumber { .. })
        ));
    }

    #[test]
    fn unknown_technology_reports_line() {
        let s = fixture(true).replace(",ccgt,", ",fusion,");
        assert!(matches!(
            parse_dataset(s.as_bytes(), DEFAULT_DEMAND_CEILING),
            Err(IoError::UnknownTechnology { line: 3, .. })
        ));
    }

    #[test]
    fn header_and_flags_are_checked() {
        let s = fixture(true).replacen("hour_id", "hour", 1);
        assert!(matches!(
            parse_dataset(s.as_bytes(), DEFAULT_DEMAND_CEILING),
            Err(IoError::Header { .. })
        ));
        let s = fixture(true).replace(",0,0,1,,,ES", ",0,0,2,,,ES");
        assert!(matches!(
            parse_dataset(s.as_bytes(), DEFAULT_DEMAND_CEILING),
            Err(IoError::BadField { .. })
        ));
        assert!(matches!(
            parse_dataset(format!("{HEADER}\n").as_bytes(), DEFAULT_DEMAND_CEILING),
            Err(IoError::EmptyDataset)
        ));
    }

    #[test]
    fn emit_then_parse_round_trips() {
        let recs = parse_dataset(fixture(true).as_bytes(), DEFAULT_DEMAND_CEILING).unwrap();
        let mut buf = Vec::new();
        write_dataset(&recs, &mut buf).unwrap();
        let again = parse_dataset(buf.as_slice(), DEFAULT_DEMAND_CEILING).unwrap();
        assert_eq!(recs, again);
        let mut buf2 = Vec::new();
        write_dataset(&again, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn validation_flags_perturbed_hours() {
        let mut recs = parse_dataset(fixture(true).as_bytes(), DEFAULT_DEMAND_CEILING).unwrap();
        let report = validate_dataset(&recs, 1.0);
        assert!(report.is_clean(), "{report}");
        recs[0].supply_offers[2].price = 93.0;
        let report = validate_dataset(&recs, 1.0);
        assert_eq!(report.deviations.len(), 1);
        assert!((report.deviations[0].deviation - 3.0).abs() < 1e-9);
    }
}
