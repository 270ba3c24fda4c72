//! Seeded synthetic horizons shaped like the Iberian market under the
//! mechanism: cheap unshifted supply, subsidized fossil and gas-indexed
//! hydro at the margin, vertical and elastic demand, and a French
//! interconnector with recorded flows.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dataset, IoError};
use crate::counterfactual::{month_index, HourRecord};
use crate::coupling::{self, InterconnectorHour, PRICE_TOL};
use crate::market::{
    build_demand_curve, build_supply_curve, clear, ClearingResult, Country, DemandBid, SegmentKind,
    SupplyOffer, Technology,
};
use crate::mechanism::{self, MechanismParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GasPath {
    /// Price on the first day, €/MWh.
    pub start: f64,
    /// Expected daily change, €/MWh.
    pub drift: f64,
    /// Standard deviation of the daily change, €/MWh.
    pub volatility: f64,
    pub floor: f64,
}

impl Default for GasPath {
    fn default() -> Self {
        GasPath {
            start: 120.0,
            drift: 0.0,
            volatility: 8.0,
            floor: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub hours: usize,
    pub start: DateTime<Utc>,
    pub mechanism_start: NaiveDate,
    pub supply_units: usize,
    /// Relative capacity weights by technology.
    pub technology_mix: BTreeMap<Technology, f64>,
    /// Mean domestic demand, MWh/h.
    pub demand_mwh: f64,
    /// Relative hour-to-hour demand noise.
    pub demand_spread: f64,
    pub portugal_share: f64,
    /// Share of domestic demand bid below the ceiling.
    pub elastic_share: f64,
    pub elastic_bids: usize,
    pub affected_share_es: f64,
    pub affected_share_pt: f64,
    /// Probability that a hydro reservoir unit bids at gas opportunity cost.
    pub gas_indexed_hydro: f64,
    pub gas: GasPath,
    pub ntc_mwh: f64,
    /// Probability that France is dearer than the no-trade Iberian price.
    pub french_premium_probability: f64,
    pub morocco_demand_mwh: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let technology_mix = [
            (Technology::Nuclear, 0.25),
            (Technology::Wind, 0.25),
            (Technology::Solar, 0.15),
            (Technology::HydroReservoir, 0.15),
            (Technology::HydroPumped, 0.05),
            (Technology::CogenWaste, 0.05),
            (Technology::Ccgt, 0.3),
            (Technology::Coal, 0.05),
        ]
        .into_iter()
        .collect();
        SynthSpec {
            hours: 48,
            start: Utc
                .with_ymd_and_hms(2022, 6, 15, 0, 0, 0)
                .single()
                .expect("valid start"),
            mechanism_start: NaiveDate::from_ymd_opt(2022, 6, 15).expect("valid date"),
            supply_units: 16,
            technology_mix,
            demand_mwh: 28_000.0,
            demand_spread: 0.1,
            portugal_share: 0.17,
            elastic_share: 0.2,
            elastic_bids: 4,
            affected_share_es: 0.59,
            affected_share_pt: 0.35,
            gas_indexed_hydro: 0.5,
            gas: GasPath::default(),
            ntc_mwh: 2_000.0,
            french_premium_probability: 0.85,
            morocco_demand_mwh: 278.0,
        }
    }
}

impl SynthSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<SynthSpec, IoError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(IoError::file(path))?;
        let spec: SynthSpec =
            serde_json::from_str(&text).map_err(|e| IoError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let bad = |m: String| Err(IoError::Config(m));
        if self.hours == 0 {
            return bad("hours must be > 0".into());
        }
        if self.supply_units == 0 {
            return bad("supply_units must be > 0".into());
        }
        for (name, v) in [
            ("portugal_share", self.portugal_share),
            ("elastic_share", self.elastic_share),
            ("affected_share_es", self.affected_share_es),
            ("affected_share_pt", self.affected_share_pt),
            ("gas_indexed_hydro", self.gas_indexed_hydro),
            (
                "french_premium_probability",
                self.french_premium_probability,
            ),
            ("demand_spread", self.demand_spread),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} must be in [0, 1]"));
            }
        }
        if self.elastic_share >= 1.0 {
            return bad("elastic_share must be < 1".into());
        }
        if self.elastic_share > 0.0 && self.elastic_bids == 0 {
            return bad("elastic_share > 0 needs elastic_bids > 0".into());
        }
        for (name, v) in [
            ("demand_mwh", self.demand_mwh),
            ("ntc_mwh", self.ntc_mwh),
            ("morocco_demand_mwh", self.morocco_demand_mwh),
            ("gas.start", self.gas.start),
            ("gas.volatility", self.gas.volatility),
            ("gas.floor", self.gas.floor),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} {v} must be finite and >= 0"));
            }
        }
        if self.demand_mwh.is_nan() || self.demand_mwh <= 0.0 {
            return bad("demand_mwh must be > 0".into());
        }
        if !self.gas.drift.is_finite() {
            return bad("gas.drift must be finite".into());
        }
        if self.technology_mix.contains_key(&Technology::ImportBlock) {
            return bad("technology_mix cannot contain import_block".into());
        }
        if self
            .technology_mix
            .values()
            .any(|w| !(w.is_finite() && *w >= 0.0))
            || self.technology_mix.values().sum::<f64>() <= 0.0
        {
            return bad("technology_mix weights must be >= 0 with a positive sum".into());
        }
        if self.start.date_naive() < self.mechanism_start {
            return bad("start must fall on or after mechanism_start".into());
        }
        Ok(())
    }
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}

fn price2(x: f64) -> f64 {
    round_to(x.max(0.0), 2)
}

fn qty3(x: f64) -> f64 {
    round_to(x, 3)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Role {
    /// Bids near zero and receives no shift.
    Unshifted,
    /// Subsidized fossil unit.
    Privileged,
    /// Hydro bidding at gas opportunity cost.
    GasIndexed,
}

struct Unit {
    id: String,
    technology: Technology,
    country: Country,
    weight: f64,
    role: Role,
    capped: bool,
    /// Heat-rate multiplier on the gas-derived cost.
    cost_factor: f64,
}

fn build_fleet(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Unit> {
    let techs: Vec<(Technology, f64)> = spec
        .technology_mix
        .iter()
        .filter(|(_, w)| **w > 0.0)
        .map(|(t, w)| (*t, *w))
        .collect();
    let dist = WeightedIndex::new(techs.iter().map(|t| t.1)).expect("validated weights");
    let mut fleet = Vec::with_capacity(spec.supply_units);
    for i in 0..spec.supply_units {
        // cycle through the mix first so every technology appears
        let technology = if i < techs.len() {
            techs[i].0
        } else {
            techs[dist.sample(rng)].0
        };
        let role = match technology {
            Technology::Ccgt | Technology::Coal => Role::Privileged,
            Technology::HydroReservoir | Technology::HydroPumped
                if rng.gen_bool(spec.gas_indexed_hydro) =>
            {
                Role::GasIndexed
            }
            _ => Role::Unshifted,
        };
        let capped = role == Role::Unshifted
            && matches!(
                technology,
                Technology::Nuclear
                    | Technology::Wind
                    | Technology::Solar
                    | Technology::HydroReservoir
            );
        let country = if rng.gen_bool(0.2) {
            Country::Portugal
        } else {
            Country::Spain
        };
        let cost_factor = match technology {
            Technology::Coal => rng.gen_range(0.75..0.95),
            _ => rng.gen_range(0.95..1.25),
        };
        fleet.push(Unit {
            id: format!("{}-{i:02}", technology.as_str()),
            technology,
            country,
            weight: rng.gen_range(0.5..1.5),
            role,
            capped,
            cost_factor,
        });
    }
    fleet
}

fn gas_path(spec: &SynthSpec, days: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut prices = Vec::with_capacity(days);
    let mut g = spec.gas.start;
    for _ in 0..days {
        prices.push(round_to(g.max(spec.gas.floor), 2));
        let shock: f64 = (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum::<f64>() * 0.866;
        g = (g + spec.gas.drift + spec.gas.volatility * shock).max(spec.gas.floor);
    }
    prices
}

fn clear_hour(offers: &[SupplyOffer], bids: &[DemandBid]) -> Result<ClearingResult, IoError> {
    let s = build_supply_curve(offers).map_err(|e| IoError::Config(e.to_string()))?;
    let d = build_demand_curve(bids).map_err(|e| IoError::Config(e.to_string()))?;
    clear(&s, &d).map_err(|e| IoError::Config(format!("generated hour does not clear: {e}")))
}

/// Generates `spec.hours` consecutive hours. The same spec and seed always
/// give the same records.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<Vec<HourRecord>, IoError> {
    spec.validate()?;
    let params = MechanismParams::default();
    let ceiling = params.demand_ceiling;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fleet = build_fleet(spec, &mut rng);
    let days = spec.hours.div_ceil(24) + 1;
    let gas = gas_path(spec, days, &mut rng);
    let first_day = spec.start.date_naive();

    let unshifted_weight: f64 = fleet
        .iter()
        .filter(|u| u.role == Role::Unshifted)
        .map(|u| u.weight)
        .sum();
    let shifted_weight: f64 = fleet
        .iter()
        .filter(|u| u.role != Role::Unshifted)
        .map(|u| u.weight)
        .sum();

    let mut records = Vec::with_capacity(spec.hours);
    for h in 0..spec.hours {
        let hour_id = spec.start + Duration::hours(h as i64);
        let date = hour_id.date_naive();
        let day = (date - first_day).num_days() as usize;
        let gas_price = gas[day.min(gas.len() - 1)];
        let month = month_index(spec.mechanism_start, date);
        let reference = mechanism::gas_reference_price(month, &params)
            .map_err(|e| IoError::Config(e.to_string()))?;
        let gc = price2(
            mechanism::generation_contribution(gas_price, reference, params.efficiency)
                .map_err(|e| IoError::Config(e.to_string()))?,
        );
        let fuel_cost = gas_price / params.efficiency;

        let daily = 1.0 + 0.12 * (std::f64::consts::TAU * (h % 24) as f64 / 24.0 - 1.0).sin();
        let demand =
            spec.demand_mwh * daily * (1.0 + spec.demand_spread * rng.gen_range(-1.0..1.0));
        let unshifted_total = demand * rng.gen_range(0.40..0.62);
        let shifted_total = demand * 0.6;

        let mut offers = Vec::with_capacity(fleet.len() + 2);
        for u in &fleet {
            let (price, quantity) = match u.role {
                Role::Unshifted => (
                    price2(rng.gen_range(0.0..25.0)),
                    qty3(unshifted_total * u.weight / unshifted_weight.max(f64::MIN_POSITIVE)),
                ),
                Role::Privileged | Role::GasIndexed => {
                    let cost = fuel_cost * u.cost_factor + rng.gen_range(0.0..5.0);
                    (
                        price2((cost - gc).max(30.0)),
                        qty3(shifted_total * u.weight / shifted_weight.max(f64::MIN_POSITIVE)),
                    )
                }
            };
            if quantity <= 0.0 {
                continue;
            }
            let mut o =
                SupplyOffer::new(u.id.clone(), u.technology, price, quantity).in_country(u.country);
            o.privileged = u.role == Role::Privileged;
            o.gas_indexed = u.role == Role::GasIndexed;
            o.capped = u.capped;
            offers.push(o);
        }
        // peaking backstop keeps every hour feasible
        offers.push(
            SupplyOffer::new(
                "ccgt-peaker",
                Technology::Ccgt,
                price2((1.6 * fuel_cost - gc).max(30.0)),
                qty3(demand),
            )
            .privileged(),
        );

        let mut bids = Vec::new();
        let inelastic = demand * (1.0 - spec.elastic_share);
        for (country, share, affected_share, tag) in [
            (
                Country::Spain,
                1.0 - spec.portugal_share,
                spec.affected_share_es,
                "es",
            ),
            (
                Country::Portugal,
                spec.portugal_share,
                spec.affected_share_pt,
                "pt",
            ),
        ] {
            let block = inelastic * share;
            let affected = qty3(block * affected_share);
            let rest = qty3(block - affected);
            if affected > 0.0 {
                bids.push(
                    DemandBid::new(
                        format!("{tag}-inelastic-affected"),
                        ceiling,
                        affected,
                        SegmentKind::DomesticInelastic,
                    )
                    .affected()
                    .in_country(country),
                );
            }
            if rest > 0.0 {
                bids.push(
                    DemandBid::new(
                        format!("{tag}-inelastic"),
                        ceiling,
                        rest,
                        SegmentKind::DomesticInelastic,
                    )
                    .in_country(country),
                );
            }
        }
        if spec.elastic_share > 0.0 {
            let each = demand * spec.elastic_share / spec.elastic_bids as f64;
            for i in 0..spec.elastic_bids {
                let portuguese = rng.gen_bool(spec.portugal_share);
                let (country, share, tag) = if portuguese {
                    (Country::Portugal, spec.affected_share_pt, "pt")
                } else {
                    (Country::Spain, spec.affected_share_es, "es")
                };
                let price = price2(rng.gen_range(40.0..(fuel_cost * 1.2).max(60.0)));
                let quantity = qty3(each * rng.gen_range(0.5..1.5));
                if quantity <= 0.0 {
                    continue;
                }
                let mut b = DemandBid::new(
                    format!("{tag}-elastic-{i}"),
                    price,
                    quantity,
                    SegmentKind::DomesticElastic,
                )
                .in_country(country);
                b.affected = rng.gen_bool(share);
                bids.push(b);
            }
        }

        // Place France a gap away from the price Iberia reaches with the
        // link at full capacity, so the link is congested and France never
        // sets the Iberian price.
        let ntc = qty3(spec.ntc_mwh);
        let gap = rng.gen_range(5.0..150.0);
        let full_export = {
            let mut b = bids.clone();
            if ntc > 0.0 {
                b.push(
                    DemandBid::new("probe", ceiling, ntc, SegmentKind::ExportBlock)
                        .in_country(Country::France),
                );
            }
            clear_hour(&offers, &b)?.price
        };
        let full_import = {
            let mut o = offers.clone();
            if ntc > 0.0 {
                o.push(
                    SupplyOffer::new("probe", Technology::ImportBlock, 0.0, ntc)
                        .in_country(Country::France),
                );
            }
            clear_hour(&o, &bids)?.price
        };
        let premium =
            rng.gen_bool(spec.french_premium_probability) || full_import <= 2.0 * PRICE_TOL;
        let french_price = if premium {
            price2(full_export + gap)
        } else {
            price2((full_import - gap).max(0.0))
        };
        let ic = InterconnectorHour {
            ntc_export: ntc,
            ntc_import: ntc,
            french_price,
            actual_flow: 0.0,
        };
        let (export, import) = coupling::export_import_blocks(&ic);
        offers.extend(import);
        bids.extend(export);
        let clearing = clear_hour(&offers, &bids)?;

        let flow =
            coupling::net_flow(&clearing, &ic).map_err(|e| IoError::Config(e.to_string()))?;
        let ic = InterconnectorHour {
            actual_flow: flow,
            ..ic
        };
        let rent = coupling::congestion_rent(clearing.price, &ic, flow)
            .map_err(|e| IoError::Config(e.to_string()))?;
        let affected = clearing.accepted_demand_where(|b| b.affected);
        let settlement = mechanism::settle_hour(&clearing, gc, rent.rent_spain, affected)
            .map_err(|e| IoError::Config(e.to_string()))?;

        let record = HourRecord {
            hour_id,
            supply_offers: offers,
            demand_bids: bids,
            gc_per_mwh: gc,
            dc_per_mwh: price2(settlement.dc_per_mwh),
            actual_price: clearing.price,
            interconnector: Some(ic),
            affected_share_spain: round_to(spec.affected_share_es, 4),
            affected_share_portugal: round_to(spec.affected_share_pt, 4),
            morocco_demand: qty3(spec.morocco_demand_mwh),
        };
        record
            .validate(ceiling)
            .map_err(|e| IoError::Config(format!("generated hour {hour_id} is invalid: {e}")))?;
        records.push(record);
    }
    Ok(records)
}

/// Generates a horizon and writes it as a dataset file.
pub fn write_synthetic(
    spec: &SynthSpec,
    seed: u64,
    path: impl AsRef<Path>,
) -> Result<usize, IoError> {
    let records = generate_synthetic(spec, seed)?;
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(IoError::file(path))?;
    dataset::write_dataset(&records, std::io::BufWriter::new(file))?;
    Ok(records.len())
}
