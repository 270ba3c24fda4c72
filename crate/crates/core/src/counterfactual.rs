//! Counterfactual engines: the flat GC mark-up (ministry), re-clearing with
//! elastic Iberian demand and trade held at actual volumes (elastic), and
//! re-clearing with France as a price-taker across the interconnector
//! (coupled).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::{self, ActualHour, CounterfactualHour, MarginDecomposition};
use crate::coupling::{self, CouplingError, InterconnectorHour, RentAccount};
use crate::market::{
    build_demand_curve, build_supply_curve, clear, shift_curve_by, ClearingResult, Country,
    DemandBid, MarketError, SegmentKind, SupplyOffer, Technology,
};
use crate::mechanism::{self, MechanismError, MechanismParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Accounting(#[from] accounting::AccountingError),
    #[error("invalid hour record: {0}")]
    InvalidRecord(String),
    #[error("hour has no interconnector data")]
    MissingInterconnector,
    #[error("no gas price for {0}")]
    MissingGasPrice(NaiveDate),
    #[error("hour {0} appears more than once")]
    DuplicateHour(DateTime<Utc>),
    #[error("horizon is empty")]
    EmptyHorizon,
    #[error("hour {hour}: {source}")]
    AtHour {
        hour: DateTime<Utc>,
        source: Box<ScenarioError>,
    },
}

impl ScenarioError {
    fn at(self, hour: DateTime<Utc>) -> Self {
        match self {
            e @ ScenarioError::AtHour { .. } => e,
            e => ScenarioError::AtHour {
                hour,
                source: Box::new(e),
            },
        }
    }

    /// The error without hour context.
    pub fn root(&self) -> &ScenarioError {
        match self {
            ScenarioError::AtHour { source, .. } => source.root(),
            e => e,
        }
    }
}

/// Everything recorded for one delivery hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourRecord {
    pub hour_id: DateTime<Utc>,
    pub supply_offers: Vec<SupplyOffer>,
    pub demand_bids: Vec<DemandBid>,
    /// Recorded generation contribution, €/MWh.
    pub gc_per_mwh: f64,
    /// Recorded demand contribution, €/MWh.
    pub dc_per_mwh: f64,
    pub actual_price: f64,
    pub interconnector: Option<InterconnectorHour>,
    pub affected_share_spain: f64,
    pub affected_share_portugal: f64,
    /// MWh
    pub morocco_demand: f64,
}

impl HourRecord {
    pub fn validate(&self, demand_ceiling: f64) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidRecord(m));
        for (name, v) in [
            ("gc", self.gc_per_mwh),
            ("dc", self.dc_per_mwh),
            ("actual price", self.actual_price),
            ("morocco demand", self.morocco_demand),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} {v} must be finite and >= 0"));
            }
        }
        for (name, v) in [
            ("affected_share_es", self.affected_share_spain),
            ("affected_share_pt", self.affected_share_portugal),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} must be in [0, 1]"));
            }
        }
        if self.supply_offers.is_empty() {
            return Err(MarketError::EmptyCurve(crate::market::Side::Supply).into());
        }
        if self.demand_bids.is_empty() {
            return Err(MarketError::EmptyCurve(crate::market::Side::Demand).into());
        }
        use crate::market::Segment;
        for o in &self.supply_offers {
            o.validate()?;
        }
        for b in &self.demand_bids {
            b.validate()?;
            if b.segment_kind == SegmentKind::DomesticInelastic
                && (b.price - demand_ceiling).abs() > 1e-9
            {
                return bad(format!(
                    "inelastic bid `{}` priced {} instead of the ceiling {demand_ceiling}",
                    b.agent_id, b.price
                ));
            }
        }
        if let Some(ic) = &self.interconnector {
            ic.validate()?;
        }
        Ok(())
    }

    pub fn clear_actual(&self) -> Result<ClearingResult, ScenarioError> {
        let supply = build_supply_curve(&self.supply_offers)?;
        let demand = build_demand_curve(&self.demand_bids)?;
        Ok(clear(&supply, &demand)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Ministry,
    Elastic,
    Coupled,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Ministry, Scenario::Elastic, Scenario::Coupled];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Ministry => "ministry",
            Scenario::Elastic => "elastic",
            Scenario::Coupled => "coupled",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| {
                format!("unknown scenario `{s}` (expected ministry, elastic or coupled)")
            })
    }
}

/// Knobs shared by every engine.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineOptions {
    pub params: MechanismParams,
    /// Credit the counterfactual Spanish rent to affected consumers.
    pub rents_in_cf: bool,
    /// Derive GC and DC from gas prices instead of the recorded series.
    pub recompute_gc: bool,
    /// Shift every uncapped, non-import offer by GC, not just gas-indexed ones.
    pub blanket_hydro_shift: bool,
    /// Replace hourly DC by one volume-weighted DC for the whole horizon.
    pub period_average_dc: bool,
    /// Day-ahead gas prices by delivery date, €/MWh of gas.
    pub gas_prices: BTreeMap<NaiveDate, f64>,
    /// First day of month 1 of the reference-price schedule.
    pub mechanism_start: NaiveDate,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            params: MechanismParams::default(),
            rents_in_cf: false,
            recompute_gc: false,
            blanket_hydro_shift: false,
            period_average_dc: false,
            gas_prices: BTreeMap::new(),
            mechanism_start: NaiveDate::from_ymd_opt(2022, 6, 15).expect("valid date"),
        }
    }
}

/// GC and DC rates applied to one hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transfers {
    pub gc_gas: f64,
    pub gc_coal: f64,
    pub dc: f64,
}

impl Transfers {
    pub fn recorded(hour: &HourRecord) -> Self {
        Transfers {
            gc_gas: hour.gc_per_mwh,
            gc_coal: hour.gc_per_mwh,
            dc: hour.dc_per_mwh,
        }
    }

    pub fn gc_for(&self, offer: &SupplyOffer) -> f64 {
        if offer.technology == Technology::Coal {
            self.gc_coal
        } else {
            self.gc_gas
        }
    }
}

/// 1-based month of `date` counted from `start`.
pub fn month_index(start: NaiveDate, date: NaiveDate) -> i64 {
    let months = i64::from(date.year() - start.year()) * 12 + i64::from(date.month())
        - i64::from(start.month());
    months + 1 - i64::from(date.day() < start.day())
}

/// Per-hour outcome of one engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourOutcome {
    pub hour_id: DateTime<Utc>,
    pub actual_price: f64,
    pub gc_per_mwh: f64,
    pub dc_per_mwh: f64,
    pub cf_price: f64,
    pub actual_quantity: f64,
    pub cf_quantity: f64,
    pub french_price: Option<f64>,
    pub actual_flow: f64,
    pub cf_flow: f64,
    pub actual_rent: RentAccount,
    pub cf_rent: RentAccount,
    pub consumer_price_actual: f64,
    pub consumer_price_cf: f64,
    pub demand_es_actual: f64,
    pub demand_es_cf: f64,
    pub demand_pt_actual: f64,
    pub demand_pt_cf: f64,
    pub affected_volume_actual: f64,
    /// Spanish rent applied against the GC bill under the mechanism.
    pub rent_allocated_actual: f64,
    pub privileged_actual: f64,
    pub privileged_cf: f64,
    pub affected_share_spain: f64,
    pub affected_share_portugal: f64,
    pub morocco_demand: f64,
    pub marginal_technology_actual: Option<Technology>,
    pub marginal_technology_cf: Option<Technology>,
}

impl HourOutcome {
    pub fn consumer_saving(&self) -> f64 {
        self.consumer_price_cf - self.consumer_price_actual
    }

    /// French price strictly below the counterfactual Iberian price.
    pub fn cf_import_direction(&self) -> bool {
        matches!(self.french_price, Some(fp) if fp < self.cf_price - coupling::PRICE_TOL)
    }
}

/// An engine's output for one hour with the clearings behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct HourRun {
    pub outcome: HourOutcome,
    pub actual: ClearingResult,
    pub cf: ClearingResult,
}

/// Inputs shared by the engines once the actual hour has been cleared.
struct ActualState<'a> {
    hour: &'a HourRecord,
    clearing: ClearingResult,
    transfers: Transfers,
    rent: RentAccount,
    rent_allocated: f64,
}

fn domestic_demand(c: &ClearingResult, country: Country) -> f64 {
    c.accepted_demand_where(|b| b.country == country && b.segment_kind != SegmentKind::ExportBlock)
}

fn affected_volume(c: &ClearingResult) -> f64 {
    c.accepted_demand_where(|b| b.affected)
}

fn actual_rent(hour: &HourRecord) -> Result<RentAccount, ScenarioError> {
    match &hour.interconnector {
        Some(ic) => Ok(coupling::congestion_rent(
            hour.actual_price,
            ic,
            ic.actual_flow,
        )?),
        None => Ok(RentAccount::default()),
    }
}

fn prepare<'a>(
    hour: &'a HourRecord,
    opts: &EngineOptions,
) -> Result<ActualState<'a>, ScenarioError> {
    hour.validate(opts.params.demand_ceiling)?;
    let clearing = hour.clear_actual()?;
    let rent = actual_rent(hour)?;
    let affected = affected_volume(&clearing);
    let transfers = if opts.recompute_gc {
        recompute_transfers(hour, &clearing, rent.rent_spain, affected, opts)?
    } else {
        Transfers::recorded(hour)
    };
    let total_gc = clearing.accepted_supply_where(|o| o.privileged) * transfers.gc_gas;
    let rent_allocated = if opts.recompute_gc {
        rent.rent_spain.min(total_gc)
    } else {
        rent.rent_spain
    };
    Ok(ActualState {
        hour,
        clearing,
        transfers,
        rent,
        rent_allocated,
    })
}

fn recompute_transfers(
    hour: &HourRecord,
    clearing: &ClearingResult,
    rent_spain: f64,
    affected: f64,
    opts: &EngineOptions,
) -> Result<Transfers, ScenarioError> {
    let date = hour.hour_id.date_naive();
    let gas = *opts
        .gas_prices
        .get(&date)
        .ok_or(ScenarioError::MissingGasPrice(date))?;
    let month = month_index(opts.mechanism_start, date);
    let reference = mechanism::gas_reference_price(month, &opts.params)?;
    let gc_gas = mechanism::generation_contribution(gas, reference, opts.params.efficiency)?;
    let gc_coal = match opts.params.coal_spread {
        Some(spread) => spread.max(0.0) / opts.params.efficiency,
        None => gc_gas,
    };
    let mut transfers = Transfers {
        gc_gas,
        gc_coal,
        dc: 0.0,
    };
    let settlement =
        mechanism::settle_hour_by(clearing, |o| transfers.gc_for(o), rent_spain, affected)?;
    transfers.dc = settlement.dc_per_mwh;
    Ok(transfers)
}

fn outcome(
    state: &ActualState<'_>,
    cf: &ClearingResult,
    cf_price: f64,
    cf_flow: f64,
    cf_rent: RentAccount,
    opts: &EngineOptions,
) -> HourOutcome {
    let hour = state.hour;
    let actual = &state.clearing;
    let mut consumer_price_cf = cf_price;
    if opts.rents_in_cf {
        let affected_cf = affected_volume(cf);
        if affected_cf > 0.0 {
            consumer_price_cf -= cf_rent.rent_spain / affected_cf;
        }
    }
    HourOutcome {
        hour_id: hour.hour_id,
        actual_price: hour.actual_price,
        gc_per_mwh: state.transfers.gc_gas,
        dc_per_mwh: state.transfers.dc,
        cf_price,
        actual_quantity: actual.quantity,
        cf_quantity: cf.quantity,
        french_price: hour.interconnector.map(|ic| ic.french_price),
        actual_flow: hour.interconnector.map_or(0.0, |ic| ic.actual_flow),
        cf_flow,
        actual_rent: state.rent,
        cf_rent,
        consumer_price_actual: hour.actual_price + state.transfers.dc,
        consumer_price_cf,
        demand_es_actual: domestic_demand(actual, Country::Spain),
        demand_es_cf: domestic_demand(cf, Country::Spain),
        demand_pt_actual: domestic_demand(actual, Country::Portugal),
        demand_pt_cf: domestic_demand(cf, Country::Portugal),
        affected_volume_actual: affected_volume(actual),
        rent_allocated_actual: state.rent_allocated,
        privileged_actual: actual.accepted_supply_where(|o| o.privileged),
        privileged_cf: cf.accepted_supply_where(|o| o.privileged),
        affected_share_spain: hour.affected_share_spain,
        affected_share_portugal: hour.affected_share_portugal,
        morocco_demand: hour.morocco_demand,
        marginal_technology_actual: actual.marginal_technology,
        marginal_technology_cf: cf.marginal_technology,
    }
}

fn ministry_from(state: ActualState<'_>, opts: &EngineOptions) -> HourRun {
    let cf_price = state.hour.actual_price + state.transfers.gc_gas;
    let mut cf = state.clearing.clone();
    cf.price = cf_price;
    for f in &mut cf.supply {
        if f.segment.privileged || f.segment.gas_indexed {
            f.segment.price += state.transfers.gc_for(&f.segment);
        }
    }
    let flow = state.hour.interconnector.map_or(0.0, |ic| ic.actual_flow);
    let outcome = outcome(&state, &cf, cf_price, flow, RentAccount::default(), opts);
    HourRun {
        outcome,
        actual: state.clearing,
        cf,
    }
}

/// Supply with GC added back and demand with DC added back. Segments for
/// which `keep_offer` / `keep_bid` return false are dropped.
fn shifted_curves(
    state: &ActualState<'_>,
    opts: &EngineOptions,
    keep_offer: impl Fn(&SupplyOffer) -> bool,
    keep_bid: impl Fn(&DemandBid) -> bool,
    extra_offers: Vec<SupplyOffer>,
    extra_bids: Vec<DemandBid>,
) -> Result<(crate::market::SupplyCurve, crate::market::DemandCurve), ScenarioError> {
    let t = state.transfers;
    let offers: Vec<SupplyOffer> = state
        .hour
        .supply_offers
        .iter()
        .filter(|o| keep_offer(o))
        .cloned()
        .chain(extra_offers)
        .collect();
    let bids: Vec<DemandBid> = state
        .hour
        .demand_bids
        .iter()
        .filter(|b| keep_bid(b))
        .cloned()
        .chain(extra_bids)
        .collect();
    let supply = shift_curve_by(&build_supply_curve(&offers)?, |o| {
        if o.capped || o.technology == Technology::ImportBlock {
            None
        } else if o.privileged {
            Some(t.gc_for(o))
        } else if o.gas_indexed || opts.blanket_hydro_shift {
            Some(t.gc_gas)
        } else {
            None
        }
    })?;
    let demand = shift_curve_by(&build_demand_curve(&bids)?, |b| b.affected.then_some(t.dc))?;
    Ok((supply, demand))
}

fn is_trade_offer(o: &SupplyOffer) -> bool {
    o.technology == Technology::ImportBlock
}

fn is_trade_bid(b: &DemandBid) -> bool {
    b.segment_kind == SegmentKind::ExportBlock
}

fn elastic_from(state: ActualState<'_>, opts: &EngineOptions) -> Result<HourRun, ScenarioError> {
    let exported = state.clearing.accepted_demand_where(is_trade_bid);
    let imported = state.clearing.accepted_supply_where(is_trade_offer);
    let held_export = (exported > 0.0).then(|| {
        DemandBid::new(
            coupling::EXPORT_BLOCK_ID,
            opts.params.demand_ceiling,
            exported,
            SegmentKind::ExportBlock,
        )
        .in_country(Country::France)
    });
    let held_import = (imported > 0.0).then(|| {
        SupplyOffer::new(
            coupling::IMPORT_BLOCK_ID,
            Technology::ImportBlock,
            0.0,
            imported,
        )
        .in_country(Country::France)
    });
    let (supply, demand) = shifted_curves(
        &state,
        opts,
        |o| !is_trade_offer(o),
        |b| !is_trade_bid(b),
        held_import.into_iter().collect(),
        held_export.into_iter().collect(),
    )?;
    let cf = clear(&supply, &demand)?;
    let (flow, rent) = match &state.hour.interconnector {
        Some(ic) => {
            // trade is held at the recorded flow; it earns rent only when it
            // still runs towards the dearer market
            let rent = coupling::congestion_rent(cf.price, ic, ic.actual_flow).unwrap_or_default();
            (ic.actual_flow, rent)
        }
        None => (0.0, RentAccount::default()),
    };
    let outcome = outcome(&state, &cf, cf.price, flow, rent, opts);
    Ok(HourRun {
        outcome,
        actual: state.clearing,
        cf,
    })
}

fn coupled_from(state: ActualState<'_>, opts: &EngineOptions) -> Result<HourRun, ScenarioError> {
    let ic = state
        .hour
        .interconnector
        .ok_or(ScenarioError::MissingInterconnector)?;
    let (export, import) = coupling::export_import_blocks(&ic);
    let (supply, demand) = shifted_curves(
        &state,
        opts,
        |o| !is_trade_offer(o),
        |b| !is_trade_bid(b),
        import.into_iter().collect(),
        export.into_iter().collect(),
    )?;
    let cf = clear(&supply, &demand)?;
    let flow = coupling::net_flow(&cf, &ic)?;
    let rent = coupling::congestion_rent(cf.price, &ic, flow)?;
    let outcome = outcome(&state, &cf, cf.price, flow, rent, opts);
    Ok(HourRun {
        outcome,
        actual: state.clearing,
        cf,
    })
}

/// Actual prices marked up by the hour's GC with demand held fixed.
pub fn ministry_cf(hour: &HourRecord, opts: &EngineOptions) -> Result<HourRun, ScenarioError> {
    let state = prepare(hour, opts).map_err(|e| e.at(hour.hour_id))?;
    Ok(ministry_from(state, opts))
}

/// Re-clears the hour without the mechanism: GC added back to subsidized and
/// gas-indexed offers, DC added back to affected bids, trade held at the
/// recorded volumes.
pub fn elastic_cf(hour: &HourRecord, opts: &EngineOptions) -> Result<HourRun, ScenarioError> {
    prepare(hour, opts)
        .and_then(|s| elastic_from(s, opts))
        .map_err(|e| e.at(hour.hour_id))
}

/// As [`elastic_cf`] with recorded trade replaced by French price-taker
/// blocks, so the flow may change size or direction.
pub fn coupled_cf(hour: &HourRecord, opts: &EngineOptions) -> Result<HourRun, ScenarioError> {
    prepare(hour, opts)
        .and_then(|s| coupled_from(s, opts))
        .map_err(|e| e.at(hour.hour_id))
}

fn run_engine(
    scenario: Scenario,
    state: ActualState<'_>,
    opts: &EngineOptions,
) -> Result<HourRun, ScenarioError> {
    match scenario {
        Scenario::Ministry => Ok(ministry_from(state, opts)),
        Scenario::Elastic => elastic_from(state, opts),
        Scenario::Coupled => coupled_from(state, opts),
    }
}

/// Horizon means of the per-hour series.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub hours: usize,
    pub mean_actual_price: f64,
    pub mean_cf_price: f64,
    pub mean_gc: f64,
    pub mean_dc: f64,
    pub mean_consumer_price_actual: f64,
    pub mean_consumer_price_cf: f64,
    pub mean_demand_es_actual: f64,
    pub mean_demand_es_cf: f64,
    pub mean_demand_pt_actual: f64,
    pub mean_demand_pt_cf: f64,
    pub mean_rent_spain_actual: f64,
    pub mean_rent_spain_cf: f64,
    pub mean_flow_actual: f64,
    pub mean_flow_cf: f64,
    pub mean_privileged_actual: f64,
    pub mean_privileged_cf: f64,
    pub mean_affected_share_spain: f64,
    pub mean_affected_share_portugal: f64,
    pub mean_morocco_demand: f64,
    /// DC reduction bought by the allocated rents, €/MWh of affected demand.
    pub dc_relief_from_rents: f64,
    /// Hours in which France is cheaper than the counterfactual Iberian price.
    pub import_hours_cf: usize,
}

impl ScenarioSummary {
    pub fn from_hours(hours: &[HourOutcome]) -> Self {
        let n = hours.len();
        if n == 0 {
            return ScenarioSummary::default();
        }
        let mean = |f: &dyn Fn(&HourOutcome) -> f64| hours.iter().map(f).sum::<f64>() / n as f64;
        let rent_allocated: f64 = hours.iter().map(|h| h.rent_allocated_actual).sum();
        let affected: f64 = hours.iter().map(|h| h.affected_volume_actual).sum();
        ScenarioSummary {
            hours: n,
            mean_actual_price: mean(&|h| h.actual_price),
            mean_cf_price: mean(&|h| h.cf_price),
            mean_gc: mean(&|h| h.gc_per_mwh),
            mean_dc: mean(&|h| h.dc_per_mwh),
            mean_consumer_price_actual: mean(&|h| h.consumer_price_actual),
            mean_consumer_price_cf: mean(&|h| h.consumer_price_cf),
            mean_demand_es_actual: mean(&|h| h.demand_es_actual),
            mean_demand_es_cf: mean(&|h| h.demand_es_cf),
            mean_demand_pt_actual: mean(&|h| h.demand_pt_actual),
            mean_demand_pt_cf: mean(&|h| h.demand_pt_cf),
            mean_rent_spain_actual: mean(&|h| h.actual_rent.rent_spain),
            mean_rent_spain_cf: mean(&|h| h.cf_rent.rent_spain),
            mean_flow_actual: mean(&|h| h.actual_flow),
            mean_flow_cf: mean(&|h| h.cf_flow),
            mean_privileged_actual: mean(&|h| h.privileged_actual),
            mean_privileged_cf: mean(&|h| h.privileged_cf),
            mean_affected_share_spain: mean(&|h| h.affected_share_spain),
            mean_affected_share_portugal: mean(&|h| h.affected_share_portugal),
            mean_morocco_demand: mean(&|h| h.morocco_demand),
            dc_relief_from_rents: if affected > 0.0 {
                rent_allocated / affected
            } else {
                0.0
            },
            import_hours_cf: hours.iter().filter(|h| h.cf_import_direction()).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    /// Per-hour outcomes sorted by hour.
    pub hours: Vec<HourOutcome>,
    pub summary: ScenarioSummary,
    /// Generator margin effects summed over the horizon.
    pub margins: MarginDecomposition,
}

/// Runs `scenario` over every hour. Hours are processed in parallel and
/// reduced in hour order, so the result does not depend on input order or
/// thread count.
pub fn run_horizon(
    hours: &[HourRecord],
    scenario: Scenario,
    opts: &EngineOptions,
) -> Result<ScenarioResult, ScenarioError> {
    if hours.is_empty() {
        return Err(ScenarioError::EmptyHorizon);
    }
    opts.params.validate()?;
    let mut sorted: Vec<&HourRecord> = hours.iter().collect();
    sorted.sort_by_key(|h| h.hour_id);
    if let Some(w) = sorted.windows(2).find(|w| w[0].hour_id == w[1].hour_id) {
        return Err(ScenarioError::DuplicateHour(w[0].hour_id));
    }

    let states: Vec<Result<ActualState<'_>, ScenarioError>> = sorted
        .par_iter()
        .map(|h| prepare(h, opts).map_err(|e| e.at(h.hour_id)))
        .collect();
    let mut states = states.into_iter().collect::<Result<Vec<_>, _>>()?;

    if opts.period_average_dc {
        let weighted: f64 = states
            .iter()
            .map(|s| s.transfers.dc * affected_volume(&s.clearing))
            .sum();
        let affected: f64 = states.iter().map(|s| affected_volume(&s.clearing)).sum();
        let pooled = if affected > 0.0 {
            weighted / affected
        } else {
            0.0
        };
        for s in &mut states {
            s.transfers.dc = pooled;
        }
    }

    let runs: Vec<Result<(HourOutcome, MarginDecomposition), ScenarioError>> = states
        .into_par_iter()
        .map(|state| {
            let hour_id = state.hour.hour_id;
            let run = run_engine(scenario, state, opts).map_err(|e| e.at(hour_id))?;
            let margins = accounting::margin_decomposition(
                &ActualHour {
                    hour_id,
                    clearing: &run.actual,
                    gc_per_mwh: run.outcome.gc_per_mwh,
                },
                &CounterfactualHour {
                    hour_id,
                    clearing: &run.cf,
                },
                &opts.params,
            )
            .map_err(|e| ScenarioError::from(e).at(hour_id))?;
            Ok((run.outcome, margins))
        })
        .collect();

    let mut outcomes = Vec::with_capacity(runs.len());
    let mut margins = MarginDecomposition::default();
    for r in runs {
        let (o, m) = r?;
        margins = margins + m;
        outcomes.push(o);
    }
    let summary = ScenarioSummary::from_hours(&outcomes);
    Ok(ScenarioResult {
        scenario,
        hours: outcomes,
        summary,
        margins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn hour_at(h: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2022, 6, 15, h, 0, 0).unwrap()
    }

    /// One hour clearing at 148.5 with GC 178.3 and DC 124.4.
    fn table_hour() -> HourRecord {
        HourRecord {
            hour_id: hour_at(0),
            supply_offers: vec![
                SupplyOffer::new("nuc", Technology::Nuclear, 5.0, 15_000.0).capped(),
                SupplyOffer::new("ccgt", Technology::Ccgt, 148.5, 20_000.0).privileged(),
            ],
            demand_bids: vec![
                DemandBid::new("es", 3000.0, 26_022.0, SegmentKind::DomesticInelastic).affected(),
                DemandBid::new("pt", 3000.0, 5_376.0, SegmentKind::DomesticInelastic)
                    .in_country(Country::Portugal),
            ],
            gc_per_mwh: 178.3,
            dc_per_mwh: 124.4,
            actual_price: 148.5,
            interconnector: None,
            affected_share_spain: 0.59,
            affected_share_portugal: 0.35,
            morocco_demand: 278.0,
        }
    }

    #[test]
    fn ministry_marks_up_by_gc() {
        let run = ministry_cf(&table_hour(), &EngineOptions::default()).unwrap();
        let o = &run.outcome;
        assert!((o.cf_price - 326.8).abs() < 1e-9);
        assert!((o.consumer_saving() - 53.9).abs() < 1e-9);
        assert_eq!(o.cf_quantity, o.actual_quantity);
        assert_eq!(o.demand_es_cf, 26_022.0);
    }

    #[test]
    fn ministry_without_mechanism_is_identity() {
        let mut h = table_hour();
        h.gc_per_mwh = 0.0;
        h.dc_per_mwh = 0.0;
        let o = ministry_cf(&h, &EngineOptions::default()).unwrap().outcome;
        assert_eq!(o.cf_price, h.actual_price);
        assert_eq!(o.consumer_saving(), 0.0);
        h.gc_per_mwh = 50.0;
        h.dc_per_mwh = 50.0;
        let o = ministry_cf(&h, &EngineOptions::default()).unwrap().outcome;
        assert_eq!(o.consumer_saving(), 0.0);
    }

    #[test]
    fn elastic_with_vertical_demand_matches_ministry() {
        let h = table_hour();
        let opts = EngineOptions::default();
        let m = ministry_cf(&h, &opts).unwrap().outcome;
        let e = elastic_cf(&h, &opts).unwrap().outcome;
        assert!((m.cf_price - e.cf_price).abs() < 1e-6);
        assert_eq!(e.cf_quantity, m.cf_quantity);
    }

    #[test]
    fn elastic_bid_priced_out_lowers_volume() {
        let mut h = table_hour();
        // elastic industrial demand willing to pay 250, below the 326.8 counterfactual cost
        h.demand_bids.push(DemandBid::new(
            "ind",
            250.0,
            2_000.0,
            SegmentKind::DomesticElastic,
        ));
        h.dc_per_mwh = 50.0;
        let opts = EngineOptions::default();
        let actual = h.clear_actual().unwrap();
        assert_eq!(actual.price, 148.5);
        let e = elastic_cf(&h, &opts).unwrap().outcome;
        assert!(e.cf_quantity < e.actual_quantity);
        assert_eq!(e.cf_quantity, e.actual_quantity - 2_000.0);
    }

    #[test]
    fn coupled_requires_interconnector() {
        let err = coupled_cf(&table_hour(), &EngineOptions::default()).unwrap_err();
        assert_eq!(err.root(), &ScenarioError::MissingInterconnector);
        assert!(matches!(err, ScenarioError::AtHour { .. }));
    }

    #[test]
    fn coupled_exports_at_capacity_and_earns_rent() {
        let mut h = table_hour();
        h.gc_per_mwh = 0.0;
        h.dc_per_mwh = 0.0;
        h.interconnector = Some(InterconnectorHour {
            ntc_export: 500.0,
            ntc_import: 500.0,
            french_price: 400.0,
            actual_flow: 0.0,
        });
        let o = coupled_cf(&h, &EngineOptions::default()).unwrap().outcome;
        assert_eq!(o.cf_flow, 500.0);
        assert_eq!(o.cf_rent.rent_total, (400.0 - o.cf_price) * 500.0);
        assert!(!o.cf_import_direction());
    }

    #[test]
    fn month_index_counts_calendar_months() {
        let start = NaiveDate::from_ymd_opt(2022, 6, 15).unwrap();
        let d = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).unwrap();
        assert_eq!(month_index(start, d(2022, 6, 15)), 1);
        assert_eq!(month_index(start, d(2022, 7, 14)), 1);
        assert_eq!(month_index(start, d(2022, 7, 15)), 2);
        assert_eq!(month_index(start, d(2023, 1, 15)), 8);
    }

    #[test]
    fn recompute_gc_uses_gas_price() {
        let h = table_hour();
        let mut opts = EngineOptions {
            recompute_gc: true,
            ..EngineOptions::default()
        };
        assert!(matches!(
            ministry_cf(&h, &opts).unwrap_err().root(),
            ScenarioError::MissingGasPrice(_)
        ));
        opts.gas_prices.insert(h.hour_id.date_naive(), 100.0);
        let o = ministry_cf(&h, &opts).unwrap().outcome;
        let gc = (100.0 - 40.0) / 0.55;
        assert!((o.gc_per_mwh - gc).abs() < 1e-9);
        // 16_398 MWh privileged dispatch levied on 26_022 affected MWh
        let privileged = 26_022.0 + 5_376.0 - 15_000.0;
        assert!((o.dc_per_mwh - gc * privileged / 26_022.0).abs() < 1e-9);
    }

    #[test]
    fn horizon_is_order_invariant_and_rejects_duplicates() {
        let mut hours: Vec<HourRecord> = (0..5)
            .map(|i| {
                let mut h = table_hour();
                h.hour_id = hour_at(i);
                h.gc_per_mwh = 100.0 + i as f64;
                h
            })
            .collect();
        let opts = EngineOptions::default();
        let a = run_horizon(&hours, Scenario::Elastic, &opts).unwrap();
        hours.reverse();
        let b = run_horizon(&hours, Scenario::Elastic, &opts).unwrap();
        assert_eq!(a, b);
        hours.push(hours[0].clone());
        assert!(matches!(
            run_horizon(&hours, Scenario::Elastic, &opts),
            Err(ScenarioError::DuplicateHour(_))
        ));
        assert_eq!(
            run_horizon(&[], Scenario::Ministry, &opts),
            Err(ScenarioError::EmptyHorizon)
        );
    }

    #[test]
    fn period_average_dc_pools_hours() {
        let mut a = table_hour();
        a.dc_per_mwh = 100.0;
        let mut b = table_hour();
        b.hour_id = hour_at(1);
        b.dc_per_mwh = 200.0;
        let opts = EngineOptions {
            period_average_dc: true,
            ..EngineOptions::default()
        };
        let r = run_horizon(&[a, b], Scenario::Ministry, &opts).unwrap();
        assert!(r.hours.iter().all(|h| (h.dc_per_mwh - 150.0).abs() < 1e-9));
    }

    #[test]
    fn scenario_names_parse() {
        for s in Scenario::ALL {
            assert_eq!(s.as_str().parse::<Scenario>().unwrap(), s);
        }
        assert!("baseline".parse::<Scenario>().is_err());
    }
}
