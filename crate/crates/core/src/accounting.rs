//! Consumer impact, rent funding, generator margins, emissions and gas.

use std::collections::BTreeMap;
use std::ops::Add;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::counterfactual::{Scenario, ScenarioResult};
use crate::coupling::RentAccount;
use crate::market::ClearingResult;
use crate::mechanism::{capped_revenue, system_income_from_cap, MechanismParams};
use crate::money::Money;

pub const CO2_T_PER_MWH: f64 = 0.38;
pub const GAS_EFFICIENCY: f64 = 0.55;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccountingError {
    #[error("actual hour {actual} does not match counterfactual hour {cf}")]
    HourMismatch {
        actual: DateTime<Utc>,
        cf: DateTime<Utc>,
    },
    #[error("series lengths differ: {actual} actual vs {cf} counterfactual")]
    LengthMismatch { actual: usize, cf: usize },
    #[error("efficiency must be > 0, got {0}")]
    InvalidEfficiency(f64),
}

/// Cost to consumers over `hours`: demand × affected share × €/MWh × hours.
/// Positive means the mechanism raised their bill.
pub fn consumer_impact(avg_demand: f64, affected_share: f64, delta_cost: f64, hours: u32) -> Money {
    Money::from_euros(avg_demand * affected_share * delta_cost * f64::from(hours))
}

/// DC reduction paid for by congestion rents over `hours`.
pub fn rent_funding_effect(
    avg_demand: f64,
    affected_share: f64,
    dc_relief: f64,
    hours: u32,
) -> Money {
    Money::from_euros(avg_demand * affected_share * dc_relief * f64::from(hours))
}

/// Generator-side effects of the mechanism for one hour or summed over many,
/// all in €.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MarginDecomposition {
    /// Extra compensation to privileged units that run in both worlds.
    pub incumbent_privileged_gain: f64,
    /// Revenue of privileged output that only runs under the mechanism.
    pub new_generation_revenue: f64,
    /// Lower bound on the margin of that output, against its own offer.
    pub new_generation_min_margin: f64,
    /// Revenue capped units lose relative to the counterfactual.
    pub inframarginal_merchant_loss: f64,
    /// Cap income the system forgoes relative to the counterfactual.
    pub system_income_loss: f64,
}

impl Add for MarginDecomposition {
    type Output = MarginDecomposition;

    fn add(self, o: MarginDecomposition) -> MarginDecomposition {
        MarginDecomposition {
            incumbent_privileged_gain: self.incumbent_privileged_gain + o.incumbent_privileged_gain,
            new_generation_revenue: self.new_generation_revenue + o.new_generation_revenue,
            new_generation_min_margin: self.new_generation_min_margin + o.new_generation_min_margin,
            inframarginal_merchant_loss: self.inframarginal_merchant_loss
                + o.inframarginal_merchant_loss,
            system_income_loss: self.system_income_loss + o.system_income_loss,
        }
    }
}

pub struct ActualHour<'a> {
    pub hour_id: DateTime<Utc>,
    pub clearing: &'a ClearingResult,
    pub gc_per_mwh: f64,
}

pub struct CounterfactualHour<'a> {
    pub hour_id: DateTime<Utc>,
    pub clearing: &'a ClearingResult,
}

/// Privileged segments are paired across the two clearings by unit id and
/// the segment's position among that unit's privileged segments.
pub fn margin_decomposition(
    actual: &ActualHour<'_>,
    cf: &CounterfactualHour<'_>,
    params: &MechanismParams,
) -> Result<MarginDecomposition, AccountingError> {
    if actual.hour_id != cf.hour_id {
        return Err(AccountingError::HourMismatch {
            actual: actual.hour_id,
            cf: cf.hour_id,
        });
    }
    let p_actual = actual.clearing.price;
    let p_cf = cf.clearing.price;
    let paid = p_actual + actual.gc_per_mwh;

    let mut cf_fills: BTreeMap<(&str, usize), (f64, f64)> = BTreeMap::new();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for f in cf.clearing.supply.iter().filter(|f| f.segment.privileged) {
        let n = seen.entry(&f.segment.unit_id).or_insert(0);
        cf_fills.insert((&f.segment.unit_id, *n), (f.accepted, f.segment.price));
        *n += 1;
    }

    let mut m = MarginDecomposition::default();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for f in actual
        .clearing
        .supply
        .iter()
        .filter(|f| f.segment.privileged)
    {
        let n = seen.entry(&f.segment.unit_id).or_insert(0);
        let (cf_accepted, cf_offer) = cf_fills
            .get(&(f.segment.unit_id.as_str(), *n))
            .copied()
            .unwrap_or((0.0, f.segment.price));
        *n += 1;
        let both = f.accepted.min(cf_accepted);
        let only_actual = (f.accepted - cf_accepted).max(0.0);
        m.incumbent_privileged_gain += (paid - p_cf) * both;
        m.new_generation_revenue += paid * only_actual;
        m.new_generation_min_margin += (paid - cf_offer) * only_actual;
    }

    let capped = actual.clearing.accepted_supply_where(|o| o.capped);
    m.inframarginal_merchant_loss =
        (capped_revenue(p_cf, params) - capped_revenue(p_actual, params)) * capped;
    m.system_income_loss =
        (system_income_from_cap(p_cf, params) - system_income_from_cap(p_actual, params)) * capped;
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionsGas {
    pub co2_t: f64,
    pub gas_mwh: f64,
}

/// CO2 and gas burned by `delta_fossil_gen` MWh of fossil output.
pub fn emissions_and_gas(
    delta_fossil_gen: f64,
    co2_factor: f64,
    efficiency: f64,
) -> Result<EmissionsGas, AccountingError> {
    if efficiency.is_nan() || efficiency <= 0.0 {
        return Err(AccountingError::InvalidEfficiency(efficiency));
    }
    Ok(EmissionsGas {
        co2_t: delta_fossil_gen * co2_factor,
        gas_mwh: delta_fossil_gen / efficiency,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RentTotals {
    pub actual: Money,
    pub cf: Money,
    /// `actual - cf`
    pub delta: Money,
}

impl RentTotals {
    /// Totals from mean hourly rents.
    pub fn from_means(mean_actual: f64, mean_cf: f64, hours: u32) -> Self {
        let actual = Money::from_euros(mean_actual * f64::from(hours));
        let cf = Money::from_euros(mean_cf * f64::from(hours));
        RentTotals {
            actual,
            cf,
            delta: actual - cf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RentSummary {
    pub total: RentTotals,
    pub spain: RentTotals,
    pub france: RentTotals,
}

/// Rent totals over `hours` from hourly actual and counterfactual rents.
pub fn rent_summary(
    actual: &[RentAccount],
    cf: &[RentAccount],
    hours: u32,
) -> Result<RentSummary, AccountingError> {
    if actual.len() != cf.len() {
        return Err(AccountingError::LengthMismatch {
            actual: actual.len(),
            cf: cf.len(),
        });
    }
    let mean = |v: &[RentAccount], f: fn(&RentAccount) -> f64| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().map(f).sum::<f64>() / v.len() as f64
        }
    };
    let totals =
        |f: fn(&RentAccount) -> f64| RentTotals::from_means(mean(actual, f), mean(cf, f), hours);
    Ok(RentSummary {
        total: totals(|r| r.rent_total),
        spain: totals(|r| r.rent_spain),
        france: totals(|r| r.rent_france),
    })
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRow {
    pub label: String,
    pub unit: String,
    pub actual: f64,
    pub counterfactual: f64,
    /// `counterfactual - actual`
    pub delta: f64,
    /// Delta as a percentage of the actual value.
    pub pct_delta: Option<f64>,
}

impl ImpactRow {
    fn new(label: &str, unit: &str, actual: f64, counterfactual: f64) -> Self {
        let delta = counterfactual - actual;
        ImpactRow {
            label: label.to_string(),
            unit: unit.to_string(),
            actual,
            counterfactual,
            delta,
            pct_delta: (actual != 0.0).then(|| 100.0 * delta / actual),
        }
    }
}

/// Mean saving per MWh times mean Spanish demand, per hour and over the
/// horizon, with and without the affected-share weighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadlineProduct {
    pub saving_per_mwh: f64,
    pub demand_mwh: f64,
    pub per_hour: Money,
    pub horizon: Money,
    pub per_hour_affected: Money,
    pub horizon_affected: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub scenario: Scenario,
    pub hours: u32,
    pub rows: Vec<ImpactRow>,
    /// Mean consumer price with the mechanism minus without, €/MWh.
    /// Positive means the mechanism cost consumers money.
    pub consumer_cost_per_mwh: f64,
    pub consumer_delta_spain: Money,
    pub consumer_delta_portugal: Money,
    pub rent_funding_spain: Money,
    pub rent_funding_portugal: Money,
    pub rent_funding_morocco: Money,
    /// Mean hourly privileged output, actual minus counterfactual, MWh/h.
    pub delta_fossil_gen: f64,
    pub co2_delta_t: f64,
    pub gas_delta_mwh: f64,
    pub rents: RentSummary,
    pub headline: HeadlineProduct,
    pub margins: MarginDecomposition,
    pub notes: Vec<String>,
}

impl ImpactReport {
    pub fn build(result: &ScenarioResult) -> Result<ImpactReport, AccountingError> {
        let s = &result.summary;
        let hours = u32::try_from(s.hours).unwrap_or(u32::MAX);
        let consumer_cost = s.mean_consumer_price_actual - s.mean_consumer_price_cf;
        let rows = vec![
            ImpactRow::new(
                "wholesale price",
                "EUR/MWh",
                s.mean_actual_price,
                s.mean_cf_price,
            ),
            ImpactRow::new("demand contribution", "EUR/MWh", s.mean_dc, 0.0),
            ImpactRow::new(
                "consumer price",
                "EUR/MWh",
                s.mean_consumer_price_actual,
                s.mean_consumer_price_cf,
            ),
            ImpactRow::new(
                "spanish demand",
                "MWh/h",
                s.mean_demand_es_actual,
                s.mean_demand_es_cf,
            ),
            ImpactRow::new(
                "portuguese demand",
                "MWh/h",
                s.mean_demand_pt_actual,
                s.mean_demand_pt_cf,
            ),
            ImpactRow::new(
                "spanish congestion rent",
                "MEUR/h",
                s.mean_rent_spain_actual / 1e6,
                s.mean_rent_spain_cf / 1e6,
            ),
            ImpactRow::new(
                "net export flow",
                "MWh/h",
                s.mean_flow_actual,
                s.mean_flow_cf,
            ),
        ];

        let delta_fossil_gen = s.mean_privileged_actual - s.mean_privileged_cf;
        let eg = emissions_and_gas(delta_fossil_gen, CO2_T_PER_MWH, GAS_EFFICIENCY)?;
        let actual_rents: Vec<RentAccount> = result.hours.iter().map(|h| h.actual_rent).collect();
        let cf_rents: Vec<RentAccount> = result.hours.iter().map(|h| h.cf_rent).collect();
        let rents = rent_summary(&actual_rents, &cf_rents, hours)?;

        let saving = s.mean_consumer_price_cf - s.mean_consumer_price_actual;
        let demand = s.mean_demand_es_actual;
        let share = s.mean_affected_share_spain;
        let headline = HeadlineProduct {
            saving_per_mwh: saving,
            demand_mwh: demand,
            per_hour: Money::from_euros(saving * demand),
            horizon: Money::from_euros(saving * demand * f64::from(hours)),
            per_hour_affected: Money::from_euros(saving * demand * share),
            horizon_affected: Money::from_euros(saving * demand * share * f64::from(hours)),
        };

        let notes = vec![
            format!(
                "headline product: {saving:.1} EUR/MWh x {demand:.0} MWh = {} per hour; over {hours} h it is {:.3} MEUR, \
                 or {:.3} MEUR when weighted by the {:.0}% affected share. The reference figure of 1,402,586 is a per-hour \
                 amount while the matching reference total of about 1,400 MEUR spans the whole horizon.",
                headline.per_hour,
                headline.horizon.millions(),
                headline.horizon_affected.millions(),
                100.0 * share,
            ),
            format!(
                "emissions and gas: fossil output change {delta_fossil_gen:.1} MWh/h gives {:.1} tCO2/h and {:.1} MWh/h of gas \
                 at {CO2_T_PER_MWH} t/MWh and {GAS_EFFICIENCY} efficiency. The reference figures of 2.73 GWh/h extra demand, \
                 6.5 TWh of gas and 577 tCO2/h cannot all hold at these factors: 577 tCO2/h implies 1518.4 MWh/h of fossil \
                 output and 6.63 TWh of gas over 2400 h.",
                eg.co2_t, eg.gas_mwh,
            ),
            format!(
                "consumer sign: {:.3} EUR/MWh is the mechanism's cost to consumers (positive = cost); the saving from the \
                 mechanism is {:.3} EUR/MWh.",
                consumer_cost, -consumer_cost
            ),
        ];

        Ok(ImpactReport {
            scenario: result.scenario,
            hours,
            rows,
            consumer_cost_per_mwh: consumer_cost,
            consumer_delta_spain: consumer_impact(
                s.mean_demand_es_actual,
                s.mean_affected_share_spain,
                consumer_cost,
                hours,
            ),
            consumer_delta_portugal: consumer_impact(
                s.mean_demand_pt_actual,
                s.mean_affected_share_portugal,
                consumer_cost,
                hours,
            ),
            rent_funding_spain: rent_funding_effect(
                s.mean_demand_es_actual,
                s.mean_affected_share_spain,
                s.dc_relief_from_rents,
                hours,
            ),
            rent_funding_portugal: rent_funding_effect(
                s.mean_demand_pt_actual,
                s.mean_affected_share_portugal,
                s.dc_relief_from_rents,
                hours,
            ),
            rent_funding_morocco: rent_funding_effect(
                s.mean_morocco_demand,
                1.0,
                s.dc_relief_from_rents,
                hours,
            ),
            delta_fossil_gen,
            co2_delta_t: eg.co2_t * f64::from(hours),
            gas_delta_mwh: eg.gas_mwh * f64::from(hours),
            rents,
            headline,
            margins: result.margins,
            notes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{
        build_demand_curve, build_supply_curve, clear, DemandBid, SegmentKind, SupplyOffer,
        Technology,
    };
    use chrono::TimeZone;

    #[test]
    fn consumer_impact_products() {
        assert!((consumer_impact(26_022.0, 0.59, 7.3, 2400).millions() - 268.984).abs() < 1e-3);
        assert!((consumer_impact(5_376.0, 0.35, 7.3, 2400).millions() - 32.966).abs() < 1e-3);
        assert_eq!(consumer_impact(26_022.0, 0.59, 0.0, 2400), Money::ZERO);
        assert!(consumer_impact(100.0, 1.0, -1.0, 10) < Money::ZERO);
    }

    #[test]
    fn rent_funding_products() {
        assert_eq!(
            rent_funding_effect(278.0, 1.0, 17.0, 2400),
            Money::from_euros(11_342_400.0)
        );
        assert_eq!(
            rent_funding_effect(5_376.0, 0.35, 17.0, 2400),
            Money::from_euros(76_769_280.0)
        );
        assert_eq!(rent_funding_effect(5_376.0, 0.35, 0.0, 2400), Money::ZERO);
    }

    #[test]
    fn products_are_multilinear() {
        let base = consumer_impact(1000.0, 0.5, 3.0, 100);
        assert_eq!(
            consumer_impact(2000.0, 0.5, 3.0, 100).cents(),
            2 * base.cents()
        );
        assert_eq!(
            consumer_impact(1000.0, 0.5, 3.0, 200).cents(),
            2 * base.cents()
        );
    }

    fn hour(h: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2022, 7, 1, h, 0, 0).unwrap()
    }

    fn clearing(capped_mwh: f64, price: f64) -> ClearingResult {
        let s = build_supply_curve(&[
            SupplyOffer::new("hydro", Technology::HydroReservoir, 10.0, capped_mwh).capped(),
            SupplyOffer::new("ccgt", Technology::Ccgt, price, 100.0).privileged(),
        ])
        .unwrap();
        let d = build_demand_curve(&[DemandBid::new(
            "d",
            3000.0,
            capped_mwh + 50.0,
            SegmentKind::DomesticInelastic,
        )])
        .unwrap();
        clear(&s, &d).unwrap()
    }

    #[test]
    fn cap_losses_per_capped_mwh() {
        let actual = clearing(1.0, 150.0);
        let cf = clearing(1.0, 200.0);
        let m = margin_decomposition(
            &ActualHour {
                hour_id: hour(0),
                clearing: &actual,
                gc_per_mwh: 50.0,
            },
            &CounterfactualHour {
                hour_id: hour(0),
                clearing: &cf,
            },
            &MechanismParams::default(),
        )
        .unwrap();
        assert!((m.inframarginal_merchant_loss - 5.0).abs() < 1e-9);
        assert!((m.system_income_loss - 45.0).abs() < 1e-9);
        assert_eq!(m.incumbent_privileged_gain, 0.0);
        assert_eq!(m.new_generation_revenue, 0.0);
    }

    #[test]
    fn new_generation_is_only_dispatched_under_the_mechanism() {
        let actual = clearing(0.5, 150.0);
        // counterfactual dispatch with half the gas output
        let mut cf = actual.clone();
        cf.price = 190.0;
        cf.supply[1].accepted = 25.0;
        cf.supply[1].segment.price = 190.0;
        let m = margin_decomposition(
            &ActualHour {
                hour_id: hour(1),
                clearing: &actual,
                gc_per_mwh: 50.0,
            },
            &CounterfactualHour {
                hour_id: hour(1),
                clearing: &cf,
            },
            &MechanismParams::default(),
        )
        .unwrap();
        assert!((m.incumbent_privileged_gain - 10.0 * 25.0).abs() < 1e-9);
        assert!((m.new_generation_revenue - 200.0 * 25.0).abs() < 1e-9);
        assert!((m.new_generation_min_margin - 10.0 * 25.0).abs() < 1e-9);
    }

    #[test]
    fn mismatched_hours_are_rejected() {
        let c = clearing(1.0, 100.0);
        let err = margin_decomposition(
            &ActualHour {
                hour_id: hour(0),
                clearing: &c,
                gc_per_mwh: 0.0,
            },
            &CounterfactualHour {
                hour_id: hour(1),
                clearing: &c,
            },
            &MechanismParams::default(),
        );
        assert!(matches!(err, Err(AccountingError::HourMismatch { .. })));
    }

    #[test]
    fn emissions_and_gas_are_linear() {
        let e = emissions_and_gas(1_518.4, CO2_T_PER_MWH, GAS_EFFICIENCY).unwrap();
        assert!((e.co2_t - 577.0).abs() < 0.01);
        assert_eq!(e.gas_mwh * GAS_EFFICIENCY, 1_518.4);
        assert_eq!(
            emissions_and_gas(0.0, CO2_T_PER_MWH, GAS_EFFICIENCY).unwrap(),
            EmissionsGas {
                co2_t: 0.0,
                gas_mwh: 0.0
            }
        );
        assert!(emissions_and_gas(1.0, CO2_T_PER_MWH, 0.0).is_err());
    }

    #[test]
    fn rent_totals() {
        let t = RentTotals::from_means(251_000.0, 64_000.0, 2400);
        assert_eq!(t.actual.millions(), 602.4);
        assert_eq!(t.cf.millions(), 153.6);
        assert_eq!(t.delta.millions(), 448.8);
        let same = vec![RentAccount::split(10.0); 3];
        let s = rent_summary(&same, &same, 3).unwrap();
        assert_eq!(s.total.delta, Money::ZERO);
        assert!(rent_summary(&same, &same[..1], 3).is_err());
    }
}
