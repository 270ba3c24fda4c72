//! Gas reference schedule, generation contribution (GC), demand contribution
//! (DC) and the inframarginal revenue cap.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{ClearingResult, SupplyOffer, Technology, DEFAULT_DEMAND_CEILING, QTY_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanismError {
    #[error("month index must be >= 1, got {0}")]
    InvalidMonth(i64),
    #[error("invalid mechanism parameters: {0}")]
    InvalidParams(String),
    #[error("affected volume must be positive to levy {0:.2} EUR")]
    NoAffectedDemand(f64),
    #[error("affected volume {affected:.3} MWh exceeds cleared quantity {cleared:.3} MWh")]
    InconsistentVolumes { affected: f64, cleared: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanismParams {
    /// Gas reference price for the flat months, €/MWh.
    pub ref_price_start: f64,
    /// Monthly increase after the flat months, €/MWh.
    pub ref_price_step: f64,
    pub ref_price_cap: f64,
    pub flat_months: u32,
    /// MWh of electricity per MWh of gas.
    pub efficiency: f64,
    /// Inframarginal cap level, €/MWh.
    pub infra_cap: f64,
    /// Share of capped output that receives at most `infra_cap`.
    pub cap_fraction: f64,
    /// Price at which inelastic demand is bid, €/MWh.
    pub demand_ceiling: f64,
    /// Fuel-cost spread used for coal units when recomputing GC; when unset
    /// coal receives the gas-derived GC.
    pub coal_spread: Option<f64>,
}

impl Default for MechanismParams {
    fn default() -> Self {
        MechanismParams {
            ref_price_start: 40.0,
            ref_price_step: 5.0,
            ref_price_cap: 70.0,
            flat_months: 6,
            efficiency: 0.55,
            infra_cap: 67.0,
            cap_fraction: 0.9,
            demand_ceiling: DEFAULT_DEMAND_CEILING,
            coal_spread: None,
        }
    }
}

impl MechanismParams {
    pub fn validate(&self) -> Result<(), MechanismError> {
        let bad = |m: String| Err(MechanismError::InvalidParams(m));
        let all_finite = [
            self.ref_price_start,
            self.ref_price_step,
            self.ref_price_cap,
            self.efficiency,
            self.infra_cap,
            self.cap_fraction,
            self.demand_ceiling,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return bad("all parameters must be finite".into());
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return bad(format!("efficiency {} must be in (0, 1]", self.efficiency));
        }
        if !(0.0..=1.0).contains(&self.cap_fraction) {
            return bad(format!(
                "cap_fraction {} must be in [0, 1]",
                self.cap_fraction
            ));
        }
        if self.ref_price_start > self.ref_price_cap {
            return bad(format!(
                "ref_price_start {} exceeds ref_price_cap {}",
                self.ref_price_start, self.ref_price_cap
            ));
        }
        if self.ref_price_step < 0.0 {
            return bad("ref_price_step must be >= 0".into());
        }
        if self.infra_cap < 0.0 || self.demand_ceiling <= 0.0 {
            return bad("infra_cap must be >= 0 and demand_ceiling > 0".into());
        }
        if matches!(self.coal_spread, Some(s) if !s.is_finite()) {
            return bad("coal_spread must be finite".into());
        }
        Ok(())
    }
}

/// Gas reference price for a 1-based month since the mechanism started.
pub fn gas_reference_price(
    month_index: i64,
    params: &MechanismParams,
) -> Result<f64, MechanismError> {
    if month_index < 1 {
        return Err(MechanismError::InvalidMonth(month_index));
    }
    let ramp_months = (month_index - i64::from(params.flat_months)).max(0) as f64;
    Ok((params.ref_price_start + params.ref_price_step * ramp_months).min(params.ref_price_cap))
}

/// Subsidy per MWh of electricity: the gas price excess over the reference,
/// converted at `efficiency`. Never negative.
pub fn generation_contribution(
    gas_price: f64,
    ref_price: f64,
    efficiency: f64,
) -> Result<f64, MechanismError> {
    if !efficiency.is_finite() || efficiency <= 0.0 {
        return Err(MechanismError::InvalidParams(format!(
            "efficiency {efficiency} must be > 0"
        )));
    }
    if !gas_price.is_finite() || gas_price < 0.0 || !ref_price.is_finite() {
        return Err(MechanismError::InvalidParams(format!(
            "gas price {gas_price} and reference {ref_price} must be finite, gas >= 0"
        )));
    }
    Ok((gas_price - ref_price).max(0.0) / efficiency)
}

/// Levy per affected MWh once congestion rents have been netted off.
pub fn demand_contribution(
    total_gc: f64,
    rent_allocated: f64,
    affected_volume: f64,
) -> Result<f64, MechanismError> {
    let net = (total_gc - rent_allocated.max(0.0)).max(0.0);
    if affected_volume <= 0.0 {
        if net == 0.0 {
            return Ok(0.0);
        }
        return Err(MechanismError::NoAffectedDemand(net));
    }
    Ok(net / affected_volume)
}

/// Revenue per MWh kept by a capped inframarginal unit at `market_price`.
pub fn capped_revenue(market_price: f64, params: &MechanismParams) -> f64 {
    if market_price <= params.infra_cap {
        market_price
    } else {
        params.infra_cap + (1.0 - params.cap_fraction) * (market_price - params.infra_cap)
    }
}

/// Revenue per MWh of capped output that the cap returns to the system.
pub fn system_income_from_cap(market_price: f64, params: &MechanismParams) -> f64 {
    (params.cap_fraction * (market_price - params.infra_cap)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourSettlement {
    pub gc_per_mwh: f64,
    /// Accepted MWh of privileged offers.
    pub privileged_volume: f64,
    pub total_gc: f64,
    /// Congestion rent applied against the GC bill, never more than `total_gc`.
    pub rent_allocated: f64,
    /// Rent offered to the settlement but not needed this hour.
    pub rent_unused: f64,
    pub affected_volume: f64,
    pub dc_per_mwh: f64,
}

impl HourSettlement {
    /// `dc * affected + rent - total_gc`, relative to `total_gc`.
    pub fn budget_residual(&self) -> f64 {
        let lhs = self.dc_per_mwh * self.affected_volume + self.rent_allocated;
        (lhs - self.total_gc).abs() / self.total_gc.abs().max(1.0)
    }
}

/// Settles one hour: the GC bill on dispatched privileged output is funded by
/// the allocated rent first and the rest is levied on affected demand.
pub fn settle_hour(
    clearing: &ClearingResult,
    gc_per_mwh: f64,
    rent_available: f64,
    affected_volume: f64,
) -> Result<HourSettlement, MechanismError> {
    settle_hour_by(clearing, |_| gc_per_mwh, rent_available, affected_volume)
}

/// [`settle_hour`] with a per-offer GC rate (e.g. coal on its own spread).
/// The reported `gc_per_mwh` is the volume-weighted rate.
pub fn settle_hour_by(
    clearing: &ClearingResult,
    gc_for: impl Fn(&SupplyOffer) -> f64,
    rent_available: f64,
    affected_volume: f64,
) -> Result<HourSettlement, MechanismError> {
    if rent_available.is_nan()
        || rent_available < 0.0
        || affected_volume.is_nan()
        || affected_volume < 0.0
    {
        return Err(MechanismError::InvalidParams(
            "rent and affected volume must be >= 0".into(),
        ));
    }
    if affected_volume > clearing.quantity + QTY_TOL {
        return Err(MechanismError::InconsistentVolumes {
            affected: affected_volume,
            cleared: clearing.quantity,
        });
    }
    let mut privileged_volume = 0.0;
    let mut total_gc = 0.0;
    let mut first_rate = None;
    for f in clearing.supply.iter().filter(|f| f.segment.privileged) {
        let gc = gc_for(&f.segment);
        if !gc.is_finite() || gc < 0.0 {
            return Err(MechanismError::InvalidParams(format!(
                "gc {gc} must be finite and >= 0"
            )));
        }
        first_rate.get_or_insert(gc);
        privileged_volume += f.accepted;
        total_gc += gc * f.accepted;
    }
    let gc_per_mwh = if privileged_volume > 0.0 {
        total_gc / privileged_volume
    } else {
        first_rate.unwrap_or_else(|| gc_for_empty(&gc_for))
    };
    let rent_allocated = rent_available.min(total_gc);
    let dc_per_mwh = demand_contribution(total_gc, rent_allocated, affected_volume)?;
    Ok(HourSettlement {
        gc_per_mwh,
        privileged_volume,
        total_gc,
        rent_allocated,
        rent_unused: rent_available - rent_allocated,
        affected_volume,
        dc_per_mwh,
    })
}

// rate reported for hours with no privileged offers at all
fn gc_for_empty(gc_for: &impl Fn(&SupplyOffer) -> f64) -> f64 {
    gc_for(&SupplyOffer::new("", Technology::Ccgt, 0.0, 1.0).privileged())
}

/// A single DC for a whole period: total GC net of rents over total affected
/// volume.
pub fn period_demand_contribution(settlements: &[HourSettlement]) -> Result<f64, MechanismError> {
    let total_gc: f64 = settlements.iter().map(|s| s.total_gc).sum();
    let rent: f64 = settlements.iter().map(|s| s.rent_allocated).sum();
    let affected: f64 = settlements.iter().map(|s| s.affected_volume).sum();
    demand_contribution(total_gc, rent, affected)
}
