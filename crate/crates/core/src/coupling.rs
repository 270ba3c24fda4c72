//! Spain–France interconnector as a price-taker against the recorded French
//! price, and the congestion rent it earns.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{
    ClearingResult, Country, DemandBid, SegmentKind, SupplyOffer, Technology, QTY_TOL,
};

/// Prices closer than this are treated as coupled, €/MWh.
pub const PRICE_TOL: f64 = 0.01;

pub const EXPORT_BLOCK_ID: &str = "FR-EXPORT";
pub const IMPORT_BLOCK_ID: &str = "FR-IMPORT";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("invalid interconnector hour: {0}")]
    InvalidHour(String),
    #[error("flow of {flow:.3} MWh runs against the price spread (Iberia {iberian_price:.2}, France {french_price:.2})")]
    DirectionMismatch {
        flow: f64,
        iberian_price: f64,
        french_price: f64,
    },
    #[error("flow of {flow:.3} MWh exceeds the {limit:.3} MWh capacity in its direction")]
    OverCapacity { flow: f64, limit: f64 },
    #[error("export and import blocks were both fully accepted")]
    InternalInconsistency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterconnectorHour {
    /// Iberia→France capacity, MWh.
    pub ntc_export: f64,
    /// France→Iberia capacity, MWh.
    pub ntc_import: f64,
    pub french_price: f64,
    /// Recorded flow, positive for exports.
    pub actual_flow: f64,
}

impl InterconnectorHour {
    pub fn validate(&self) -> Result<(), CouplingError> {
        let bad = |m: String| Err(CouplingError::InvalidHour(m));
        if !(self.ntc_export >= 0.0 && self.ntc_import >= 0.0) {
            return bad(format!(
                "capacities {} / {} must be >= 0",
                self.ntc_export, self.ntc_import
            ));
        }
        if !self.french_price.is_finite() || self.french_price < 0.0 {
            return bad(format!(
                "french price {} must be finite and >= 0",
                self.french_price
            ));
        }
        if !self.actual_flow.is_finite() {
            return bad("actual flow must be finite".into());
        }
        let limit = self.limit_for(self.actual_flow);
        if self.actual_flow.abs() > limit + QTY_TOL {
            return bad(format!(
                "actual flow {} exceeds capacity {limit} in its direction",
                self.actual_flow
            ));
        }
        Ok(())
    }

    /// Capacity in the direction of `flow`.
    pub fn limit_for(&self, flow: f64) -> f64 {
        if flow >= 0.0 {
            self.ntc_export
        } else {
            self.ntc_import
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RentAccount {
    pub rent_total: f64,
    pub rent_spain: f64,
    pub rent_france: f64,
}

impl RentAccount {
    pub fn split(rent_total: f64) -> Self {
        let half = rent_total / 2.0;
        RentAccount {
            rent_total,
            rent_spain: half,
            rent_france: half,
        }
    }
}

/// Price-taker blocks for the hour: France buys up to `ntc_export` at its own
/// price and sells up to `ntc_import` at the same price. A zero capacity
/// yields no block.
pub fn export_import_blocks(ic: &InterconnectorHour) -> (Option<DemandBid>, Option<SupplyOffer>) {
    let export = (ic.ntc_export > 0.0).then(|| {
        DemandBid::new(
            EXPORT_BLOCK_ID,
            ic.french_price,
            ic.ntc_export,
            SegmentKind::ExportBlock,
        )
        .in_country(Country::France)
    });
    let import = (ic.ntc_import > 0.0).then(|| {
        SupplyOffer::new(
            IMPORT_BLOCK_ID,
            Technology::ImportBlock,
            ic.french_price,
            ic.ntc_import,
        )
        .in_country(Country::France)
    });
    (export, import)
}

/// Net export through the interconnector in a clearing that contains the
/// hour's price-taker blocks. Zero when the Iberian price equals the French
/// price.
pub fn net_flow(clearing: &ClearingResult, ic: &InterconnectorHour) -> Result<f64, CouplingError> {
    if clearing.price == ic.french_price {
        return Ok(0.0);
    }
    let exports = clearing
        .demand
        .iter()
        .filter(|f| f.segment.segment_kind == SegmentKind::ExportBlock);
    let imports = clearing
        .supply
        .iter()
        .filter(|f| f.segment.technology == Technology::ImportBlock);
    let (mut exported, mut export_offered) = (0.0, 0.0);
    for f in exports {
        exported += f.accepted;
        export_offered += f.segment.quantity;
    }
    let (mut imported, mut import_offered) = (0.0, 0.0);
    for f in imports {
        imported += f.accepted;
        import_offered += f.segment.quantity;
    }
    let full = |acc: f64, offered: f64| offered > 0.0 && acc >= offered - QTY_TOL;
    if full(exported, export_offered) && full(imported, import_offered) {
        return Err(CouplingError::InternalInconsistency);
    }
    Ok(exported - imported)
}

/// Congestion rent for the hour, split evenly between the two systems.
///
/// `flow` must run from the cheaper market to the dearer one. The rent is
/// the price spread times the flow; it is zero when the markets couple.
pub fn congestion_rent(
    iberian_price: f64,
    ic: &InterconnectorHour,
    flow: f64,
) -> Result<RentAccount, CouplingError> {
    let limit = ic.limit_for(flow);
    if flow.abs() > limit + QTY_TOL {
        return Err(CouplingError::OverCapacity { flow, limit });
    }
    let spread = ic.french_price - iberian_price;
    if spread.abs() <= PRICE_TOL || flow == 0.0 {
        return Ok(RentAccount::default());
    }
    if (flow > 0.0) != (spread > 0.0) {
        return Err(CouplingError::DirectionMismatch {
            flow,
            iberian_price,
            french_price: ic.french_price,
        });
    }
    Ok(RentAccount::split(spread.abs() * flow.abs()))
}
