//! Hourly day-ahead auction: offer/bid segments, aggregated step curves and
//! uniform-price clearing by curve intersection.

mod clear;
mod curve;
mod histogram;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clear::{clear, ClearingResult, Fill};
pub use curve::{
    build_demand_curve, build_supply_curve, shift_curve, shift_curve_by, Breakpoint, DemandCurve,
    Segment, StepCurve, SupplyCurve,
};
pub use histogram::{marginal_tech_histogram, marginal_tech_histogram_from, MarginShare};

/// Arithmetic tolerance on quantities, in MWh.
pub const QTY_TOL: f64 = 1e-6;

/// Default price at which inelastic demand is encoded, in €/MWh.
pub const DEFAULT_DEMAND_CEILING: f64 = 3000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("{0} curve has no segments")]
    EmptyCurve(Side),
    #[error("invalid segment `{id}`: {reason}")]
    InvalidSegment { id: String, reason: String },
    #[error("demand of {demand:.3} MWh at the top price exceeds all supply ({supply:.3} MWh)")]
    Infeasible { supply: f64, demand: f64 },
    #[error("price shift must be finite, got {0}")]
    InvalidShift(f64),
    #[error("no clearing results to summarize")]
    NoHours,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Supply,
    Demand,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Supply => f.write_str("supply"),
            Side::Demand => f.write_str("demand"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technology {
    Ccgt,
    Coal,
    HydroReservoir,
    HydroPumped,
    Nuclear,
    Wind,
    Solar,
    CogenWaste,
    ImportBlock,
    Other,
}

impl Technology {
    pub const ALL: [Technology; 10] = [
        Technology::Ccgt,
        Technology::Coal,
        Technology::HydroReservoir,
        Technology::HydroPumped,
        Technology::Nuclear,
        Technology::Wind,
        Technology::Solar,
        Technology::CogenWaste,
        Technology::ImportBlock,
        Technology::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Technology::Ccgt => "ccgt",
            Technology::Coal => "coal",
            Technology::HydroReservoir => "hydro_reservoir",
            Technology::HydroPumped => "hydro_pumped",
            Technology::Nuclear => "nuclear",
            Technology::Wind => "wind",
            Technology::Solar => "solar",
            Technology::CogenWaste => "cogen_waste",
            Technology::ImportBlock => "import_block",
            Technology::Other => "other",
        }
    }

    /// Fossil technologies eligible for the generation subsidy.
    pub fn is_fossil(self) -> bool {
        matches!(self, Technology::Ccgt | Technology::Coal)
    }
}

impl fmt::Display for Technology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Technology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Technology::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown technology `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Country {
    #[serde(rename = "ES")]
    Spain,
    #[serde(rename = "PT")]
    Portugal,
    #[serde(rename = "FR")]
    France,
    #[serde(rename = "MA")]
    Morocco,
}

impl Country {
    pub fn code(self) -> &'static str {
        match self {
            Country::Spain => "ES",
            Country::Portugal => "PT",
            Country::France => "FR",
            Country::Morocco => "MA",
        }
    }
}

impl fmt::Display for Country {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Country {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ES" => Ok(Country::Spain),
            "PT" => Ok(Country::Portugal),
            "FR" => Ok(Country::France),
            "MA" => Ok(Country::Morocco),
            other => Err(format!("unknown country `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    DomesticInelastic,
    DomesticElastic,
    ExportBlock,
}

impl SegmentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentKind::DomesticInelastic => "domestic_inelastic",
            SegmentKind::DomesticElastic => "domestic_elastic",
            SegmentKind::ExportBlock => "export_block",
        }
    }
}

impl FromStr for SegmentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "domestic_inelastic" => Ok(SegmentKind::DomesticInelastic),
            "domestic_elastic" => Ok(SegmentKind::DomesticElastic),
            "export_block" => Ok(SegmentKind::ExportBlock),
            other => Err(format!("unknown segment kind `{other}`")),
        }
    }
}

/// One priced quantity offered by a generating unit (or an import block).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyOffer {
    pub unit_id: String,
    pub technology: Technology,
    pub country: Country,
    /// €/MWh
    pub price: f64,
    /// MWh
    pub quantity: f64,
    /// Receives the generation contribution.
    pub privileged: bool,
    /// Bids at an opportunity cost that tracks gas-fired costs.
    pub gas_indexed: bool,
    /// Subject to the inframarginal revenue cap.
    pub capped: bool,
}

impl SupplyOffer {
    /// A plain offer with every flag cleared.
    pub fn new(
        unit_id: impl Into<String>,
        technology: Technology,
        price: f64,
        quantity: f64,
    ) -> Self {
        SupplyOffer {
            unit_id: unit_id.into(),
            technology,
            country: Country::Spain,
            price,
            quantity,
            privileged: false,
            gas_indexed: false,
            capped: false,
        }
    }

    pub fn privileged(mut self) -> Self {
        self.privileged = true;
        self
    }

    pub fn gas_indexed(mut self) -> Self {
        self.gas_indexed = true;
        self
    }

    pub fn capped(mut self) -> Self {
        self.capped = true;
        self
    }

    pub fn in_country(mut self, country: Country) -> Self {
        self.country = country;
        self
    }
}

/// One priced quantity bid by a consumer, retailer or export block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandBid {
    pub agent_id: String,
    pub country: Country,
    /// €/MWh; inelastic demand bids at the configured ceiling.
    pub price: f64,
    /// MWh
    pub quantity: f64,
    /// Pays the demand contribution.
    pub affected: bool,
    pub segment_kind: SegmentKind,
}

impl DemandBid {
    pub fn new(
        agent_id: impl Into<String>,
        price: f64,
        quantity: f64,
        segment_kind: SegmentKind,
    ) -> Self {
        DemandBid {
            agent_id: agent_id.into(),
            country: Country::Spain,
            price,
            quantity,
            affected: false,
            segment_kind,
        }
    }

    pub fn affected(mut self) -> Self {
        self.affected = true;
        self
    }

    pub fn in_country(mut self, country: Country) -> Self {
        self.country = country;
        self
    }
}

pub(crate) fn check_price_quantity(id: &str, price: f64, quantity: f64) -> Result<(), MarketError> {
    let invalid = |reason: String| MarketError::InvalidSegment {
        id: id.to_string(),
        reason,
    };
    if !price.is_finite() || price < 0.0 {
        return Err(invalid(format!("price {price} must be finite and >= 0")));
    }
    if !quantity.is_finite() || quantity <= 0.0 {
        return Err(invalid(format!(
            "quantity {quantity} must be finite and > 0"
        )));
    }
    Ok(())
}

impl Segment for SupplyOffer {
    const SIDE: Side = Side::Supply;

    fn id(&self) -> &str {
        &self.unit_id
    }
    fn price(&self) -> f64 {
        self.price
    }
    fn quantity(&self) -> f64 {
        self.quantity
    }
    fn set_price(&mut self, price: f64) {
        self.price = price;
    }

    fn validate(&self) -> Result<(), MarketError> {
        check_price_quantity(&self.unit_id, self.price, self.quantity)?;
        let invalid = |reason: &str| MarketError::InvalidSegment {
            id: self.unit_id.clone(),
            reason: reason.to_string(),
        };
        if self.privileged && !self.technology.is_fossil() {
            return Err(invalid("only ccgt and coal units can be privileged"));
        }
        if self.capped && self.privileged {
            return Err(invalid("a capped unit cannot be privileged"));
        }
        Ok(())
    }
}

impl Segment for DemandBid {
    const SIDE: Side = Side::Demand;

    fn id(&self) -> &str {
        &self.agent_id
    }
    fn price(&self) -> f64 {
        self.price
    }
    fn quantity(&self) -> f64 {
        self.quantity
    }
    fn set_price(&mut self, price: f64) {
        self.price = price;
    }

    fn validate(&self) -> Result<(), MarketError> {
        check_price_quantity(&self.agent_id, self.price, self.quantity)?;
        if self.segment_kind == SegmentKind::ExportBlock && self.affected {
            return Err(MarketError::InvalidSegment {
                id: self.agent_id.clone(),
                reason: "export blocks do not pay the demand contribution".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn technology_names_round_trip() {
        for t in Technology::ALL {
            assert_eq!(t.as_str().parse::<Technology>().unwrap(), t);
        }
        assert!("gas".parse::<Technology>().is_err());
    }

    #[test]
    fn privileged_renewable_is_rejected() {
        let offer = SupplyOffer::new("w1", Technology::Wind, 10.0, 5.0).privileged();
        assert!(matches!(
            offer.validate(),
            Err(MarketError::InvalidSegment { .. })
        ));
    }

    #[test]
    fn capped_privileged_is_rejected() {
        let offer = SupplyOffer::new("c1", Technology::Ccgt, 10.0, 5.0)
            .privileged()
            .capped();
        assert!(offer.validate().is_err());
    }

    #[test]
    fn affected_export_is_rejected() {
        let bid = DemandBid::new("fr", 100.0, 5.0, SegmentKind::ExportBlock).affected();
        assert!(bid.validate().is_err());
    }

    #[test]
    fn negative_price_and_zero_quantity_are_rejected() {
        assert!(SupplyOffer::new("a", Technology::Other, -1.0, 5.0)
            .validate()
            .is_err());
        assert!(SupplyOffer::new("a", Technology::Other, 1.0, 0.0)
            .validate()
            .is_err());
        assert!(
            DemandBid::new("d", f64::NAN, 5.0, SegmentKind::DomesticElastic)
                .validate()
                .is_err()
        );
    }
}
