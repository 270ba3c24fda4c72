use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::curve::{DemandCurve, Segment, SupplyCurve};
use super::{DemandBid, MarketError, SupplyOffer, Technology, QTY_TOL};

/// A segment together with the volume the auction accepted from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fill<S> {
    pub segment: S,
    pub accepted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingResult {
    /// Uniform clearing price, €/MWh.
    pub price: f64,
    /// Traded volume, MWh.
    pub quantity: f64,
    /// Supply fills in submission order.
    pub supply: Vec<Fill<SupplyOffer>>,
    /// Demand fills in submission order.
    pub demand: Vec<Fill<DemandBid>>,
    /// Technology of the highest-priced accepted offer; `None` when nothing
    /// traded.
    pub marginal_technology: Option<Technology>,
    /// Some segment priced exactly at the clearing price was only partly
    /// accepted.
    pub rationed_at_price: bool,
}

impl ClearingResult {
    pub fn accepted_supply_where(&self, pred: impl Fn(&SupplyOffer) -> bool) -> f64 {
        self.supply
            .iter()
            .filter(|f| pred(&f.segment))
            .map(|f| f.accepted)
            .sum()
    }

    pub fn accepted_demand_where(&self, pred: impl Fn(&DemandBid) -> bool) -> f64 {
        self.demand
            .iter()
            .filter(|f| pred(&f.segment))
            .map(|f| f.accepted)
            .sum()
    }

    /// Accepted MWh per unit id.
    pub fn supply_acceptance(&self) -> BTreeMap<String, f64> {
        let mut map = BTreeMap::new();
        for f in &self.supply {
            *map.entry(f.segment.unit_id.clone()).or_insert(0.0) += f.accepted;
        }
        map
    }

    /// Accepted MWh per agent id.
    pub fn demand_acceptance(&self) -> BTreeMap<String, f64> {
        let mut map = BTreeMap::new();
        for f in &self.demand {
            *map.entry(f.segment.agent_id.clone()).or_insert(0.0) += f.accepted;
        }
        map
    }
}

/// Clears one hour by step-curve intersection.
///
/// The clearing price is the lowest price in the merged breakpoint set at
/// which supply offered at or below it covers demand bid strictly above it.
/// When the crossing falls in a vertical gap this lands on the marginal bid's
/// price. Segments exactly at the clearing price are rationed pro rata.
pub fn clear(supply: &SupplyCurve, demand: &DemandCurve) -> Result<ClearingResult, MarketError> {
    if supply.is_empty() {
        return Err(MarketError::EmptyCurve(supply.side()));
    }
    if demand.is_empty() {
        return Err(MarketError::EmptyCurve(demand.side()));
    }

    // ascending (price, quantity) pairs for both sides
    let asc = |it: &mut dyn Iterator<Item = (f64, f64)>| {
        let mut v: Vec<(f64, f64)> = it.collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    };
    let sup = asc(&mut supply.merit_order().map(|s| (s.price(), s.quantity())));
    let dem = asc(&mut demand.merit_order().map(|s| (s.price(), s.quantity())));
    let demand_total: f64 = dem.iter().map(|d| d.1).sum();

    let mut prices: Vec<f64> = sup.iter().chain(dem.iter()).map(|x| x.0).collect();
    prices.sort_by(f64::total_cmp);
    prices.dedup();

    let top = *prices.last().expect("nonempty curves");
    let top_supply: f64 = sup.iter().map(|s| s.1).sum();
    let top_demand: f64 = dem.iter().filter(|d| d.0 >= top).map(|d| d.1).sum();
    if top_supply + QTY_TOL < top_demand {
        return Err(MarketError::Infeasible {
            supply: top_supply,
            demand: top_demand,
        });
    }

    let (mut si, mut di) = (0usize, 0usize);
    let (mut supply_le, mut demand_le) = (0.0f64, 0.0f64);
    let mut clearing_price = top;
    for &p in &prices {
        while si < sup.len() && sup[si].0 <= p {
            supply_le += sup[si].1;
            si += 1;
        }
        while di < dem.len() && dem[di].0 <= p {
            demand_le += dem[di].1;
            di += 1;
        }
        let demand_strict = demand_total - demand_le;
        if supply_le + QTY_TOL >= demand_strict {
            clearing_price = p;
            break;
        }
    }

    let price = clearing_price;
    let sum = |v: &[(f64, f64)], f: &dyn Fn(f64) -> bool| -> f64 {
        v.iter().filter(|x| f(x.0)).map(|x| x.1).sum()
    };
    let supply_below = sum(&sup, &|p| p < price);
    let supply_at = sum(&sup, &|p| p == price);
    let demand_above = sum(&dem, &|p| p > price);
    let demand_at = sum(&dem, &|p| p == price);
    let quantity = (supply_below + supply_at).min(demand_above + demand_at);

    let ratio = |filled: f64, at: f64| {
        if at > 0.0 {
            ((quantity - filled) / at).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };
    let supply_ratio = ratio(supply_below, supply_at);
    let demand_ratio = ratio(demand_above, demand_at);

    let mut rationed = false;
    let supply_fills: Vec<Fill<SupplyOffer>> = supply
        .segments()
        .iter()
        .map(|s| {
            let accepted = if s.price < price {
                s.quantity
            } else if s.price == price {
                let a = s.quantity * supply_ratio;
                rationed |= a < s.quantity - QTY_TOL;
                a
            } else {
                0.0
            };
            Fill {
                segment: s.clone(),
                accepted,
            }
        })
        .collect();
    let demand_fills: Vec<Fill<DemandBid>> = demand
        .segments()
        .iter()
        .map(|d| {
            let accepted = if d.price > price {
                d.quantity
            } else if d.price == price {
                let a = d.quantity * demand_ratio;
                rationed |= a < d.quantity - QTY_TOL;
                a
            } else {
                0.0
            };
            Fill {
                segment: d.clone(),
                accepted,
            }
        })
        .collect();

    let marginal_technology = marginal_technology(&supply_fills);

    Ok(ClearingResult {
        price,
        quantity,
        supply: supply_fills,
        demand: demand_fills,
        marginal_technology,
        rationed_at_price: rationed,
    })
}

/// Among accepted offers at the highest accepted price, the technology with
/// the largest accepted volume (earliest submission on ties).
fn marginal_technology(fills: &[Fill<SupplyOffer>]) -> Option<Technology> {
    let accepted = || fills.iter().filter(|f| f.accepted > QTY_TOL);
    let top = accepted()
        .map(|f| f.segment.price)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<&Fill<SupplyOffer>> = None;
    for f in accepted().filter(|f| f.segment.price == top) {
        if best.is_none_or(|b| f.accepted > b.accepted) {
            best = Some(f);
        }
    }
    best.map(|f| f.segment.technology)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{
        build_demand_curve, build_supply_curve, SegmentKind, DEFAULT_DEMAND_CEILING,
    };

    fn supply(offers: &[(f64, f64, Technology)]) -> SupplyCurve {
        let v: Vec<SupplyOffer> = offers
            .iter()
            .enumerate()
            .map(|(i, &(p, q, t))| SupplyOffer::new(format!("u{i}"), t, p, q))
            .collect();
        build_supply_curve(&v).unwrap()
    }

    fn demand(bids: &[(f64, f64)]) -> DemandCurve {
        let v: Vec<DemandBid> = bids
            .iter()
            .enumerate()
            .map(|(i, &(p, q))| DemandBid::new(format!("d{i}"), p, q, SegmentKind::DomesticElastic))
            .collect();
        build_demand_curve(&v).unwrap()
    }

    #[test]
    fn textbook_intersection_with_vertical_demand() {
        let s = supply(&[
            (10.0, 100.0, Technology::Nuclear),
            (50.0, 100.0, Technology::Ccgt),
        ]);
        let d = demand(&[(DEFAULT_DEMAND_CEILING, 150.0)]);
        let r = clear(&s, &d).unwrap();
        assert_eq!(r.price, 50.0);
        assert_eq!(r.quantity, 150.0);
        assert_eq!(r.marginal_technology, Some(Technology::Ccgt));
        assert_eq!(r.supply[0].accepted, 100.0);
        assert_eq!(r.supply[1].accepted, 50.0);
        assert!(r.rationed_at_price);
    }

    #[test]
    fn vertical_gap_resolves_to_marginal_bid_price() {
        let s = supply(&[
            (10.0, 100.0, Technology::Nuclear),
            (50.0, 100.0, Technology::Ccgt),
        ]);
        let d = demand(&[(60.0, 100.0), (40.0, 100.0)]);
        let r = clear(&s, &d).unwrap();
        assert_eq!(r.price, 40.0);
        assert_eq!(r.quantity, 100.0);
        assert_eq!(r.demand[0].accepted, 100.0);
        assert_eq!(r.demand[1].accepted, 0.0);
        assert!(r.rationed_at_price);
        assert_eq!(r.marginal_technology, Some(Technology::Nuclear));
    }

    #[test]
    fn no_trade_when_supply_is_above_all_demand() {
        let s = supply(&[(50.0, 100.0, Technology::Ccgt)]);
        let d = demand(&[(40.0, 100.0)]);
        let r = clear(&s, &d).unwrap();
        assert_eq!(r.quantity, 0.0);
        assert_eq!(r.marginal_technology, None);
    }

    #[test]
    fn infeasible_when_ceiling_demand_exceeds_supply() {
        let s = supply(&[(10.0, 100.0, Technology::Ccgt)]);
        let d = demand(&[(DEFAULT_DEMAND_CEILING, 150.0)]);
        assert!(matches!(clear(&s, &d), Err(MarketError::Infeasible { .. })));
    }

    #[test]
    fn equal_at_price_segments_share_pro_rata() {
        let s = supply(&[
            (20.0, 30.0, Technology::Ccgt),
            (20.0, 30.0, Technology::Coal),
            (20.0, 30.0, Technology::Ccgt),
        ]);
        let d = demand(&[(DEFAULT_DEMAND_CEILING, 50.0)]);
        let r = clear(&s, &d).unwrap();
        for f in &r.supply {
            assert!((f.accepted - 50.0 / 3.0).abs() < 1e-9);
        }
        let total: f64 = r.supply.iter().map(|f| f.accepted).sum();
        assert!((total - r.quantity).abs() < 1e-9);
    }

    #[test]
    fn acceptance_maps_aggregate_by_id() {
        let offers = vec![
            SupplyOffer::new("a", Technology::Ccgt, 10.0, 10.0),
            SupplyOffer::new("a", Technology::Ccgt, 20.0, 10.0),
            SupplyOffer::new("b", Technology::Coal, 30.0, 10.0),
        ];
        let s = build_supply_curve(&offers).unwrap();
        let d = demand(&[(DEFAULT_DEMAND_CEILING, 25.0)]);
        let r = clear(&s, &d).unwrap();
        let acc = r.supply_acceptance();
        assert_eq!(acc["a"], 20.0);
        assert_eq!(acc["b"], 5.0);
        assert_eq!(r.demand_acceptance()["d0"], 25.0);
    }
}
