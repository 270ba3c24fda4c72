use super::{DemandBid, MarketError, Side, SupplyOffer};

/// A priced quantity that can sit on one side of the auction.
pub trait Segment: Clone {
    const SIDE: Side;

    fn id(&self) -> &str;
    fn price(&self) -> f64;
    fn quantity(&self) -> f64;
    fn set_price(&mut self, price: f64);
    fn validate(&self) -> Result<(), MarketError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakpoint {
    pub price: f64,
    pub cumulative_quantity: f64,
}

/// Aggregated step function for one side of one hour.
///
/// Segments are kept in the order they were submitted; `order` holds the merit
/// order (ascending price for supply, descending for demand, submission order
/// breaking ties).
#[derive(Debug, Clone, PartialEq)]
pub struct StepCurve<S> {
    segments: Vec<S>,
    order: Vec<usize>,
}

pub type SupplyCurve = StepCurve<SupplyOffer>;
pub type DemandCurve = StepCurve<DemandBid>;

impl<S: Segment> StepCurve<S> {
    pub fn new(segments: Vec<S>) -> Result<Self, MarketError> {
        if segments.is_empty() {
            return Err(MarketError::EmptyCurve(S::SIDE));
        }
        for s in &segments {
            s.validate()?;
        }
        Ok(Self::sorted(segments))
    }

    fn sorted(segments: Vec<S>) -> Self {
        let mut order: Vec<usize> = (0..segments.len()).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (segments[a].price(), segments[b].price());
            let by_price = match S::SIDE {
                Side::Supply => pa.total_cmp(&pb),
                Side::Demand => pb.total_cmp(&pa),
            };
            by_price.then(a.cmp(&b))
        });
        StepCurve { segments, order }
    }

    pub fn side(&self) -> Side {
        S::SIDE
    }

    /// Segments in submission order.
    pub fn segments(&self) -> &[S] {
        &self.segments
    }

    /// Segments in merit order.
    pub fn merit_order(&self) -> impl Iterator<Item = &S> + '_ {
        self.order.iter().map(move |&i| &self.segments[i])
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_quantity(&self) -> f64 {
        self.merit_order().map(Segment::quantity).sum()
    }

    pub fn min_price(&self) -> f64 {
        self.segments
            .iter()
            .map(Segment::price)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_price(&self) -> f64 {
        self.segments
            .iter()
            .map(Segment::price)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Quantity available at `price`: S(p) = offers priced at or below `price`
    /// for supply, D(p) = bids priced at or above `price` for demand.
    pub fn quantity_at(&self, price: f64) -> f64 {
        self.merit_order()
            .filter(|s| match S::SIDE {
                Side::Supply => s.price() <= price,
                Side::Demand => s.price() >= price,
            })
            .map(Segment::quantity)
            .sum()
    }

    /// Quantity strictly beyond `price`: supply strictly below, demand
    /// strictly above.
    pub fn quantity_strictly_beyond(&self, price: f64) -> f64 {
        self.merit_order()
            .filter(|s| match S::SIDE {
                Side::Supply => s.price() < price,
                Side::Demand => s.price() > price,
            })
            .map(Segment::quantity)
            .sum()
    }

    /// One breakpoint per distinct price, ascending by price, carrying the
    /// curve's cumulative quantity at that price.
    pub fn breakpoints(&self) -> Vec<Breakpoint> {
        let mut prices: Vec<f64> = self.segments.iter().map(Segment::price).collect();
        prices.sort_by(f64::total_cmp);
        prices.dedup();
        prices
            .into_iter()
            .map(|price| Breakpoint {
                price,
                cumulative_quantity: self.quantity_at(price),
            })
            .collect()
    }
}

pub fn build_supply_curve(offers: &[SupplyOffer]) -> Result<SupplyCurve, MarketError> {
    StepCurve::new(offers.to_vec())
}

pub fn build_demand_curve(bids: &[DemandBid]) -> Result<DemandCurve, MarketError> {
    StepCurve::new(bids.to_vec())
}

/// Adds `delta` to the price of every segment matched by `predicate`,
/// flooring shifted prices at zero.
pub fn shift_curve<S: Segment>(
    curve: &StepCurve<S>,
    delta: f64,
    predicate: impl Fn(&S) -> bool,
) -> Result<StepCurve<S>, MarketError> {
    if !delta.is_finite() {
        return Err(MarketError::InvalidShift(delta));
    }
    shift_curve_by(curve, |s| predicate(s).then_some(delta))
}

/// Per-segment variant of [`shift_curve`]: `delta_for` returns the shift for
/// a segment, or `None` to leave it in place.
pub fn shift_curve_by<S: Segment>(
    curve: &StepCurve<S>,
    delta_for: impl Fn(&S) -> Option<f64>,
) -> Result<StepCurve<S>, MarketError> {
    let mut segments = curve.segments.clone();
    for s in &mut segments {
        if let Some(delta) = delta_for(s) {
            if !delta.is_finite() {
                return Err(MarketError::InvalidShift(delta));
            }
            let shifted = (s.price() + delta).max(0.0);
            s.set_price(shifted);
        }
    }
    Ok(StepCurve::sorted(segments))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{SegmentKind, Technology, DEFAULT_DEMAND_CEILING};

    fn offer(id: &str, price: f64, qty: f64) -> SupplyOffer {
        SupplyOffer::new(id, Technology::Ccgt, price, qty)
    }

    fn bid(id: &str, price: f64, qty: f64) -> DemandBid {
        DemandBid::new(id, price, qty, SegmentKind::DomesticElastic)
    }

    #[test]
    fn supply_aggregates_cumulatively() {
        let curve =
            build_supply_curve(&[offer("b", 50.0, 100.0), offer("a", 10.0, 100.0)]).unwrap();
        assert_eq!(curve.quantity_at(10.0), 100.0);
        assert_eq!(curve.quantity_at(50.0), 200.0);
        assert_eq!(curve.quantity_at(9.99), 0.0);
        let bps = curve.breakpoints();
        assert_eq!(bps.len(), 2);
        assert_eq!(
            bps[0],
            Breakpoint {
                price: 10.0,
                cumulative_quantity: 100.0
            }
        );
        assert_eq!(
            bps[1],
            Breakpoint {
                price: 50.0,
                cumulative_quantity: 200.0
            }
        );
    }

    #[test]
    fn equal_prices_merge_into_one_breakpoint() {
        let curve = build_supply_curve(&[offer("a", 10.0, 60.0), offer("b", 10.0, 40.0)]).unwrap();
        let bps = curve.breakpoints();
        assert_eq!(
            bps,
            vec![Breakpoint {
                price: 10.0,
                cumulative_quantity: 100.0
            }]
        );
    }

    #[test]
    fn vertical_demand_is_flat_below_ceiling() {
        let curve = build_demand_curve(&[bid("d", DEFAULT_DEMAND_CEILING, 150.0)]).unwrap();
        for p in [0.0, 10.0, 500.0, DEFAULT_DEMAND_CEILING] {
            assert_eq!(curve.quantity_at(p), 150.0);
        }
        assert_eq!(curve.quantity_at(DEFAULT_DEMAND_CEILING + 1.0), 0.0);
    }

    #[test]
    fn demand_aggregates_downward() {
        let curve = build_demand_curve(&[bid("a", 60.0, 100.0), bid("b", 40.0, 100.0)]).unwrap();
        assert_eq!(curve.quantity_at(40.0), 200.0);
        assert_eq!(curve.quantity_at(50.0), 100.0);
        assert_eq!(curve.quantity_strictly_beyond(40.0), 100.0);
        let bps = curve.breakpoints();
        assert!(bps
            .windows(2)
            .all(|w| w[0].cumulative_quantity >= w[1].cumulative_quantity));
    }

    #[test]
    fn empty_and_invalid_inputs_are_rejected() {
        assert_eq!(
            build_supply_curve(&[]),
            Err(MarketError::EmptyCurve(Side::Supply))
        );
        assert_eq!(
            build_demand_curve(&[]),
            Err(MarketError::EmptyCurve(Side::Demand))
        );
        assert!(matches!(
            build_supply_curve(&[offer("x", -5.0, 1.0)]),
            Err(MarketError::InvalidSegment { .. })
        ));
    }

    #[test]
    fn zero_shift_is_identity() {
        let curve = build_supply_curve(&[offer("a", 10.0, 1.0), offer("b", 5.0, 2.0)]).unwrap();
        assert_eq!(shift_curve(&curve, 0.0, |_| true).unwrap(), curve);
    }

    #[test]
    fn shift_by_generation_contribution() {
        let curve = build_supply_curve(&[offer("a", 120.0, 1.0)]).unwrap();
        let shifted = shift_curve(&curve, 178.3, |_| true).unwrap();
        assert!((shifted.segments()[0].price - 298.3).abs() < 1e-9);
    }

    #[test]
    fn shift_respects_predicate_and_resorts() {
        let curve = build_supply_curve(&[
            offer("gas", 10.0, 1.0).privileged(),
            SupplyOffer::new("nuc", Technology::Nuclear, 20.0, 1.0),
        ])
        .unwrap();
        let shifted = shift_curve(&curve, 50.0, |o| o.privileged).unwrap();
        assert_eq!(shifted.segments()[0].price, 60.0);
        assert_eq!(shifted.segments()[1].price, 20.0);
        let merit: Vec<&str> = shifted.merit_order().map(|o| o.unit_id.as_str()).collect();
        assert_eq!(merit, vec!["nuc", "gas"]);
    }

    #[test]
    fn downward_shift_floors_at_zero() {
        let curve = build_supply_curve(&[offer("a", 10.0, 1.0)]).unwrap();
        let shifted = shift_curve(&curve, -25.0, |_| true).unwrap();
        assert_eq!(shifted.segments()[0].price, 0.0);
        assert!(shift_curve(&curve, f64::NAN, |_| true).is_err());
    }
}
