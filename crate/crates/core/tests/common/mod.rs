#![allow(dead_code)]

use mibel_core::market::{DemandBid, SegmentKind, SupplyOffer, Technology};

/// Brute-force reference for one integer-valued auction.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub price: f64,
    pub quantity: f64,
    pub welfare: f64,
}

/// Gross surplus of trading `q`: area between inverse demand and inverse
/// supply up to `q`, walking both stacks in merit order.
pub fn welfare_at(supply: &[(f64, f64)], demand: &[(f64, f64)], q: f64) -> f64 {
    let mut s: Vec<(f64, f64)> = supply.to_vec();
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut d: Vec<(f64, f64)> = demand.to_vec();
    d.sort_by(|a, b| b.0.total_cmp(&a.0));
    let area = |stack: &[(f64, f64)]| {
        let mut left = q;
        let mut total = 0.0;
        for &(p, qty) in stack {
            let take = left.min(qty);
            total += p * take;
            left -= take;
            if left <= 0.0 {
                break;
            }
        }
        (total, left)
    };
    let (value, unmet_d) = area(&d);
    let (cost, unmet_s) = area(&s);
    if unmet_d > 0.0 || unmet_s > 0.0 {
        return f64::NEG_INFINITY;
    }
    value - cost
}

/// Largest welfare-maximizing volume over every cumulative breakpoint of
/// either stack, and the lowest price in the merged price set at which
/// supply at or below it covers demand strictly above it.
pub fn oracle(supply: &[(f64, f64)], demand: &[(f64, f64)]) -> Option<OracleOutcome> {
    let top = supply
        .iter()
        .chain(demand)
        .map(|x| x.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let total_supply: f64 = supply.iter().map(|x| x.1).sum();
    let top_demand: f64 = demand.iter().filter(|x| x.0 >= top).map(|x| x.1).sum();
    if total_supply < top_demand {
        return None;
    }

    let mut candidates = vec![0.0];
    for stack in [supply, demand] {
        let mut sorted = stack.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        for &(_, q) in &sorted {
            acc += q;
            candidates.push(acc);
        }
        sorted.reverse();
        let mut acc = 0.0;
        for &(_, q) in &sorted {
            acc += q;
            candidates.push(acc);
        }
    }
    let mut best_q = 0.0;
    let mut best_w = f64::NEG_INFINITY;
    for &q in &candidates {
        let w = welfare_at(supply, demand, q);
        if w > best_w || (w == best_w && q > best_q) {
            best_w = w;
            best_q = q;
        }
    }

    let mut prices: Vec<f64> = supply.iter().chain(demand).map(|x| x.0).collect();
    prices.sort_by(f64::total_cmp);
    prices.dedup();
    let price = prices
        .into_iter()
        .find(|&p| {
            let s: f64 = supply.iter().filter(|x| x.0 <= p).map(|x| x.1).sum();
            let d: f64 = demand.iter().filter(|x| x.0 > p).map(|x| x.1).sum();
            s >= d
        })
        .unwrap_or(top);
    Some(OracleOutcome {
        price,
        quantity: best_q,
        welfare: best_w,
    })
}

pub fn offers(v: &[(f64, f64)]) -> Vec<SupplyOffer> {
    v.iter()
        .enumerate()
        .map(|(i, &(p, q))| SupplyOffer::new(format!("s{i}"), Technology::Ccgt, p, q))
        .collect()
}

pub fn bids(v: &[(f64, f64)]) -> Vec<DemandBid> {
    v.iter()
        .enumerate()
        .map(|(i, &(p, q))| DemandBid::new(format!("d{i}"), p, q, SegmentKind::DomesticElastic))
        .collect()
}
