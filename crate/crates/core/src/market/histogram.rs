use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ClearingResult, MarketError, Technology};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginShare {
    pub hours: usize,
    pub share: f64,
}

/// Hours and share of hours in which each technology set the price.
///
/// Hours in which nothing traded have no marginal unit and are counted under
/// [`Technology::Other`].
pub fn marginal_tech_histogram(
    results: &[ClearingResult],
) -> Result<BTreeMap<Technology, MarginShare>, MarketError> {
    marginal_tech_histogram_from(
        results
            .iter()
            .map(|r| r.marginal_technology.unwrap_or(Technology::Other)),
    )
}

pub fn marginal_tech_histogram_from(
    marginal: impl IntoIterator<Item = Technology>,
) -> Result<BTreeMap<Technology, MarginShare>, MarketError> {
    let mut counts: BTreeMap<Technology, usize> = BTreeMap::new();
    let mut total = 0usize;
    for t in marginal {
        *counts.entry(t).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Err(MarketError::NoHours);
    }
    Ok(counts
        .into_iter()
        .map(|(t, hours)| {
            let share = hours as f64 / total as f64;
            (t, MarginShare { hours, share })
        })
        .collect())
}
