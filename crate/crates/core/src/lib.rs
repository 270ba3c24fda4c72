//! Counterfactual simulation of the Iberian day-ahead electricity market
//! under and without the gas-price subsidy for fossil generators: hourly
//! step-curve clearing, the generation and demand contributions, coupling
//! with France, and the accounting that turns scenario runs into consumer,
//! rent, margin and emissions figures.

pub mod accounting;
pub mod cli;
pub mod counterfactual;
pub mod coupling;
pub mod io;
pub mod market;
pub mod mechanism;
pub mod money;

pub use accounting::{ImpactReport, MarginDecomposition};
pub use counterfactual::{run_horizon, EngineOptions, HourRecord, Scenario, ScenarioResult};
pub use market::{clear, ClearingResult, DemandBid, SupplyOffer, Technology};
pub use money::Money;
