//! JSON run configuration.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::report::OutputFormat;
use super::IoError;
use crate::counterfactual::{EngineOptions, Scenario};
use crate::mechanism::MechanismParams;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sensitivity {
    pub rents_in_cf: bool,
    pub recompute_gc: bool,
    pub blanket_hydro_shift: bool,
    pub period_average_dc: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Allowed gap between recorded and re-cleared prices, €/MWh.
    pub validation_eur_mwh: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            validation_eur_mwh: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub format: OutputFormat,
}

/// Gas prices used when GC is recomputed instead of read from the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GasConfig {
    /// First day of the reference-price schedule.
    pub start_date: NaiveDate,
    /// Day-ahead gas price by date, €/MWh.
    pub daily_prices: BTreeMap<NaiveDate, f64>,
}

impl Default for GasConfig {
    fn default() -> Self {
        GasConfig {
            start_date: EngineOptions::default().mechanism_start,
            daily_prices: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mechanism: MechanismParams,
    pub scenario: Option<Scenario>,
    pub sensitivity: Sensitivity,
    pub tolerances: Tolerances,
    pub output: OutputConfig,
    pub gas: GasConfig,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig, IoError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(IoError::file(path))?;
        RunConfig::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<RunConfig, IoError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), IoError> {
        self.mechanism
            .validate()
            .map_err(|e| IoError::Config(e.to_string()))?;
        let tol = self.tolerances.validation_eur_mwh;
        if !(tol.is_finite() && tol >= 0.0) {
            return Err(IoError::Config(format!(
                "validation tolerance {tol} must be >= 0"
            )));
        }
        if let Some((d, p)) = self
            .gas
            .daily_prices
            .iter()
            .find(|(_, p)| !(p.is_finite() && **p >= 0.0))
        {
            return Err(IoError::Config(format!(
                "gas price {p} on {d} must be finite and >= 0"
            )));
        }
        if self.sensitivity.recompute_gc && self.gas.daily_prices.is_empty() {
            return Err(IoError::Config(
                "recompute_gc needs gas.daily_prices".into(),
            ));
        }
        Ok(())
    }

    pub fn engine_options(&self) -> EngineOptions {
        EngineOptions {
            params: self.mechanism.clone(),
            rents_in_cf: self.sensitivity.rents_in_cf,
            recompute_gc: self.sensitivity.recompute_gc,
            blanket_hydro_shift: self.sensitivity.blanket_hydro_shift,
            period_average_dc: self.sensitivity.period_average_dc,
            gas_prices: self.gas.daily_prices.clone(),
            mechanism_start: self.gas.start_date,
        }
    }
}
