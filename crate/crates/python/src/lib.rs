//! Python bindings: clearing, mechanism arithmetic, impact products and
//! whole-horizon scenario runs.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mibel_core::accounting as acc;
use mibel_core::counterfactual::{run_horizon, EngineOptions, HourRecord, Scenario};
use mibel_core::io::{self as core_io, Report, RunConfig, SynthSpec};
use mibel_core::market::{self, Country, SegmentKind, Technology};
use mibel_core::mechanism::{self as mech, MechanismParams};
use mibel_core::ImpactReport;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr>(s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(value_err)
}

#[pyclass(name = "SupplyOffer", from_py_object)]
#[derive(Clone)]
struct PySupplyOffer(market::SupplyOffer);

#[pymethods]
impl PySupplyOffer {
    #[new]
    #[pyo3(signature = (unit_id, technology, price, quantity, *, privileged=false, gas_indexed=false, capped=false, country="ES"))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        unit_id: String,
        technology: &str,
        price: f64,
        quantity: f64,
        privileged: bool,
        gas_indexed: bool,
        capped: bool,
        country: &str,
    ) -> PyResult<Self> {
        let mut o =
            market::SupplyOffer::new(unit_id, parse::<Technology>(technology)?, price, quantity)
                .in_country(parse::<Country>(country)?);
        o.privileged = privileged;
        o.gas_indexed = gas_indexed;
        o.capped = capped;
        Ok(PySupplyOffer(o))
    }

    #[getter]
    fn unit_id(&self) -> &str {
        &self.0.unit_id
    }

    #[getter]
    fn technology(&self) -> &'static str {
        self.0.technology.as_str()
    }

    #[getter]
    fn price(&self) -> f64 {
        self.0.price
    }

    #[getter]
    fn quantity(&self) -> f64 {
        self.0.quantity
    }

    fn __repr__(&self) -> String {
        format!(
            "SupplyOffer({:?}, {:?}, {}, {})",
            self.0.unit_id,
            self.0.technology.as_str(),
            self.0.price,
            self.0.quantity
        )
    }
}

#[pyclass(name = "DemandBid", from_py_object)]
#[derive(Clone)]
struct PyDemandBid(market::DemandBid);

#[pymethods]
impl PyDemandBid {
    #[new]
    #[pyo3(signature = (agent_id, price, quantity, *, segment_kind="domestic_elastic", affected=false, country="ES"))]
    fn new(
        agent_id: String,
        price: f64,
        quantity: f64,
        segment_kind: &str,
        affected: bool,
        country: &str,
    ) -> PyResult<Self> {
        let mut b = market::DemandBid::new(
            agent_id,
            price,
            quantity,
            parse::<SegmentKind>(segment_kind)?,
        )
        .in_country(parse::<Country>(country)?);
        b.affected = affected;
        Ok(PyDemandBid(b))
    }

    #[getter]
    fn agent_id(&self) -> &str {
        &self.0.agent_id
    }

    #[getter]
    fn price(&self) -> f64 {
        self.0.price
    }

    #[getter]
    fn quantity(&self) -> f64 {
        self.0.quantity
    }

    fn __repr__(&self) -> String {
        format!(
            "DemandBid({:?}, {}, {})",
            self.0.agent_id, self.0.price, self.0.quantity
        )
    }
}

#[pyclass(name = "ClearingResult", frozen)]
struct PyClearingResult(market::ClearingResult);

#[pymethods]
impl PyClearingResult {
    #[getter]
    fn price(&self) -> f64 {
        self.0.price
    }

    #[getter]
    fn quantity(&self) -> f64 {
        self.0.quantity
    }

    #[getter]
    fn marginal_technology(&self) -> Option<&'static str> {
        self.0.marginal_technology.map(Technology::as_str)
    }

    #[getter]
    fn rationed_at_price(&self) -> bool {
        self.0.rationed_at_price
    }

    /// Accepted MWh by unit id.
    fn supply_acceptance(&self) -> BTreeMap<String, f64> {
        self.0.supply_acceptance()
    }

    /// Accepted MWh by agent id.
    fn demand_acceptance(&self) -> BTreeMap<String, f64> {
        self.0.demand_acceptance()
    }

    fn __repr__(&self) -> String {
        format!(
            "ClearingResult(price={}, quantity={})",
            self.0.price, self.0.quantity
        )
    }
}

#[pyfunction]
fn clear(offers: Vec<PySupplyOffer>, bids: Vec<PyDemandBid>) -> PyResult<PyClearingResult> {
    let offers: Vec<_> = offers.into_iter().map(|o| o.0).collect();
    let bids: Vec<_> = bids.into_iter().map(|b| b.0).collect();
    let s = market::build_supply_curve(&offers).map_err(value_err)?;
    let d = market::build_demand_curve(&bids).map_err(value_err)?;
    market::clear(&s, &d)
        .map(PyClearingResult)
        .map_err(value_err)
}

#[pyfunction]
fn gas_reference_price(month_index: i64) -> PyResult<f64> {
    mech::gas_reference_price(month_index, &MechanismParams::default()).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (gas_price, ref_price, efficiency=0.55))]
fn generation_contribution(gas_price: f64, ref_price: f64, efficiency: f64) -> PyResult<f64> {
    mech::generation_contribution(gas_price, ref_price, efficiency).map_err(value_err)
}

#[pyfunction]
fn demand_contribution(total_gc: f64, rent_allocated: f64, affected_volume: f64) -> PyResult<f64> {
    mech::demand_contribution(total_gc, rent_allocated, affected_volume).map_err(value_err)
}

#[pyfunction]
fn capped_revenue(market_price: f64) -> f64 {
    mech::capped_revenue(market_price, &MechanismParams::default())
}

#[pyfunction]
fn system_income_from_cap(market_price: f64) -> f64 {
    mech::system_income_from_cap(market_price, &MechanismParams::default())
}

/// Euros, rounded to the cent.
#[pyfunction]
fn consumer_impact(avg_demand: f64, affected_share: f64, delta_cost: f64, hours: u32) -> f64 {
    acc::consumer_impact(avg_demand, affected_share, delta_cost, hours).euros()
}

/// Euros, rounded to the cent.
#[pyfunction]
fn rent_funding_effect(avg_demand: f64, affected_share: f64, dc_relief: f64, hours: u32) -> f64 {
    acc::rent_funding_effect(avg_demand, affected_share, dc_relief, hours).euros()
}

/// `(co2_t, gas_mwh)`
#[pyfunction]
#[pyo3(signature = (delta_fossil_gen, co2_factor=acc::CO2_T_PER_MWH, efficiency=acc::GAS_EFFICIENCY))]
fn emissions_and_gas(
    delta_fossil_gen: f64,
    co2_factor: f64,
    efficiency: f64,
) -> PyResult<(f64, f64)> {
    let eg = acc::emissions_and_gas(delta_fossil_gen, co2_factor, efficiency).map_err(value_err)?;
    Ok((eg.co2_t, eg.gas_mwh))
}

fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A horizon of hourly records.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    hours: Vec<HourRecord>,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (path, demand_ceiling=market::DEFAULT_DEMAND_CEILING))]
    fn load(path: &str, demand_ceiling: f64) -> PyResult<Self> {
        let hours = core_io::read_dataset(path, demand_ceiling).map_err(|e| match e {
            core_io::IoError::File { .. } => PyIOError::new_err(e.to_string()),
            other => value_err(other),
        })?;
        Ok(PyDataset { hours })
    }

    #[staticmethod]
    #[pyo3(signature = (hours, seed))]
    fn synthetic(hours: usize, seed: u64) -> PyResult<Self> {
        let spec = SynthSpec {
            hours,
            ..SynthSpec::default()
        };
        let hours = core_io::generate_synthetic(&spec, seed).map_err(value_err)?;
        Ok(PyDataset { hours })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let file =
            std::fs::File::create(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        core_io::write_dataset(&self.hours, std::io::BufWriter::new(file)).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.hours.len()
    }

    /// Re-clears every hour and compares with the recorded price.
    #[pyo3(signature = (tolerance=1.0))]
    fn validate<'py>(&self, py: Python<'py>, tolerance: f64) -> PyResult<Bound<'py, PyDict>> {
        let r = core_io::validate_dataset(&self.hours, tolerance);
        let out = PyDict::new(py);
        out.set_item("hours", r.hours)?;
        out.set_item("clean", r.is_clean())?;
        out.set_item("deviations", r.deviations.len())?;
        out.set_item("failures", r.failures.len())?;
        out.set_item("max_abs_deviation", r.max_abs_deviation)?;
        Ok(out)
    }

    /// Runs one scenario and returns the report as plain Python objects.
    /// `config` is a JSON document in the CLI's config format.
    #[pyo3(signature = (scenario, config=None))]
    fn run<'py>(
        &self,
        py: Python<'py>,
        scenario: &str,
        config: Option<&str>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let scenario: Scenario = parse(scenario)?;
        let opts = match config {
            Some(text) => RunConfig::from_json(text)
                .map_err(value_err)?
                .engine_options(),
            None => EngineOptions::default(),
        };
        let hours = &self.hours;
        let report = py
            .detach(|| {
                let result = run_horizon(hours, scenario, &opts).map_err(|e| e.to_string())?;
                let impact = ImpactReport::build(&result).map_err(|e| e.to_string())?;
                Ok::<_, String>(Report::new(&result, &impact))
            })
            .map_err(PyValueError::new_err)?;
        to_py(py, &report)
    }
}

#[pymodule]
fn mibel(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySupplyOffer>()?;
    m.add_class::<PyDemandBid>()?;
    m.add_class::<PyClearingResult>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(clear, m)?)?;
    m.add_function(wrap_pyfunction!(gas_reference_price, m)?)?;
    m.add_function(wrap_pyfunction!(generation_contribution, m)?)?;
    m.add_function(wrap_pyfunction!(demand_contribution, m)?)?;
    m.add_function(wrap_pyfunction!(capped_revenue, m)?)?;
    m.add_function(wrap_pyfunction!(system_income_from_cap, m)?)?;
    m.add_function(wrap_pyfunction!(consumer_impact, m)?)?;
    m.add_function(wrap_pyfunction!(rent_funding_effect, m)?)?;
    m.add_function(wrap_pyfunction!(emissions_and_gas, m)?)?;
    Ok(())
}
