//! `mibel` command line: clear single hours, run counterfactual horizons,
//! reconcile datasets, generate synthetic data and merge reports.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::io::Write;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::accounting::{AccountingError, ImpactReport};
use crate::counterfactual::{run_horizon, Scenario, ScenarioError};
use crate::io::report::Report;
use crate::io::synth::write_synthetic;
use crate::io::{
    emit_report, merge_reports, read_dataset, validate_dataset, IoError, OutputFormat, RunConfig,
    SynthSpec,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "mibel",
    version,
    about = "Iberian day-ahead market counterfactual engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clear one hour of a dataset and print the result.
    Clear {
        #[arg(long)]
        input: PathBuf,
        /// Hour id, e.g. 2022-06-15T10:00:00Z
        #[arg(long)]
        hour: DateTime<Utc>,
    },
    /// Run a counterfactual over every hour of a dataset.
    Cf {
        #[arg(long)]
        input: PathBuf,
        /// ministry, elastic or coupled; overrides the config file
        #[arg(long)]
        scenario: Option<Scenario>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// csv or json; overrides the config file
        #[arg(long)]
        format: Option<OutputFormat>,
        #[arg(long)]
        rents_in_cf: bool,
        #[arg(long)]
        recompute_gc: bool,
        #[arg(long)]
        blanket_hydro_shift: bool,
        #[arg(long)]
        period_average_dc: bool,
    },
    /// Re-clear every hour and compare with the recorded prices.
    Validate {
        #[arg(long)]
        input: PathBuf,
        /// EUR/MWh
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a seeded synthetic dataset.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the hour count from --spec.
        #[arg(long)]
        hours: Option<usize>,
    },
    /// Combine JSON reports into one side-by-side table.
    ReportMerge {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Accounting(#[from] AccountingError),
    #[error("hour {0} is not in the dataset")]
    NoSuchHour(DateTime<Utc>),
    #[error("output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Clear { input, hour } => {
            let records = read_dataset(&input, RunConfig::default().mechanism.demand_ceiling)?;
            let record = records
                .iter()
                .find(|r| r.hour_id == hour)
                .ok_or(CliError::NoSuchHour(hour))?;
            let c = record.clear_actual()?;
            writeln!(
                out,
                "hour        {}",
                record.hour_id.format("%Y-%m-%dT%H:%M:%SZ")
            )?;
            writeln!(out, "price       {:.2} EUR/MWh", c.price)?;
            writeln!(out, "quantity    {:.3} MWh", c.quantity)?;
            writeln!(
                out,
                "marginal    {}",
                c.marginal_technology.map_or("none", |t| t.as_str())
            )?;
            writeln!(
                out,
                "rationed    {}",
                if c.rationed_at_price { "yes" } else { "no" }
            )?;
            writeln!(out, "recorded    {:.2} EUR/MWh", record.actual_price)?;
            for f in c.supply.iter().filter(|f| f.accepted > 0.0) {
                writeln!(
                    out,
                    "  offer {:<24} {:>10.2} {:>12.3}",
                    f.segment.unit_id, f.segment.price, f.accepted
                )?;
            }
            for f in c.demand.iter().filter(|f| f.accepted > 0.0) {
                writeln!(
                    out,
                    "  bid   {:<24} {:>10.2} {:>12.3}",
                    f.segment.agent_id, f.segment.price, f.accepted
                )?;
            }
            Ok(())
        }
        Command::Cf {
            input,
            scenario,
            config,
            out: dir,
            format,
            rents_in_cf,
            recompute_gc,
            blanket_hydro_shift,
            period_average_dc,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            cfg.sensitivity.rents_in_cf |= rents_in_cf;
            cfg.sensitivity.recompute_gc |= recompute_gc;
            cfg.sensitivity.blanket_hydro_shift |= blanket_hydro_shift;
            cfg.sensitivity.period_average_dc |= period_average_dc;
            cfg.validate()?;
            let scenario = scenario.or(cfg.scenario).ok_or_else(|| {
                CliError::Usage("no scenario: pass --scenario or set it in the config".into())
            })?;
            let format = format.unwrap_or(cfg.output.format);
            let records = read_dataset(&input, cfg.mechanism.demand_ceiling)?;
            let result = run_horizon(&records, scenario, &cfg.engine_options())?;
            let impact = ImpactReport::build(&result)?;
            let report = Report::new(&result, &impact);
            let written = emit_report(&report, format, &dir)?;
            writeln!(out, "scenario {scenario}, {} hours", report.hours)?;
            writeln!(
                out,
                "{:<34} {:>14} {:>14} {:>12} {:>8}",
                "row", "actual", "counterfactual", "delta", "%"
            )?;
            for r in &report.summary {
                let pct = r.pct_delta.map_or(String::from("-"), |p| format!("{p:.1}"));
                writeln!(
                    out,
                    "{:<34} {:>14.3} {:>14.3} {:>12.3} {:>8}",
                    format!("{} ({})", r.label, r.unit),
                    r.actual,
                    r.counterfactual,
                    r.delta,
                    pct
                )?;
            }
            for p in written {
                writeln!(out, "wrote {}", p.display())?;
            }
            Ok(())
        }
        Command::Validate {
            input,
            tolerance,
            config,
        } => {
            let cfg = load_config(config.as_ref())?;
            let tolerance = tolerance.unwrap_or(cfg.tolerances.validation_eur_mwh);
            if !(tolerance.is_finite() && tolerance >= 0.0) {
                return Err(CliError::Usage(format!(
                    "tolerance {tolerance} must be >= 0"
                )));
            }
            let records = read_dataset(&input, cfg.mechanism.demand_ceiling)?;
            write!(out, "{}", validate_dataset(&records, tolerance))?;
            Ok(())
        }
        Command::Synth {
            spec,
            seed,
            out: path,
            hours,
        } => {
            let mut spec = match spec {
                Some(p) => SynthSpec::load(p)?,
                None => SynthSpec::default(),
            };
            if let Some(h) = hours {
                spec.hours = h;
            }
            let n = write_synthetic(&spec, seed, &path)?;
            writeln!(out, "wrote {n} hours to {}", path.display())?;
            Ok(())
        }
        Command::ReportMerge { out: dir, reports } => {
            let merged = merge_reports(&reports, &dir)?;
            writeln!(
                out,
                "merged {} reports into {}",
                merged.reports.len(),
                dir.display()
            )?;
            Ok(())
        }
    }
}
