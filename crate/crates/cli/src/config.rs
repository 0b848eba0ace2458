use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use arbmpc_core::marketdata::{load_actuals, load_forecasts, read_actuals_csv, read_forecasts_csv};
use arbmpc_core::{
    synth_generate, AemoTableSpec, BacktestConfig, BatteryParams, DiscountSpec, Error, LoadPolicy,
    MarketData, MissingSnapshotPolicy, Result, SolverSettings, SynthConfig,
};
use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

/// The JSON run configuration shared by `backtest`, `sweep` and
/// `error-stats`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub version: u32,
    #[serde(default)]
    pub battery: BatteryParams,
    #[serde(default)]
    pub discount: DiscountSpec,
    pub data: DataSection,
    #[serde(default)]
    pub window: Option<Window>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub policy: MissingSnapshotPolicy,
    /// Defaults to the battery's lower SOC bound.
    #[serde(default)]
    pub initial_soc: Option<f64>,
    #[serde(default = "default_warm_start")]
    pub warm_start: bool,
}

fn default_warm_start() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
}

/// Exactly one source: a raw AEMO archive (`raw_dir` + `actuals_file`),
/// normalised CSVs (`forecasts_file` + `actuals_file`) or `synthetic`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default)]
    pub raw_dir: Option<PathBuf>,
    #[serde(default)]
    pub forecasts_file: Option<PathBuf>,
    #[serde(default)]
    pub actuals_file: Option<PathBuf>,
    #[serde(default)]
    pub table_spec: Option<TableSpecs>,
    #[serde(default)]
    pub synthetic: Option<SynthConfig>,
    #[serde(default)]
    pub region: Option<String>,
    #[serde(default)]
    pub load_policy: LoadPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpecs {
    #[serde(default = "AemoTableSpec::predispatch")]
    pub forecasts: AemoTableSpec,
    #[serde(default = "AemoTableSpec::dispatch")]
    pub actuals: AemoTableSpec,
}

impl Default for TableSpecs {
    fn default() -> Self {
        Self {
            forecasts: AemoTableSpec::predispatch(),
            actuals: AemoTableSpec::dispatch(),
        }
    }
}

impl TableSpecs {
    /// Applies a region filter to both tables unless they name their own.
    pub fn with_region(mut self, region: Option<&str>) -> Self {
        if let Some(r) = region {
            self.forecasts.region.get_or_insert_with(|| r.to_string());
            self.actuals.region.get_or_insert_with(|| r.to_string());
        }
        self
    }
}

pub enum Source {
    Raw {
        dir: PathBuf,
        actuals: PathBuf,
        specs: Box<TableSpecs>,
    },
    Normalized {
        forecasts: PathBuf,
        actuals: PathBuf,
    },
    Synthetic(SynthConfig),
}

impl DataSection {
    pub fn source(&self) -> Result<Source> {
        let d = self;
        match (&d.raw_dir, &d.forecasts_file, &d.actuals_file, &d.synthetic) {
            (None, None, None, Some(s)) if d.table_spec.is_none() => {
                Ok(Source::Synthetic(s.clone()))
            }
            (Some(dir), None, Some(actuals), None) => Ok(Source::Raw {
                dir: dir.clone(),
                actuals: actuals.clone(),
                specs: Box::new(
                    d.table_spec
                        .clone()
                        .unwrap_or_default()
                        .with_region(d.region.as_deref()),
                ),
            }),
            (None, Some(forecasts), Some(actuals), None) if d.table_spec.is_none() => {
                Ok(Source::Normalized {
                    forecasts: forecasts.clone(),
                    actuals: actuals.clone(),
                })
            }
            _ => Err(Error::Config(
                "data needs exactly one of {raw_dir, actuals_file[, table_spec]}, \
                 {forecasts_file, actuals_file} or {synthetic}"
                    .into(),
            )),
        }
    }
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let file =
            File::open(path).map_err(|e| Error::Io(e).context(&path.display().to_string()))?;
        let config: Self = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {}, expected {CONFIG_VERSION}",
                self.version
            )));
        }
        self.data.source()?;
        if let Some(s) = &self.data.synthetic {
            s.validate()?;
        }
        Ok(())
    }

    /// Replaces the synthetic seed, if the data is synthetic.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(s) = &mut self.data.synthetic {
            s.seed = seed;
        }
    }

    /// Backtest settings over `window`, or over everything the data covers.
    pub fn backtest_config(&self, data: &MarketData) -> Result<BacktestConfig> {
        let (start, end) = match self.window {
            Some(w) => (w.start, w.end),
            None => data_span(data)?,
        };
        let config = BacktestConfig {
            battery: self.battery,
            discount: self.discount,
            initial_soc: self.initial_soc.unwrap_or(self.battery.soc_lower),
            start,
            end,
            solver: self.solver,
            policy: self.policy,
            warm_start: self.warm_start,
        };
        config.validate()?;
        Ok(config)
    }
}

/// From the first snapshot's run time to the end of the last settled half-hour.
fn data_span(data: &MarketData) -> Result<(NaiveDateTime, NaiveDateTime)> {
    let first = data.forecasts.iter().next().map(|s| s.run_time());
    let last = data.actuals.intervals().last();
    match (first, last) {
        (Some(a), Some(b)) if a <= b => Ok((a, b + Duration::minutes(30))),
        _ => Err(Error::coverage(
            "forecasts and actual prices share no interval",
        )),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(e).context(&path.display().to_string()))
}

pub fn read_normalized(
    forecasts: &Path,
    actuals: &Path,
    region: Option<&str>,
    policy: LoadPolicy,
) -> Result<MarketData> {
    let f = read_forecasts_csv(
        open(forecasts)?,
        &forecasts.display().to_string(),
        region,
        policy,
    )?;
    let a = read_actuals_csv(
        open(actuals)?,
        &actuals.display().to_string(),
        region,
        policy,
    )?;
    Ok(MarketData {
        forecasts: f.value,
        actuals: a.value,
    })
}

pub fn read_raw(
    dir: &Path,
    actuals: &Path,
    specs: &TableSpecs,
    policy: LoadPolicy,
) -> Result<MarketData> {
    let f = load_forecasts(dir, &specs.forecasts, policy)?;
    let a = load_actuals(actuals, &specs.actuals, policy)?;
    log::info!(
        "loaded {} forecast rows into {} snapshots, {} actual prices",
        f.rows,
        f.value.len(),
        a.value.len()
    );
    Ok(MarketData {
        forecasts: f.value,
        actuals: a.value,
    })
}

pub fn load_data(section: &DataSection) -> Result<MarketData> {
    match section.source()? {
        Source::Synthetic(s) => synth_generate(&s),
        Source::Raw {
            dir,
            actuals,
            specs,
        } => read_raw(&dir, &actuals, &specs, section.load_policy),
        Source::Normalized { forecasts, actuals } => read_normalized(
            &forecasts,
            &actuals,
            section.region.as_deref(),
            section.load_policy,
        ),
    }
}
