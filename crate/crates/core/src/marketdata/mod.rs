//! Forecast snapshots and settlement prices: AEMO ingestion, the normalised
//! CSV layout, synthetic scenarios and forecast-error statistics.

mod aemo;
mod normalized;
mod stats;
mod synth;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDateTime};

use crate::domain::{is_five_minute_aligned, is_half_hour_aligned, MAX_HORIZON};
use crate::error::{Error, Result};

pub use aemo::{
    load_actuals, load_forecasts, parse_aemo_csv, read_source, write_aemo_csv, AemoRow,
    AemoTableSpec,
};
pub use normalized::{
    read_actuals_csv, read_forecasts_csv, write_actuals_csv, write_forecasts_csv, ACTUAL_COLUMNS,
    FORECAST_COLUMNS,
};
pub use stats::{forecast_error_stats, write_error_stats_csv, LeadStats, ERROR_STATS_HEADER};
pub use synth::{synth_generate, SynthConfig};

/// Timestamp layout of the normalised CSV files.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
pub const SAMPLES_PER_INTERVAL: usize = 6;
const FORECAST_STEP_MINUTES: i64 = 30;
const ACTUAL_STEP_MINUTES: i64 = 5;

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

/// Mean of one half-hour's 5-minute prices. Settlement and error statistics
/// both go through this so they agree to the bit.
pub fn interval_mean(prices: &[f64]) -> f64 {
    prices.iter().sum::<f64>() / prices.len() as f64
}

/// How loaders react to a snapshot or half-hour that breaks an invariant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadPolicy {
    #[default]
    FailFast,
    SkipWithWarning,
}

/// A loaded value with the row count it came from and whatever was skipped.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub value: T,
    pub rows: usize,
    pub diagnostics: Vec<String>,
}

/// One pre-dispatch run: prices for consecutive half-hours starting at or
/// after `run_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSnapshot {
    run_time: NaiveDateTime,
    region: String,
    entries: Vec<(NaiveDateTime, f64)>,
}

impl ForecastSnapshot {
    pub fn new(
        run_time: NaiveDateTime,
        region: impl Into<String>,
        entries: Vec<(NaiveDateTime, f64)>,
    ) -> Result<Self> {
        if !is_half_hour_aligned(run_time) {
            return Err(Error::validation(format!(
                "snapshot run time {run_time} is not half-hour aligned"
            )));
        }
        if entries.is_empty() || entries.len() > MAX_HORIZON {
            return Err(Error::validation(format!(
                "snapshot {run_time} has {} entries, expected 1 to {MAX_HORIZON}",
                entries.len()
            )));
        }
        if entries[0].0 < run_time {
            return Err(Error::validation(format!(
                "snapshot {run_time} starts at {}, before its run time",
                entries[0].0
            )));
        }
        if !is_half_hour_aligned(entries[0].0) {
            return Err(Error::validation(format!(
                "snapshot {run_time} target {} is not half-hour aligned",
                entries[0].0
            )));
        }
        for w in entries.windows(2) {
            if w[1].0 - w[0].0 != Duration::minutes(FORECAST_STEP_MINUTES) {
                return Err(Error::validation(format!(
                    "snapshot {run_time} is not consecutive between {} and {}",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some((t, p)) = entries.iter().find(|(_, p)| !p.is_finite()) {
            return Err(Error::validation(format!(
                "snapshot {run_time} has non-finite price {p} at {t}"
            )));
        }
        Ok(Self {
            run_time,
            region: region.into(),
            entries,
        })
    }

    pub fn run_time(&self) -> NaiveDateTime {
        self.run_time
    }

    pub fn region(&self) -> &str {
        &self.region
    }

    pub fn entries(&self) -> &[(NaiveDateTime, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Lead time of `target` in half-hours, 1 for the run's own interval.
    pub fn lead_of(&self, target: NaiveDateTime) -> usize {
        ((target - self.run_time).num_minutes() / FORECAST_STEP_MINUTES) as usize + 1
    }

    /// Prices from interval `start` onwards, at most `max_len` of them.
    /// `None` unless the snapshot has an entry for `start` itself.
    pub fn window(&self, start: NaiveDateTime, max_len: usize) -> Option<Vec<f64>> {
        let first = self.entries.iter().position(|(t, _)| *t == start)?;
        Some(
            self.entries[first..]
                .iter()
                .take(max_len)
                .map(|(_, p)| *p)
                .collect(),
        )
    }
}

/// Snapshots keyed by run time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SnapshotIndex {
    map: BTreeMap<NaiveDateTime, ForecastSnapshot>,
}

impl SnapshotIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a snapshot, returning the one it replaced.
    pub fn insert(&mut self, snapshot: ForecastSnapshot) -> Option<ForecastSnapshot> {
        self.map.insert(snapshot.run_time, snapshot)
    }

    pub fn get(&self, run_time: NaiveDateTime) -> Option<&ForecastSnapshot> {
        self.map.get(&run_time)
    }

    /// The snapshot with the greatest run time not after `t`.
    pub fn latest_at_or_before(&self, t: NaiveDateTime) -> Option<&ForecastSnapshot> {
        self.map.range(..=t).next_back().map(|(_, s)| s)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ForecastSnapshot> {
        self.map.values()
    }
}

impl FromIterator<ForecastSnapshot> for SnapshotIndex {
    fn from_iter<I: IntoIterator<Item = ForecastSnapshot>>(iter: I) -> Self {
        let mut index = SnapshotIndex::new();
        for s in iter {
            index.insert(s);
        }
        index
    }
}

/// 5-minute settlement prices, complete half-hours only.
#[derive(Debug, Clone, PartialEq)]
pub struct ActualPriceSeries {
    region: String,
    entries: Vec<(NaiveDateTime, f64)>,
    /// Half-hour start to position of its first 5-minute entry.
    index: BTreeMap<NaiveDateTime, usize>,
}

impl ActualPriceSeries {
    /// Entries must be sorted, 5-minute aligned, and come in complete
    /// half-hours of six.
    pub fn new(region: impl Into<String>, entries: Vec<(NaiveDateTime, f64)>) -> Result<Self> {
        let mut index = BTreeMap::new();
        let mut i = 0;
        while i < entries.len() {
            let start = entries[i].0;
            if !is_half_hour_aligned(start) {
                let half_hour = crate::domain::half_hour_floor(start);
                return Err(Error::validation(format!(
                    "actual prices for half-hour {half_hour} are missing interval {}",
                    missing_interval(&entries[i..], half_hour)
                )));
            }
            for j in 0..SAMPLES_PER_INTERVAL {
                let expected = start + Duration::minutes(ACTUAL_STEP_MINUTES * j as i64);
                match entries.get(i + j) {
                    Some((t, p)) if *t == expected => {
                        if !p.is_finite() {
                            return Err(Error::validation(format!(
                                "actual price at {t} is not finite"
                            )));
                        }
                    }
                    _ => {
                        return Err(Error::validation(format!(
                            "actual prices for half-hour {start} are missing interval {expected}"
                        )))
                    }
                }
            }
            if let Some((prev, _)) = index.last_key_value() {
                if *prev >= start {
                    return Err(Error::validation(format!(
                        "actual prices are not sorted at {start}"
                    )));
                }
            }
            index.insert(start, i);
            i += SAMPLES_PER_INTERVAL;
        }
        Ok(Self {
            region: region.into(),
            entries,
            index,
        })
    }

    pub fn region(&self) -> &str {
        &self.region
    }

    pub fn entries(&self) -> &[(NaiveDateTime, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The six 5-minute prices of the half-hour starting at `start`.
    pub fn interval_prices(&self, start: NaiveDateTime) -> Option<[f64; SAMPLES_PER_INTERVAL]> {
        let &i = self.index.get(&start)?;
        let mut out = [0.0; SAMPLES_PER_INTERVAL];
        for (o, (_, p)) in out
            .iter_mut()
            .zip(&self.entries[i..i + SAMPLES_PER_INTERVAL])
        {
            *o = *p;
        }
        Some(out)
    }

    pub fn interval_mean(&self, start: NaiveDateTime) -> Option<f64> {
        self.interval_prices(start).map(|p| interval_mean(&p))
    }

    /// Starts of the covered half-hours, ascending.
    pub fn intervals(&self) -> impl Iterator<Item = NaiveDateTime> + '_ {
        self.index.keys().copied()
    }
}

fn missing_interval(entries: &[(NaiveDateTime, f64)], half_hour: NaiveDateTime) -> NaiveDateTime {
    (0..SAMPLES_PER_INTERVAL as i64)
        .map(|j| half_hour + Duration::minutes(ACTUAL_STEP_MINUTES * j))
        .find(|t| {
            !entries
                .iter()
                .take(SAMPLES_PER_INTERVAL)
                .any(|(e, _)| e == t)
        })
        .unwrap_or(half_hour)
}

/// Forecasts and settlement prices for one region.
#[derive(Debug, Clone)]
pub struct MarketData {
    pub forecasts: SnapshotIndex,
    pub actuals: ActualPriceSeries,
}

/// A normalised forecast row: `(run_time, target_time, region, price)`,
/// target times marking interval starts.
pub type ForecastRow = (NaiveDateTime, NaiveDateTime, String, f64);

fn pick_region<'a>(
    regions: impl Iterator<Item = &'a str>,
    wanted: Option<&str>,
) -> Result<Option<String>> {
    let seen: BTreeSet<&str> = regions.collect();
    match wanted {
        Some(w) => Ok(Some(w.to_string())),
        None if seen.len() > 1 => Err(Error::validation(format!(
            "rows cover several regions ({}); select one",
            seen.into_iter().collect::<Vec<_>>().join(", ")
        ))),
        None => Ok(seen.into_iter().next().map(str::to_string)),
    }
}

fn reject_or_warn(
    policy: LoadPolicy,
    diagnostics: &mut Vec<String>,
    message: String,
) -> Result<()> {
    match policy {
        LoadPolicy::FailFast => Err(Error::validation(message)),
        LoadPolicy::SkipWithWarning => {
            log::warn!("{message}");
            diagnostics.push(message);
            Ok(())
        }
    }
}

/// Groups forecast rows into snapshots. Rows repeated with an identical
/// price collapse; conflicting repeats invalidate their snapshot.
pub fn assemble_snapshots(
    rows: Vec<ForecastRow>,
    region: Option<&str>,
    policy: LoadPolicy,
) -> Result<Loaded<SnapshotIndex>> {
    let total = rows.len();
    let region = pick_region(rows.iter().map(|r| r.2.as_str()), region)?;
    let mut grouped: BTreeMap<NaiveDateTime, BTreeMap<NaiveDateTime, Vec<f64>>> = BTreeMap::new();
    for (run, target, reg, price) in rows {
        if Some(&reg) != region.as_ref() {
            continue;
        }
        grouped
            .entry(run)
            .or_default()
            .entry(target)
            .or_default()
            .push(price);
    }

    let mut index = SnapshotIndex::new();
    let mut diagnostics = Vec::new();
    let region = region.unwrap_or_default();
    'runs: for (run, targets) in grouped {
        let mut entries = Vec::with_capacity(targets.len());
        for (target, prices) in targets {
            if prices.iter().any(|p| p.to_bits() != prices[0].to_bits()) {
                reject_or_warn(
                    policy,
                    &mut diagnostics,
                    format!("snapshot {run}: conflicting prices for {target}: {prices:?}"),
                )?;
                continue 'runs;
            }
            entries.push((target, prices[0]));
        }
        match ForecastSnapshot::new(run, region.clone(), entries) {
            Ok(s) => {
                index.insert(s);
            }
            Err(e) => reject_or_warn(policy, &mut diagnostics, e.to_string())?,
        }
    }
    Ok(Loaded {
        value: index,
        rows: total,
        diagnostics,
    })
}

/// Builds a settlement series from `(interval_start, region, price)` rows in
/// any order. Incomplete half-hours are errors under fail-fast and dropped
/// otherwise.
pub fn assemble_actuals(
    rows: Vec<(NaiveDateTime, String, f64)>,
    region: Option<&str>,
    policy: LoadPolicy,
) -> Result<Loaded<ActualPriceSeries>> {
    let total = rows.len();
    let region = pick_region(rows.iter().map(|r| r.1.as_str()), region)?;
    let mut diagnostics = Vec::new();
    let mut by_half_hour: BTreeMap<NaiveDateTime, BTreeMap<NaiveDateTime, Vec<f64>>> =
        BTreeMap::new();
    for (t, reg, price) in rows {
        if Some(&reg) != region.as_ref() {
            continue;
        }
        if !is_five_minute_aligned(t) {
            reject_or_warn(
                policy,
                &mut diagnostics,
                format!("actual price at {t} is not 5-minute aligned"),
            )?;
            continue;
        }
        by_half_hour
            .entry(crate::domain::half_hour_floor(t))
            .or_default()
            .entry(t)
            .or_default()
            .push(price);
    }

    let mut entries = Vec::with_capacity(by_half_hour.len() * SAMPLES_PER_INTERVAL);
    'half_hours: for (start, samples) in by_half_hour {
        let mut chunk = Vec::with_capacity(SAMPLES_PER_INTERVAL);
        for (t, prices) in &samples {
            if prices.iter().any(|p| p.to_bits() != prices[0].to_bits()) {
                reject_or_warn(
                    policy,
                    &mut diagnostics,
                    format!("conflicting actual prices for {t}: {prices:?}"),
                )?;
                continue 'half_hours;
            }
            chunk.push((*t, prices[0]));
        }
        if chunk.len() != SAMPLES_PER_INTERVAL {
            let missing = missing_interval(&chunk, start);
            reject_or_warn(
                policy,
                &mut diagnostics,
                format!("actual prices for half-hour {start} are missing interval {missing}"),
            )?;
            continue;
        }
        entries.extend(chunk);
    }
    Ok(Loaded {
        value: ActualPriceSeries::new(region.unwrap_or_default(), entries)?,
        rows: total,
        diagnostics,
    })
}
