use std::collections::BTreeMap;
use std::io::Write;

use super::{ActualPriceSeries, SnapshotIndex};
use crate::error::{Error, Result};

pub const ERROR_STATS_HEADER: &str = "lead_time,mape_pct,max_ape_pct,samples,excluded";

/// Actual half-hour means smaller than this in magnitude are left out of
/// percentage errors.
const MIN_ACTUAL: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadStats {
    /// Half-hours ahead, 1 for the run's own interval.
    pub lead_time: usize,
    /// NaN when every sample at this lead was excluded.
    pub mape_pct: f64,
    pub max_ape_pct: f64,
    pub samples: usize,
    /// Pairs dropped because the actual mean was below $1/MWh in magnitude.
    pub excluded: usize,
}

#[derive(Default)]
struct Acc {
    sum: f64,
    max: f64,
    samples: usize,
    excluded: usize,
}

/// Absolute percentage error of each forecast entry against the mean of the
/// six actual 5-minute prices in its half-hour, grouped by lead time.
pub fn forecast_error_stats(
    snapshots: &SnapshotIndex,
    actuals: &ActualPriceSeries,
) -> Result<Vec<LeadStats>> {
    let mut by_lead: BTreeMap<usize, Acc> = BTreeMap::new();
    for snap in snapshots.iter() {
        for &(target, forecast) in snap.entries() {
            let Some(actual) = actuals.interval_mean(target) else {
                continue;
            };
            let acc = by_lead.entry(snap.lead_of(target)).or_default();
            if actual.abs() < MIN_ACTUAL {
                acc.excluded += 1;
                continue;
            }
            let ape = 100.0 * (forecast - actual).abs() / actual.abs();
            acc.sum += ape;
            acc.max = acc.max.max(ape);
            acc.samples += 1;
        }
    }
    if by_lead.is_empty() {
        return Err(Error::coverage(
            "forecasts and actual prices do not overlap",
        ));
    }
    Ok(by_lead
        .into_iter()
        .map(|(lead_time, a)| LeadStats {
            lead_time,
            mape_pct: if a.samples == 0 {
                f64::NAN
            } else {
                a.sum / a.samples as f64
            },
            max_ape_pct: if a.samples == 0 { f64::NAN } else { a.max },
            samples: a.samples,
            excluded: a.excluded,
        })
        .collect())
}

pub fn write_error_stats_csv<W: Write>(stats: &[LeadStats], mut out: W) -> Result<()> {
    writeln!(out, "{ERROR_STATS_HEADER}")?;
    for s in stats {
        writeln!(
            out,
            "{},{:.6},{:.6},{},{}",
            s.lead_time, s.mape_pct, s.max_ape_pct, s.samples, s.excluded
        )?;
    }
    Ok(())
}
