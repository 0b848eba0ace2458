//! Normalised CSV files, so backtests never reparse raw archives.
//!
//! Forecasts: `run_time,target_time,region,price`. Actuals:
//! `interval_start,region,price`. Timestamps are interval starts in market
//! local time without a zone suffix. Prices use the shortest representation
//! that parses back to the same `f64`.

use std::io::{Read, Write};

use chrono::NaiveDateTime;

use super::{
    assemble_actuals, assemble_snapshots, format_timestamp, ActualPriceSeries, LoadPolicy, Loaded,
    SnapshotIndex, TIMESTAMP_FORMAT,
};
use crate::error::{Error, Result};

pub const FORECAST_COLUMNS: [&str; 4] = ["run_time", "target_time", "region", "price"];
pub const ACTUAL_COLUMNS: [&str; 3] = ["interval_start", "region", "price"];

pub fn write_forecasts_csv<W: Write>(index: &SnapshotIndex, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FORECAST_COLUMNS)?;
    for snap in index.iter() {
        let run = format_timestamp(snap.run_time());
        for (target, price) in snap.entries() {
            w.write_record([
                &run,
                &format_timestamp(*target),
                snap.region(),
                &price.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_actuals_csv<W: Write>(series: &ActualPriceSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ACTUAL_COLUMNS)?;
    for (t, price) in series.entries() {
        w.write_record([&format_timestamp(*t), series.region(), &price.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

struct Fields<'a> {
    record: &'a csv::StringRecord,
    source_name: &'a str,
    line: u64,
}

impl Fields<'_> {
    fn get(&self, i: usize, name: &str) -> Result<&str> {
        self.record.get(i).ok_or_else(|| {
            Error::format(
                self.source_name,
                self.line,
                format!("missing column {name}"),
            )
        })
    }

    fn timestamp(&self, i: usize, name: &str) -> Result<NaiveDateTime> {
        let raw = self.get(i, name)?;
        NaiveDateTime::parse_from_str(raw, TIMESTAMP_FORMAT).map_err(|e| {
            Error::format(
                self.source_name,
                self.line,
                format!("column {name}: bad timestamp {raw:?}: {e}"),
            )
        })
    }

    fn price(&self, i: usize) -> Result<f64> {
        let raw = self.get(i, "price")?;
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| {
                Error::format(
                    self.source_name,
                    self.line,
                    format!("column price: bad value {raw:?}"),
                )
            })
    }
}

fn records<R: Read>(
    input: R,
    header: &[&str],
    source_name: &str,
    mut each: impl FnMut(Fields<'_>) -> Result<()>,
) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(input);
    let mut record = csv::StringRecord::new();
    let mut first = true;
    while reader
        .read_record(&mut record)
        .map_err(|e| match Error::from(e) {
            Error::Format { line, message, .. } => Error::format(source_name, line, message),
            other => other,
        })?
    {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if first {
            first = false;
            if record.iter().ne(header.iter().copied()) {
                return Err(Error::format(
                    source_name,
                    line,
                    format!("expected header {}", header.join(",")),
                ));
            }
            continue;
        }
        each(Fields {
            record: &record,
            source_name,
            line,
        })?;
    }
    if first {
        return Err(Error::format(source_name, 1, "empty file, header missing"));
    }
    Ok(())
}

pub fn read_forecasts_csv<R: Read>(
    input: R,
    source_name: &str,
    region: Option<&str>,
    policy: LoadPolicy,
) -> Result<Loaded<SnapshotIndex>> {
    let mut rows = Vec::new();
    records(input, &FORECAST_COLUMNS, source_name, |f| {
        rows.push((
            f.timestamp(0, "run_time")?,
            f.timestamp(1, "target_time")?,
            f.get(2, "region")?.to_string(),
            f.price(3)?,
        ));
        Ok(())
    })?;
    assemble_snapshots(rows, region, policy)
}

pub fn read_actuals_csv<R: Read>(
    input: R,
    source_name: &str,
    region: Option<&str>,
    policy: LoadPolicy,
) -> Result<Loaded<ActualPriceSeries>> {
    let mut rows = Vec::new();
    records(input, &ACTUAL_COLUMNS, source_name, |f| {
        rows.push((
            f.timestamp(0, "interval_start")?,
            f.get(1, "region")?.to_string(),
            f.price(2)?,
        ));
        Ok(())
    })?;
    assemble_actuals(rows, region, policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_must_match_exactly() {
        let text = "run_time,target,region,price\n";
        let err = read_forecasts_csv(text.as_bytes(), "f", None, LoadPolicy::FailFast).unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }), "{err}");
    }

    #[test]
    fn bad_timestamp_is_located() {
        let text = "interval_start,region,price\n2024-01-01 04:00,QLD1,1\n";
        let err = read_actuals_csv(text.as_bytes(), "a", None, LoadPolicy::FailFast).unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }), "{err}");
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(read_actuals_csv(&b""[..], "a", None, LoadPolicy::FailFast).is_err());
    }

    #[test]
    fn forecasts_round_trip() {
        let text = "run_time,target_time,region,price\n\
            2024-01-01T04:00:00,2024-01-01T04:00:00,QLD1,0.30000000000000004\n\
            2024-01-01T04:00:00,2024-01-01T04:30:00,QLD1,-1000\n";
        let loaded = read_forecasts_csv(text.as_bytes(), "f", None, LoadPolicy::FailFast).unwrap();
        let mut out = Vec::new();
        write_forecasts_csv(&loaded.value, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }
}
