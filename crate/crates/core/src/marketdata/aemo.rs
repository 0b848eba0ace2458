//! AEMO CSV interchange files.
//!
//! Each line starts with a record type: `C` comment, `I` column header for a
//! (report, table) pair, `D` data laid out like the latest `I` for its pair.
//! Several tables may be interleaved in one file.

use std::collections::HashMap;
use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    assemble_actuals, assemble_snapshots, ActualPriceSeries, LoadPolicy, Loaded, SnapshotIndex,
    ACTUAL_STEP_MINUTES, FORECAST_STEP_MINUTES,
};
use crate::error::{Error, Result};

const ZIP_MAGIC: &[u8] = b"PK\x03\x04";

/// Which table to pull from a report and how to read its columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AemoTableSpec {
    pub report: String,
    pub table: String,
    pub region_column: String,
    /// `None` for tables without a run time, such as dispatch prices.
    #[serde(default)]
    pub run_time_column: Option<String>,
    pub target_column: String,
    pub price_column: String,
    #[serde(default = "default_timestamp_format")]
    pub timestamp_format: String,
    /// Target timestamps name the end of their interval, as AEMO publishes
    /// them. Loaders shift them back to interval starts.
    #[serde(default = "default_true")]
    pub interval_ending: bool,
    /// Region to keep; required when a file covers more than one.
    #[serde(default)]
    pub region: Option<String>,
}

fn default_timestamp_format() -> String {
    "%Y/%m/%d %H:%M:%S".to_string()
}

fn default_true() -> bool {
    true
}

impl AemoTableSpec {
    /// 30-minute pre-dispatch regional prices.
    pub fn predispatch() -> Self {
        Self {
            report: "PREDISPATCH".into(),
            table: "REGION_PRICES".into(),
            region_column: "REGIONID".into(),
            run_time_column: Some("PREDISPATCH_RUN_DATETIME".into()),
            target_column: "DATETIME".into(),
            price_column: "RRP".into(),
            timestamp_format: default_timestamp_format(),
            interval_ending: true,
            region: None,
        }
    }

    /// 5-minute dispatch prices.
    pub fn dispatch() -> Self {
        Self {
            report: "DISPATCH".into(),
            table: "PRICE".into(),
            region_column: "REGIONID".into(),
            run_time_column: None,
            target_column: "SETTLEMENTDATE".into(),
            price_column: "RRP".into(),
            timestamp_format: default_timestamp_format(),
            interval_ending: true,
            region: None,
        }
    }

    fn columns(&self) -> Vec<&str> {
        let mut cols = vec![self.region_column.as_str()];
        if let Some(run) = &self.run_time_column {
            cols.push(run);
        }
        cols.push(&self.target_column);
        cols.push(&self.price_column);
        cols
    }

    pub fn validate(&self) -> Result<()> {
        let cols = self.columns();
        if self.report.is_empty() || self.table.is_empty() || cols.iter().any(|c| c.is_empty()) {
            return Err(Error::Config("table spec names must be non-empty".into()));
        }
        for (i, a) in cols.iter().enumerate() {
            if cols[i + 1..].contains(a) {
                return Err(Error::Config(format!("table spec names column {a} twice")));
            }
        }
        Ok(())
    }
}

/// One data record projected onto the spec's columns. Timestamps are as
/// written in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct AemoRow {
    pub region: String,
    pub run_time: Option<NaiveDateTime>,
    pub target_time: NaiveDateTime,
    pub price: f64,
}

struct Projection {
    region: usize,
    run_time: Option<usize>,
    target: usize,
    price: usize,
}

/// Parses one C/I/D file, keeping the rows of `spec`'s table. A file without
/// that table yields no rows.
pub fn parse_aemo_csv<R: Read>(
    input: R,
    spec: &AemoTableSpec,
    source_name: &str,
) -> Result<Vec<AemoRow>> {
    spec.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut headers: HashMap<(String, String), Option<Projection>> = HashMap::new();
    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader
            .read_record(&mut record)
            .map_err(|e| match Error::from(e) {
                Error::Format { line, message, .. } => Error::format(source_name, line, message),
                other => other,
            })?;
        if !more {
            break;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let kind = record.get(0).unwrap_or("");
        match kind {
            "C" => continue,
            "I" | "D" if record.len() < 4 => {
                return Err(Error::format(
                    source_name,
                    line,
                    format!("{kind} record has fewer than 4 fields"),
                ))
            }
            "I" => {
                let key = (record[1].to_string(), record[2].to_string());
                let projection = if key.0 == spec.report && key.1 == spec.table {
                    Some(project(&record, spec, source_name, line)?)
                } else {
                    None
                };
                headers.insert(key, projection);
            }
            "D" => {
                let key = (record[1].to_string(), record[2].to_string());
                match headers.get(&key) {
                    None => {
                        return Err(Error::format(
                            source_name,
                            line,
                            format!("data record for {}/{} before its header", key.0, key.1),
                        ))
                    }
                    Some(None) => {}
                    Some(Some(p)) => rows.push(read_row(&record, p, spec, source_name, line)?),
                }
            }
            other => {
                return Err(Error::format(
                    source_name,
                    line,
                    format!("unknown record type {other:?}"),
                ));
            }
        }
    }
    Ok(rows)
}

fn project(
    record: &csv::StringRecord,
    spec: &AemoTableSpec,
    source_name: &str,
    line: u64,
) -> Result<Projection> {
    let find = |name: &str| -> Result<usize> {
        record.iter().position(|f| f == name).ok_or_else(|| {
            Error::format(
                source_name,
                line,
                format!(
                    "header for {}/{} lacks column {name}",
                    spec.report, spec.table
                ),
            )
        })
    };
    Ok(Projection {
        region: find(&spec.region_column)?,
        run_time: spec.run_time_column.as_deref().map(find).transpose()?,
        target: find(&spec.target_column)?,
        price: find(&spec.price_column)?,
    })
}

fn read_row(
    record: &csv::StringRecord,
    p: &Projection,
    spec: &AemoTableSpec,
    source_name: &str,
    line: u64,
) -> Result<AemoRow> {
    let field = |i: usize| -> Result<&str> {
        record.get(i).ok_or_else(|| {
            Error::format(source_name, line, format!("record has no column {}", i + 1))
        })
    };
    let timestamp = |i: usize, name: &str| -> Result<NaiveDateTime> {
        let raw = field(i)?;
        NaiveDateTime::parse_from_str(raw, &spec.timestamp_format).map_err(|e| {
            Error::format(
                source_name,
                line,
                format!(
                    "column {} ({name}): cannot parse timestamp {raw:?}: {e}",
                    i + 1
                ),
            )
        })
    };
    let raw_price = field(p.price)?;
    let price = raw_price
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| {
            Error::format(
                source_name,
                line,
                format!(
                    "column {} ({}): cannot parse price {raw_price:?}",
                    p.price + 1,
                    spec.price_column
                ),
            )
        })?;
    Ok(AemoRow {
        region: field(p.region)?.to_string(),
        run_time: match (p.run_time, &spec.run_time_column) {
            (Some(i), Some(name)) => Some(timestamp(i, name)?),
            _ => None,
        },
        target_time: timestamp(p.target, &spec.target_column)?,
        price,
    })
}

/// Writes rows as a single-table C/I/D file that [`parse_aemo_csv`] reads
/// back unchanged.
pub fn write_aemo_csv<W: Write>(rows: &[AemoRow], spec: &AemoTableSpec, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record(["C", "NEMP.WORLD", &spec.report, "AEMO"])?;
    let mut header = vec!["I", &spec.report, &spec.table, "1"];
    header.extend(spec.columns());
    w.write_record(&header)?;
    for row in rows {
        let mut record = vec![
            "D".to_string(),
            spec.report.clone(),
            spec.table.clone(),
            "1".to_string(),
            row.region.clone(),
        ];
        if spec.run_time_column.is_some() {
            let run = row
                .run_time
                .ok_or_else(|| Error::argument("row without run time for a table that has one"))?;
            record.push(run.format(&spec.timestamp_format).to_string());
        }
        record.push(row.target_time.format(&spec.timestamp_format).to_string());
        record.push(format!("{}", row.price));
        w.write_record(&record)?;
    }
    w.write_record(["C", "END OF REPORT", &(rows.len() + 3).to_string()])?;
    w.flush()?;
    Ok(())
}

/// Reads a file, unpacking it if it is a single-entry zip archive.
pub fn read_source(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    if !bytes.starts_with(ZIP_MAGIC) {
        return Ok(bytes);
    }
    let mut archive = zip::ZipArchive::new(Cursor::new(bytes))?;
    let files: Vec<usize> = (0..archive.len())
        .filter(|&i| archive.by_index(i).map(|f| f.is_file()).unwrap_or(false))
        .collect();
    if files.len() != 1 {
        return Err(Error::format(
            path.display().to_string(),
            0,
            format!("zip archive holds {} files, expected one", files.len()),
        ));
    }
    let mut entry = archive.by_index(files[0])?;
    let mut out = Vec::new();
    entry.read_to_end(&mut out)?;
    Ok(out)
}

fn parse_path(path: &Path, spec: &AemoTableSpec) -> Result<Vec<AemoRow>> {
    let bytes = read_source(path)?;
    parse_aemo_csv(bytes.as_slice(), spec, &path.display().to_string())
}

/// `.csv` and `.zip` files under `dir` (not recursive), sorted by name.
fn data_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("csv" | "zip")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn parse_all(paths: &[PathBuf], spec: &AemoTableSpec) -> Result<Vec<AemoRow>> {
    let parsed: Vec<Result<Vec<AemoRow>>> = paths.par_iter().map(|p| parse_path(p, spec)).collect();
    let mut rows = Vec::new();
    for r in parsed {
        rows.extend(r?);
    }
    Ok(rows)
}

fn shift(t: NaiveDateTime, spec: &AemoTableSpec, step_minutes: i64) -> NaiveDateTime {
    if spec.interval_ending {
        t - Duration::minutes(step_minutes)
    } else {
        t
    }
}

/// Loads every pre-dispatch file in `dir` into snapshots keyed by run time.
pub fn load_forecasts(
    dir: &Path,
    spec: &AemoTableSpec,
    policy: LoadPolicy,
) -> Result<Loaded<SnapshotIndex>> {
    if spec.run_time_column.is_none() {
        return Err(Error::Config(
            "forecast table spec needs a run time column".into(),
        ));
    }
    let rows = parse_all(&data_files(dir)?, spec)?;
    let rows = rows
        .into_iter()
        .map(|r| {
            let run = r.run_time.expect("run time column present");
            (
                run,
                shift(r.target_time, spec, FORECAST_STEP_MINUTES),
                r.region,
                r.price,
            )
        })
        .collect();
    assemble_snapshots(rows, spec.region.as_deref(), policy)
}

/// Loads 5-minute actual prices from one file or every file in a directory.
pub fn load_actuals(
    path: &Path,
    spec: &AemoTableSpec,
    policy: LoadPolicy,
) -> Result<Loaded<ActualPriceSeries>> {
    let paths = if path.is_dir() {
        data_files(path)?
    } else {
        vec![path.to_path_buf()]
    };
    let rows = parse_all(&paths, spec)?
        .into_iter()
        .map(|r| {
            (
                shift(r.target_time, spec, ACTUAL_STEP_MINUTES),
                r.region,
                r.price,
            )
        })
        .collect();
    assemble_actuals(rows, spec.region.as_deref(), policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dispatch_spec() -> AemoTableSpec {
        AemoTableSpec::dispatch()
    }

    #[test]
    fn one_header_two_rows() {
        let text = "C,NEMP.WORLD,DISPATCHIS\n\
            I,DISPATCH,PRICE,1,SETTLEMENTDATE,RUNNO,REGIONID,RRP\n\
            D,DISPATCH,PRICE,1,\"2024/01/01 04:05:00\",1,QLD1,55.5\n\
            D,DISPATCH,PRICE,1,\"2024/01/01 04:10:00\",1,QLD1,-12\n";
        let rows = parse_aemo_csv(text.as_bytes(), &dispatch_spec(), "t").unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].price, -12.0);
        assert_eq!(rows[0].run_time, None);
    }

    #[test]
    fn data_before_header_is_a_format_error() {
        let text = "C,comment\nD,DISPATCH,PRICE,1,x\n";
        match parse_aemo_csv(text.as_bytes(), &dispatch_spec(), "t").unwrap_err() {
            Error::Format { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn bad_price_names_line_and_column() {
        let text = "I,DISPATCH,PRICE,1,SETTLEMENTDATE,REGIONID,RRP\n\
            D,DISPATCH,PRICE,1,2024/01/01 04:05:00,QLD1,abc\n";
        let err = parse_aemo_csv(text.as_bytes(), &dispatch_spec(), "t").unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("t:2:") && msg.contains("column 7"), "{msg}");
    }

    #[test]
    fn missing_column_in_matching_header() {
        let text = "I,DISPATCH,PRICE,1,SETTLEMENTDATE,REGIONID\n";
        assert!(parse_aemo_csv(text.as_bytes(), &dispatch_spec(), "t").is_err());
    }

    #[test]
    fn other_tables_and_missing_table() {
        let text =
            "I,DISPATCH,CASESOLUTION,1,SETTLEMENTDATE,X\nD,DISPATCH,CASESOLUTION,1,whatever,1\n";
        assert!(parse_aemo_csv(text.as_bytes(), &dispatch_spec(), "t")
            .unwrap()
            .is_empty());
    }

    #[test]
    fn spec_with_repeated_column_is_rejected() {
        let mut spec = dispatch_spec();
        spec.price_column = spec.region_column.clone();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn write_then_parse_is_identity() {
        let spec = AemoTableSpec::predispatch();
        let t = |s: &str| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M").unwrap();
        let rows = vec![
            AemoRow {
                region: "QLD1".into(),
                run_time: Some(t("2024-01-01 04:00")),
                target_time: t("2024-01-01 04:30"),
                price: 0.1 + 0.2,
            },
            AemoRow {
                region: "QLD1".into(),
                run_time: Some(t("2024-01-01 04:00")),
                target_time: t("2024-01-01 05:00"),
                price: -1000.0,
            },
        ];
        let mut buf = Vec::new();
        write_aemo_csv(&rows, &spec, &mut buf).unwrap();
        assert_eq!(parse_aemo_csv(buf.as_slice(), &spec, "t").unwrap(), rows);
    }

    #[test]
    fn single_file_zip_is_unpacked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.zip");
        let mut zw = zip::ZipWriter::new(fs::File::create(&path).unwrap());
        zw.start_file("a.csv", zip::write::SimpleFileOptions::default())
            .unwrap();
        zw.write_all(b"C,hello\n").unwrap();
        zw.finish().unwrap();
        assert_eq!(read_source(&path).unwrap(), b"C,hello\n");
    }
}
