use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use arbmpc_core::{Error, Result};
use chrono::{SecondsFormat, Utc};
use serde::Serialize;

/// Wall-clock facts about a run. Kept out of the data files so those depend
/// only on inputs, config and seed.
#[derive(Debug, Serialize)]
pub struct RunMeta {
    command: &'static str,
    version: &'static str,
    config: Option<PathBuf>,
    seed: Option<u64>,
    started_utc: String,
    elapsed_secs: f64,
    outputs: Vec<PathBuf>,
}

impl RunMeta {
    pub fn begin(command: &'static str, config: Option<&Path>, seed: Option<u64>) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config: config.map(Path::to_path_buf),
            seed,
            started_utc: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
            elapsed_secs: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn finish(mut self, elapsed: Duration, outputs: &[PathBuf]) -> Self {
        self.elapsed_secs = elapsed.as_secs_f64();
        self.outputs = outputs.to_vec();
        self
    }

    /// Writes `<primary>.meta.json`.
    pub fn write_beside(&self, primary: &Path) -> Result<()> {
        let mut name = primary.as_os_str().to_owned();
        name.push(".meta.json");
        let file = File::create(&name)
            .map_err(|e| Error::Io(e).context(&primary.display().to_string()))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| Error::Internal(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

/// Two whitespace-separated columns under a `#` header line, readable by
/// gnuplot, numpy.loadtxt and most spreadsheet imports.
pub fn write_plot_data(
    path: &Path,
    label: &str,
    points: impl Iterator<Item = (usize, f64)>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Io(e).context(&path.display().to_string()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# lead_time {label}")?;
    for (x, y) in points {
        writeln!(w, "{x} {y:.6}")?;
    }
    w.flush()?;
    Ok(())
}
