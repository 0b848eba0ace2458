//! `arbmpc`: ingest market data, run backtests and sweeps, and report
//! forecast errors.
//!
//! Exit codes: 0 success, 1 I/O, 2 configuration or format error, 3 data
//! coverage.

mod config;
mod output;

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use arbmpc_core::marketdata::{
    load_actuals, load_forecasts, write_actuals_csv, write_error_stats_csv, write_forecasts_csv,
    ACTUAL_COLUMNS, ERROR_STATS_HEADER, FORECAST_COLUMNS,
};
use arbmpc_core::{
    annual_profit, compare_report, forecast_error_stats, run_backtest, run_sweep, synth_generate,
    Error, LoadPolicy, MarketData, Result, Scheme, StepStatus, SweepGrid, SynthConfig,
};
use clap::{Args, Parser, Subcommand};

use config::{load_data, read_raw, RunConfigFile, TableSpecs};
use output::{write_plot_data, RunMeta};

#[derive(Parser, Debug)]
#[command(
    name = "arbmpc",
    version,
    about = "Battery arbitrage MPC backtests on price forecasts"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file, or directory for `parse` and `synth`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for `sweep`.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Overrides the synthetic data seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normalise AEMO reports into forecast and actual CSVs.
    Parse(ParseArgs),
    /// Write a synthetic forecast/actual CSV pair.
    Synth(SynthArgs),
    /// Run one backtest and write its ledger.
    Backtest,
    /// Run the baseline and a hyperparameter grid.
    Sweep(GridArgs),
    /// Forecast error by lead time.
    ErrorStats(ErrorStatsArgs),
}

#[derive(Args, Debug)]
struct ParseArgs {
    /// Directory of pre-dispatch reports (.csv or single-file .zip).
    #[arg(long)]
    forecasts: Option<PathBuf>,
    /// Dispatch price report, or a directory of them.
    #[arg(long)]
    actuals: Option<PathBuf>,
    /// JSON `{forecasts, actuals}` table specs; AEMO defaults otherwise.
    #[arg(long)]
    table_spec: Option<PathBuf>,
    #[arg(long)]
    region: Option<String>,
    /// Drop invalid snapshots and intervals with a warning instead of failing.
    #[arg(long)]
    skip_invalid: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    days: Option<usize>,
    /// First trading day, YYYY-MM-DD.
    #[arg(long)]
    start: Option<chrono::NaiveDate>,
    #[arg(long)]
    noise_scale: Option<f64>,
    #[arg(long)]
    spike_probability: Option<f64>,
}

#[derive(Args, Debug)]
struct GridArgs {
    /// Comma-separated, from simulated_anneal, cosine_anneal, power_law.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    #[arg(long, value_delimiter = ',')]
    gamma0s: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    norms: Option<Vec<u8>>,
}

#[derive(Args, Debug)]
struct ErrorStatsArgs {
    /// Pre-dispatch report directory or a normalised forecast CSV.
    #[arg(long)]
    forecasts: Option<PathBuf>,
    /// Dispatch report(s) or a normalised actuals CSV.
    #[arg(long)]
    actuals: Option<PathBuf>,
    #[arg(long)]
    region: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let started = Instant::now();
    let meta = RunMeta::begin(cli_name(&cli.command), cli.config.as_deref(), cli.seed);
    let written = match &cli.command {
        Command::Parse(args) => cmd_parse(cli, args)?,
        Command::Synth(args) => cmd_synth(cli, args)?,
        Command::Backtest => cmd_backtest(cli)?,
        Command::Sweep(args) => cmd_sweep(cli, args)?,
        Command::ErrorStats(args) => cmd_error_stats(cli, args)?,
    };
    if let Some(primary) = written.first() {
        meta.finish(started.elapsed(), &written)
            .write_beside(primary)?;
    }
    Ok(())
}

fn cli_name(c: &Command) -> &'static str {
    match c {
        Command::Parse(_) => "parse",
        Command::Synth(_) => "synth",
        Command::Backtest => "backtest",
        Command::Sweep(_) => "sweep",
        Command::ErrorStats(_) => "error-stats",
    }
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::argument(format!("{flag} is required")))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io(e).context(&dir.display().to_string()))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(e).context(&path.display().to_string()))
}

fn finish(mut w: BufWriter<File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

fn load_config(cli: &Cli) -> Result<RunConfigFile> {
    let mut config = RunConfigFile::load(require(&cli.config, "--config")?)?;
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }
    Ok(config)
}

fn cmd_parse(cli: &Cli, args: &ParseArgs) -> Result<Vec<PathBuf>> {
    let out = require(&cli.out, "--out")?;
    if args.forecasts.is_none() && args.actuals.is_none() {
        return Err(Error::argument("parse needs --forecasts and/or --actuals"));
    }
    let specs = match &args.table_spec {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Io(e).context(&p.display().to_string()))?;
            serde_json::from_str::<TableSpecs>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => TableSpecs::default(),
    }
    .with_region(args.region.as_deref());
    specs.forecasts.validate()?;
    specs.actuals.validate()?;
    let policy = if args.skip_invalid {
        LoadPolicy::SkipWithWarning
    } else {
        LoadPolicy::FailFast
    };

    let mut written = Vec::new();
    if let Some(dir) = &args.forecasts {
        let loaded = load_forecasts(dir, &specs.forecasts, policy)?;
        report_load(
            "forecast",
            loaded.rows,
            loaded.value.len(),
            "snapshots",
            &loaded.diagnostics,
        );
        let path = out.join("forecasts.csv");
        let mut w = create(&path)?;
        write_forecasts_csv(&loaded.value, &mut w)?;
        finish(w)?;
        written.push(path);
    }
    if let Some(src) = &args.actuals {
        let loaded = load_actuals(src, &specs.actuals, policy)?;
        report_load(
            "actual",
            loaded.rows,
            loaded.value.len(),
            "prices",
            &loaded.diagnostics,
        );
        let path = out.join("actuals.csv");
        let mut w = create(&path)?;
        write_actuals_csv(&loaded.value, &mut w)?;
        finish(w)?;
        written.push(path);
    }
    Ok(written)
}

fn report_load(kind: &str, rows: usize, kept: usize, unit: &str, diagnostics: &[String]) {
    eprintln!(
        "{kind} rows: {rows}, {unit} kept: {kept}, diagnostics: {}",
        diagnostics.len()
    );
    if rows == 0 {
        log::warn!("no {kind} rows found");
        eprintln!("warning: no {kind} rows found");
    }
    for d in diagnostics {
        eprintln!("  {d}");
    }
}

fn cmd_synth(cli: &Cli, args: &SynthArgs) -> Result<Vec<PathBuf>> {
    let out = require(&cli.out, "--out")?;
    let mut config = match &cli.config {
        Some(_) => load_config(cli)?
            .data
            .synthetic
            .ok_or_else(|| Error::Config("config data section is not synthetic".into()))?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(d) = args.days {
        config.days = d;
    }
    if let Some(s) = args.start {
        config.start = s;
    }
    if let Some(v) = args.noise_scale {
        config.noise_scale = v;
    }
    if let Some(v) = args.spike_probability {
        config.spike_probability = v;
    }
    let data = synth_generate(&config)?;
    let forecasts = out.join("forecasts.csv");
    let actuals = out.join("actuals.csv");
    let mut w = create(&forecasts)?;
    write_forecasts_csv(&data.forecasts, &mut w)?;
    finish(w)?;
    let mut w = create(&actuals)?;
    write_actuals_csv(&data.actuals, &mut w)?;
    finish(w)?;
    println!(
        "synthetic {} days from {} seed {}: {} snapshots, {} actual prices",
        config.days,
        config.origin(),
        config.seed,
        data.forecasts.len(),
        data.actuals.len()
    );
    Ok(vec![forecasts, actuals])
}

fn cmd_backtest(cli: &Cli) -> Result<Vec<PathBuf>> {
    let out = require(&cli.out, "--out")?;
    let config = load_config(cli)?;
    let data = load_data(&config.data)?;
    let bt = config.backtest_config(&data)?;
    let ledger = run_backtest(&bt, &data)?;
    let mut w = create(out)?;
    ledger.write_csv(&mut w)?;
    finish(w)?;
    let (profit, solves) = annual_profit(&ledger)?;
    println!(
        "profit {profit:.2} solves {solves} max_primal_residual {:.3e} max_dual_residual {:.3e} \
         max_plan_violation {:.3e} infeasible {} max_iterations {} skipped {}",
        ledger.max_primal_residual(),
        ledger.max_dual_residual(),
        ledger.max_plan_violation(),
        ledger.count(StepStatus::Infeasible),
        ledger.count(StepStatus::MaxIterations),
        ledger.count(StepStatus::Skipped),
    );
    Ok(vec![out.to_path_buf()])
}

fn cmd_sweep(cli: &Cli, args: &GridArgs) -> Result<Vec<PathBuf>> {
    let out = require(&cli.out, "--out")?;
    let config = load_config(cli)?;
    let data = load_data(&config.data)?;
    let base = config.backtest_config(&data)?;
    let mut grid = SweepGrid::default();
    if let Some(s) = &args.schemes {
        if s.contains(&Scheme::None) {
            return Err(Error::argument(
                "the baseline always runs; list only discounted schemes",
            ));
        }
        grid.schemes = s.clone();
    }
    if let Some(v) = &args.gamma0s {
        grid.gamma0s = v.clone();
    }
    if let Some(v) = &args.lambdas {
        grid.lambdas = v.clone();
    }
    if let Some(v) = &args.norms {
        grid.norms = v.clone();
    }
    for spec in grid.points() {
        spec.validate()?;
    }
    let sweep = run_sweep(&base, &data, &grid, cli.jobs)?;
    let report = compare_report(&sweep)?;
    let mut w = create(out)?;
    w.write_all(report.csv.as_bytes())?;
    finish(w)?;
    print!("{}", report.table);
    println!("{}", report.summary);
    Ok(vec![out.to_path_buf()])
}

/// Normalised CSVs are recognised by their header line; anything else is
/// read as AEMO reports.
fn is_normalized(path: &Path, columns: &[&str]) -> Result<bool> {
    if path.is_dir() {
        return Ok(false);
    }
    let mut first = String::new();
    let file = File::open(path).map_err(|e| Error::Io(e).context(&path.display().to_string()))?;
    BufReader::new(file).read_line(&mut first)?;
    Ok(first.trim_end() == columns.join(","))
}

fn stats_data(cli: &Cli, args: &ErrorStatsArgs) -> Result<MarketData> {
    if args.forecasts.is_none() && args.actuals.is_none() {
        let config = load_config(cli)?;
        return load_data(&config.data);
    }
    let forecasts = require(&args.forecasts, "--forecasts")?;
    let actuals = require(&args.actuals, "--actuals")?;
    let region = args.region.as_deref();
    let policy = LoadPolicy::FailFast;
    let f_norm = is_normalized(forecasts, &FORECAST_COLUMNS)?;
    let a_norm = is_normalized(actuals, &ACTUAL_COLUMNS)?;
    match (f_norm, a_norm) {
        (true, true) => config::read_normalized(forecasts, actuals, region, policy),
        (false, false) => read_raw(
            forecasts,
            actuals,
            &TableSpecs::default().with_region(region),
            policy,
        ),
        _ => Err(Error::argument(
            "forecasts and actuals must both be AEMO reports or both normalised CSVs",
        )),
    }
}

fn cmd_error_stats(cli: &Cli, args: &ErrorStatsArgs) -> Result<Vec<PathBuf>> {
    let out = require(&cli.out, "--out")?;
    let data = stats_data(cli, args)?;
    let stats = forecast_error_stats(&data.forecasts, &data.actuals)?;
    let mut w = create(out)?;
    write_error_stats_csv(&stats, &mut w)?;
    finish(w)?;
    let mape = out.with_extension("mape.dat");
    let max_ape = out.with_extension("max_ape.dat");
    write_plot_data(
        &mape,
        "mape_pct",
        stats.iter().map(|s| (s.lead_time, s.mape_pct)),
    )?;
    write_plot_data(
        &max_ape,
        "max_ape_pct",
        stats.iter().map(|s| (s.lead_time, s.max_ape_pct)),
    )?;
    println!("{ERROR_STATS_HEADER}");
    for s in &stats {
        println!(
            "{},{:.6},{:.6},{},{}",
            s.lead_time, s.mape_pct, s.max_ape_pct, s.samples, s.excluded
        );
    }
    Ok(vec![out.to_path_buf(), mape, max_ape])
}
