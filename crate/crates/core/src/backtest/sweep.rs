use std::fmt::Write as _;

use rayon::prelude::*;

use super::{annual_profit, run_backtest, BacktestConfig};
use crate::discount::{DiscountSpec, Scheme};
use crate::error::{Error, Result};
use crate::marketdata::MarketData;

pub const SWEEP_HEADER: &str = "scheme,gamma0,lambda,s,annual_profit,uplift_pct";

/// Hyperparameter grid. Rows come out ordered by scheme, then `s`, then
/// `gamma0`, then `lambda`, each in the order listed here.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub schemes: Vec<Scheme>,
    pub gamma0s: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub norms: Vec<u8>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            schemes: Scheme::DISCOUNTED.to_vec(),
            gamma0s: vec![0.95, 0.99],
            lambdas: vec![1.0, 0.5, 0.0],
            norms: vec![1, 2],
        }
    }
}

impl SweepGrid {
    pub fn points(&self) -> Vec<DiscountSpec> {
        let mut out = Vec::new();
        for &scheme in &self.schemes {
            for &s in &self.norms {
                for &gamma0 in &self.gamma0s {
                    for &lambda in &self.lambdas {
                        out.push(DiscountSpec::new(scheme, gamma0, lambda, s));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub spec: DiscountSpec,
    pub baseline: bool,
    pub annual_profit: f64,
    /// `100 (profit - baseline) / |baseline|`.
    pub uplift_pct: f64,
}

/// One row per grid point after a leading standard-MPC baseline row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn from_profits(baseline: f64, points: Vec<(DiscountSpec, f64)>) -> Self {
        let uplift = |p: f64| 100.0 * (p - baseline) / baseline.abs();
        let mut rows = vec![SweepRow {
            spec: DiscountSpec::none(),
            baseline: true,
            annual_profit: baseline,
            uplift_pct: uplift(baseline),
        }];
        rows.extend(points.into_iter().map(|(spec, p)| SweepRow {
            spec,
            baseline: false,
            annual_profit: p,
            uplift_pct: uplift(p),
        }));
        Self { rows }
    }

    pub fn baseline(&self) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.baseline)
    }

    pub fn grid_rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| !r.baseline)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{SWEEP_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{},{:.6},{:.6}",
                r.spec.scheme,
                r.spec.gamma0,
                r.spec.lambda,
                r.spec.s,
                r.annual_profit,
                r.uplift_pct
            );
        }
        out
    }
}

/// Runs the baseline and every grid point on `jobs` threads. Each point owns
/// its backtest, and results are gathered in grid order, so the thread count
/// cannot change the output.
pub fn run_sweep(
    base: &BacktestConfig,
    data: &MarketData,
    grid: &SweepGrid,
    jobs: usize,
) -> Result<SweepResult> {
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::argument("sweep grid is empty"));
    }
    let mut specs = vec![DiscountSpec::none()];
    specs.extend(points.iter().copied());
    let profit = |spec: &DiscountSpec| -> Result<f64> {
        let config = BacktestConfig {
            discount: *spec,
            ..base.clone()
        };
        let ledger = run_backtest(&config, data).map_err(|e| {
            e.context(&format!(
                "grid point {} gamma0={} lambda={} s={}",
                spec.scheme, spec.gamma0, spec.lambda, spec.s
            ))
        })?;
        Ok(annual_profit(&ledger)?.0)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    let profits: Vec<Result<f64>> = pool.install(|| specs.par_iter().map(profit).collect());
    let mut profits = profits
        .into_iter()
        .collect::<Result<Vec<f64>>>()?
        .into_iter();
    let baseline = profits.next().expect("baseline computed");
    Ok(SweepResult::from_profits(
        baseline,
        points.into_iter().zip(profits).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub csv: String,
    /// Schemes and norms down, `(gamma0, lambda)` across; `*` marks each
    /// column's maximum.
    pub table: String,
    pub summary: String,
    /// Indices into `SweepResult::rows` of the marked cells.
    pub marked: Vec<usize>,
    pub best: Option<usize>,
}

fn label(spec: &DiscountSpec) -> String {
    format!(
        "{} gamma0={} lambda={} s={}",
        spec.scheme, spec.gamma0, spec.lambda, spec.s
    )
}

pub fn compare_report(sweep: &SweepResult) -> Result<CompareReport> {
    let baseline = sweep
        .baseline()
        .ok_or_else(|| Error::argument("sweep has no baseline row"))?;
    let grid: Vec<(usize, &SweepRow)> = sweep
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.baseline)
        .collect();

    let mut columns: Vec<(f64, f64)> = Vec::new();
    let mut lines: Vec<(Scheme, u8)> = Vec::new();
    for (_, r) in &grid {
        let col = (r.spec.gamma0, r.spec.lambda);
        if !columns.contains(&col) {
            columns.push(col);
        }
        if !lines.contains(&(r.spec.scheme, r.spec.s)) {
            lines.push((r.spec.scheme, r.spec.s));
        }
    }

    let mut marked = Vec::new();
    for &(g, l) in &columns {
        let in_col: Vec<&(usize, &SweepRow)> = grid
            .iter()
            .filter(|(_, r)| r.spec.gamma0 == g && r.spec.lambda == l)
            .collect();
        let max = in_col
            .iter()
            .map(|(_, r)| r.annual_profit)
            .fold(f64::NEG_INFINITY, f64::max);
        marked.extend(
            in_col
                .iter()
                .filter(|(_, r)| r.annual_profit == max)
                .map(|(i, _)| *i),
        );
    }
    marked.sort_unstable();

    let best = grid
        .iter()
        .fold(None::<(usize, f64)>, |acc, (i, r)| match acc {
            Some((_, p)) if p >= r.annual_profit => acc,
            _ => Some((*i, r.annual_profit)),
        })
        .map(|(i, _)| i);

    let mut table = String::new();
    let _ = write!(table, "{:<22}{:>3}", "scheme", "s");
    for (g, l) in &columns {
        let _ = write!(table, "{:>16}", format!("g0={g} l={l}"));
    }
    table.push('\n');
    for &(scheme, s) in &lines {
        let _ = write!(table, "{:<22}{:>3}", scheme.as_str(), s);
        for &(g, l) in &columns {
            let cell = grid.iter().find(|(_, r)| {
                r.spec.scheme == scheme && r.spec.s == s && r.spec.gamma0 == g && r.spec.lambda == l
            });
            let text = match cell {
                Some((i, r)) => format!(
                    "{:.2}{}",
                    r.annual_profit,
                    if marked.contains(i) { "*" } else { " " }
                ),
                None => "-".to_string(),
            };
            let _ = write!(table, "{text:>16}");
        }
        table.push('\n');
    }
    let _ = writeln!(table, "{:<25}{:>15.2}", "standard", baseline.annual_profit);

    let summary = match best {
        None => "no discounted rows".to_string(),
        Some(i) => {
            let r = &sweep.rows[i];
            format!(
                "best: {} annual profit {:.2} uplift {:.2}% over standard {:.2}",
                label(&r.spec),
                r.annual_profit,
                r.uplift_pct,
                baseline.annual_profit
            )
        }
    };
    Ok(CompareReport {
        csv: sweep.to_csv(),
        table,
        summary,
        marked,
        best,
    })
}
