//! Receding-horizon simulation, settlement and hyperparameter sweeps.

mod sweep;

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::discount::{DiscountSpec, GammaCache};
use crate::domain::{is_half_hour_aligned, soc_step, BatteryParams, MarketClock, INTERVAL_MINUTES};
use crate::error::{Error, Result};
use crate::marketdata::{format_timestamp, interval_mean, MarketData, SAMPLES_PER_INTERVAL};
use crate::mpc::{
    build_discounted, build_standard, extract_plan, shifted_warm_start, MpcInstance, PlanStatus,
};
use crate::solver::{solve_warm, SolveResult, SolverSettings};

pub use sweep::{
    compare_report, run_sweep, CompareReport, SweepGrid, SweepResult, SweepRow, SWEEP_HEADER,
};

pub const LEDGER_HEADER: &str =
    "interval_start,t_k,power_mw,soc,mean_price,revenue,objective,status";

/// Horizon length `T_k` for a run at half-hour `t`.
pub fn horizon_length(t: NaiveDateTime) -> Result<usize> {
    Ok(MarketClock::new(t)?.horizon_length())
}

/// What to do when no snapshot was published for an interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingSnapshotPolicy {
    #[default]
    Fail,
    /// Reuse the latest earlier snapshot, from the current interval onwards.
    ForwardFill,
    /// Hold the battery idle for the interval.
    SkipZeroDispatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub battery: BatteryParams,
    pub discount: DiscountSpec,
    pub initial_soc: f64,
    /// First interval, inclusive.
    pub start: NaiveDateTime,
    /// End of the window, exclusive.
    pub end: NaiveDateTime,
    pub solver: SolverSettings,
    pub policy: MissingSnapshotPolicy,
    /// Start each solve from the previous step's solution moved one step
    /// along. Changes iteration counts, not what counts as solved.
    pub warm_start: bool,
}

impl BacktestConfig {
    pub fn new(start: NaiveDateTime, end: NaiveDateTime) -> Self {
        let battery = BatteryParams::default();
        Self {
            initial_soc: battery.soc_lower,
            battery,
            discount: DiscountSpec::none(),
            start,
            end,
            solver: SolverSettings::default(),
            policy: MissingSnapshotPolicy::Fail,
            warm_start: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.battery.validate()?;
        self.discount
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.solver
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(is_half_hour_aligned(self.start) && is_half_hour_aligned(self.end)) {
            return Err(Error::Config(format!(
                "window {} to {} is not half-hour aligned",
                self.start, self.end
            )));
        }
        if self.start >= self.end {
            return Err(Error::Config(format!(
                "window start {} is not before end {}",
                self.start, self.end
            )));
        }
        let b = &self.battery;
        if !(self.initial_soc >= b.soc_lower && self.initial_soc <= b.soc_upper) {
            return Err(Error::Config(format!(
                "initial soc {} outside [{}, {}]",
                self.initial_soc, b.soc_lower, b.soc_upper
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepStatus {
    Solved,
    MaxIterations,
    Infeasible,
    /// No snapshot and the policy said to idle.
    Skipped,
}

impl StepStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepStatus::Solved => "solved",
            StepStatus::MaxIterations => "max_iterations",
            StepStatus::Infeasible => "infeasible",
            StepStatus::Skipped => "skipped",
        }
    }
}

impl From<PlanStatus> for StepStatus {
    fn from(s: PlanStatus) -> Self {
        match s {
            PlanStatus::Solved => StepStatus::Solved,
            PlanStatus::MaxIterations => StepStatus::MaxIterations,
            PlanStatus::Infeasible => StepStatus::Infeasible,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub interval_start: NaiveDateTime,
    /// Horizon of the plan; 0 when skipped.
    pub t_k: usize,
    /// Executed power, MW.
    pub power_mw: f64,
    /// SOC after execution.
    pub soc: f64,
    pub mean_price: f64,
    pub revenue: f64,
    /// Discounted objective of the plan, NaN when there was none.
    pub objective: f64,
    pub status: StepStatus,
    /// Largest constraint violation of the plan in natural units.
    pub plan_violation: f64,
    pub iterations: usize,
    /// Whether the solution came from the active-set refinement.
    pub polished: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ledger {
    pub initial_soc: f64,
    pub entries: Vec<LedgerEntry>,
}

impl Ledger {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, status: StepStatus) -> usize {
        self.entries.iter().filter(|e| e.status == status).count()
    }

    pub fn max_primal_residual(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.primal_residual)
            .fold(0.0, f64::max)
    }

    pub fn max_dual_residual(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.dual_residual)
            .fold(0.0, f64::max)
    }

    pub fn max_plan_violation(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.plan_violation)
            .fold(0.0, f64::max)
    }

    /// Executed energy throughput `sum |P| dt` per trading day, MWh. Plans
    /// cap their own throughput; execution across re-plans is not capped.
    pub fn daily_throughput(&self, params: &BatteryParams) -> BTreeMap<NaiveDate, f64> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            let day = MarketClock::new(e.interval_start)
                .map(|c| c.trading_day())
                .unwrap_or(e.interval_start.date());
            *out.entry(day).or_insert(0.0) += e.power_mw.abs() * params.dt;
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{LEDGER_HEADER}")?;
        for e in &self.entries {
            writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                format_timestamp(e.interval_start),
                e.t_k,
                e.power_mw,
                e.soc,
                e.mean_price,
                e.revenue,
                e.objective,
                e.status.as_str()
            )?;
        }
        Ok(())
    }
}

/// Revenue of holding `p` MW for `dt` hours against the half-hour's six
/// 5-minute prices.
pub fn settle(p: f64, five_min_prices: &[f64], dt: f64) -> Result<f64> {
    if five_min_prices.len() != SAMPLES_PER_INTERVAL {
        return Err(Error::argument(format!(
            "settlement needs {SAMPLES_PER_INTERVAL} prices, got {}",
            five_min_prices.len()
        )));
    }
    Ok(p * dt * interval_mean(five_min_prices))
}

/// Total revenue and entry count.
pub fn annual_profit(ledger: &Ledger) -> Result<(f64, usize)> {
    if ledger.is_empty() {
        return Err(Error::argument("empty ledger"));
    }
    Ok((ledger.entries.iter().map(|e| e.revenue).sum(), ledger.len()))
}

/// Forecast window for interval `t`, or `None` when the policy idles.
fn forecast_window(
    config: &BacktestConfig,
    data: &MarketData,
    t: NaiveDateTime,
    horizon: usize,
) -> Result<Option<Vec<f64>>> {
    let snapshot = match (data.forecasts.get(t), config.policy) {
        (Some(s), _) => s,
        (None, MissingSnapshotPolicy::Fail) => {
            return Err(Error::coverage(format!(
                "no forecast snapshot for run time {t}"
            )))
        }
        (None, MissingSnapshotPolicy::SkipZeroDispatch) => return Ok(None),
        (None, MissingSnapshotPolicy::ForwardFill) => data
            .forecasts
            .latest_at_or_before(t)
            .ok_or_else(|| Error::coverage(format!("no forecast snapshot at or before {t}")))?,
    };
    snapshot.window(t, horizon).map(Some).ok_or_else(|| {
        Error::coverage(format!(
            "snapshot {} has no price for interval {t}",
            snapshot.run_time()
        ))
    })
}

/// Runs the controller over `[start, end)`: plan on the snapshot, execute
/// the first step, settle against actual prices, chain the SOC.
pub fn run_backtest(config: &BacktestConfig, data: &MarketData) -> Result<Ledger> {
    config.validate()?;
    let params = config.battery;
    let spec = config.discount;
    let gammas = GammaCache::new();
    let mut ledger = Ledger {
        initial_soc: config.initial_soc,
        entries: Vec::new(),
    };
    let mut soc = config.initial_soc;
    let mut previous: Option<(SolveResult, usize)> = None;
    let mut t = config.start;
    while t < config.end {
        let clock = MarketClock::new(t)?;
        let actual = data
            .actuals
            .interval_prices(t)
            .ok_or_else(|| Error::coverage(format!("no settlement prices for interval {t}")))?;

        let mut entry = LedgerEntry {
            interval_start: t,
            t_k: 0,
            power_mw: 0.0,
            soc,
            mean_price: interval_mean(&actual),
            revenue: 0.0,
            objective: f64::NAN,
            status: StepStatus::Skipped,
            plan_violation: 0.0,
            iterations: 0,
            polished: false,
            primal_residual: 0.0,
            dual_residual: 0.0,
        };
        if let Some(prices) = forecast_window(config, data, t, clock.horizon_length())? {
            let instance = MpcInstance {
                gamma: (*gammas.get(&spec, prices.len())?).clone(),
                prices,
                spec,
                params,
                soc0: soc,
            };
            let program = if spec.is_discounted() {
                build_discounted(&instance)?
            } else {
                build_standard(&instance)?
            };
            let warm = match previous.take() {
                Some((prev, prev_t)) if config.warm_start => {
                    shifted_warm_start(&prev, prev_t, instance.horizon())
                }
                _ => None,
            };
            let result = solve_warm(&program, &config.solver, warm.as_ref())?;
            let plan = extract_plan(&instance, &result)?;
            entry.t_k = instance.horizon();
            entry.status = plan.status.into();
            entry.iterations = result.iterations;
            entry.polished = result.polished;
            entry.primal_residual = result.residuals.primal;
            entry.dual_residual = result.residuals.dual;
            entry.objective = plan.objective;
            if entry.status == StepStatus::Solved {
                entry.plan_violation = plan.max_violation(&instance);
                let (lo, hi) = params.admissible_power(soc);
                entry.power_mw = plan.powers[0].clamp(lo, hi);
                previous = Some((result, instance.horizon()));
            } else {
                log::warn!(
                    "interval {t}: solver ended {}, holding idle",
                    entry.status.as_str()
                );
            }
        }
        soc = soc_step(soc, entry.power_mw, &params);
        entry.soc = soc;
        entry.revenue = settle(entry.power_mw, &actual, params.dt)?;
        ledger.entries.push(entry);
        t += Duration::minutes(INTERVAL_MINUTES);
    }
    Ok(ledger)
}
