//! Battery energy arbitrage under deterministic price forecasts.
//!
//! The crate is organised bottom-up:
//!
//! * [`domain`] holds the battery model, SOC recursion and market clock.
//! * [`discount`] computes lead-time weights for forecast prices.
//! * [`mpc`] turns a forecast window into a canonical convex program.
//! * [`solver`] is a dense operator-splitting LP/QP solver for those programs.
//! * [`marketdata`] ingests AEMO-style reports, normalised CSVs and synthetic data.
//! * [`backtest`] runs the receding-horizon loop, settles revenue and sweeps
//!   hyperparameter grids.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod backtest;
pub mod discount;
pub mod domain;
pub mod error;
pub mod marketdata;
pub mod mpc;
pub mod solver;

pub use backtest::{
    annual_profit, compare_report, horizon_length, run_backtest, run_sweep, settle, BacktestConfig,
    CompareReport, Ledger, LedgerEntry, MissingSnapshotPolicy, StepStatus, SweepGrid, SweepResult,
    SweepRow,
};
pub use discount::{build_gamma, weight, DiscountSpec, GammaCache, GammaVector, Scheme};
pub use domain::{soc_step, validate_params, BatteryParams, MarketClock, SocState};
pub use error::{Error, Result};
pub use marketdata::{
    forecast_error_stats, synth_generate, ActualPriceSeries, AemoTableSpec, ForecastSnapshot,
    LoadPolicy, MarketData, SnapshotIndex, SynthConfig,
};
pub use mpc::{
    build_discounted, build_standard, extract_plan, shifted_warm_start, MpcInstance, MpcPlan,
    PlanStatus,
};
pub use solver::{
    solve, solve_warm, CanonicalProgram, SolveResult, SolveStatus, SolverSettings, WarmStart,
};
