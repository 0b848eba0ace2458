#![allow(
    dead_code,
    clippy::too_many_arguments,
    clippy::neg_cmp_op_on_partial_ord
)]
//! Oracles shared by the integration tests. Nothing here calls the crate's
//! solver, program builder or backtest loop.

use std::path::PathBuf;

use arbmpc_core::{
    ActualPriceSeries, BatteryParams, ForecastSnapshot, Ledger, MarketData, MpcInstance, Scheme,
    StepStatus,
};
use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use microlp::{ComparisonOp, OptimizationDirection, Problem};

pub const GRID_STEP: f64 = 0.011;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn at(s: &str) -> NaiveDateTime {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M").unwrap()
}

/// Horizon rule written from scratch: count half-hours since the 04:00
/// trading-day start; before 12:30 plan to the end of the trading day,
/// afterwards to the end of the next one; clamp to [32, 80].
pub fn oracle_horizon(t: NaiveDateTime) -> usize {
    let minutes = (t.hour() as i64 * 60 + t.minute() as i64 - 240).rem_euclid(24 * 60);
    let elapsed = (minutes / 30) as usize;
    let end = if elapsed < 17 { 48 } else { 96 };
    (end - elapsed).clamp(32, 80)
}

/// Weights for the schemes the oracles need, straight from their definitions.
pub fn oracle_gamma(scheme: Scheme, gamma0: f64, horizon: usize) -> Vec<f64> {
    (0..horizon)
        .map(|lag| match scheme {
            Scheme::None => 1.0,
            Scheme::PowerLaw => gamma0.powi(lag as i32),
            Scheme::SimulatedAnneal => (-gamma0 * lag as f64 / horizon as f64).exp(),
            Scheme::CosineAnneal => {
                0.5 * (1.0 + (std::f64::consts::PI * lag as f64 / horizon as f64).cos())
            }
        })
        .collect()
}

/// `sum c g P - lambda R(P)` evaluated directly.
pub fn oracle_objective(prices: &[f64], gamma: &[f64], lambda: f64, s: u8, powers: &[f64]) -> f64 {
    let mut total = 0.0;
    for ((c, g), p) in prices.iter().zip(gamma).zip(powers) {
        total += c * g * p;
        total -= lambda
            * match s {
                1 => p.abs() / g,
                _ => (p / g) * (p / g),
            };
    }
    total
}

/// Exact LP plan with explicit SOC variables. Only for `s = 1` or `lambda = 0`.
pub fn lp_plan(
    prices: &[f64],
    gamma: &[f64],
    lambda: f64,
    params: &BatteryParams,
    soc0: f64,
) -> Option<(Vec<f64>, f64)> {
    let t = prices.len();
    let k = params.eta * params.dt / params.e_nom;
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let p: Vec<_> = (0..t)
        .map(|n| lp.add_var(prices[n] * gamma[n], (params.p_lower, params.p_upper)))
        .collect();
    let u: Vec<_> = (0..t)
        .map(|n| lp.add_var(-lambda / gamma[n], (0.0, f64::INFINITY)))
        .collect();
    let soc: Vec<_> = (0..t)
        .map(|_| lp.add_var(0.0, (params.soc_lower, params.soc_upper)))
        .collect();
    for n in 0..t {
        // soc_n = soc_{n-1} - k P_n
        if n == 0 {
            lp.add_constraint([(soc[0], 1.0), (p[0], k)], ComparisonOp::Eq, soc0);
        } else {
            lp.add_constraint(
                [(soc[n], 1.0), (soc[n - 1], -1.0), (p[n], k)],
                ComparisonOp::Eq,
                0.0,
            );
        }
        lp.add_constraint([(u[n], 1.0), (p[n], -1.0)], ComparisonOp::Ge, 0.0);
        lp.add_constraint([(u[n], 1.0), (p[n], 1.0)], ComparisonOp::Ge, 0.0);
    }
    let used: Vec<_> = u.iter().map(|&v| (v, params.dt)).collect();
    lp.add_constraint(&used, ComparisonOp::Le, t as f64 / 48.0 * params.e_nom);
    let sol = lp.solve().ok()?.into_solution().ok()?;
    let powers: Vec<f64> = p.iter().map(|&v| sol[v]).collect();
    let objective = oracle_objective(prices, gamma, lambda, 1, &powers);
    Some((powers, objective))
}

/// Best objective over the power grid `p_lower + i * step` (plus 0 and
/// `p_upper`) for horizons of at most 3, and the matching resolution bound.
pub fn grid_optimum(instance: &MpcInstance, step: f64) -> (f64, f64) {
    let t = instance.prices.len();
    assert!((1..=3).contains(&t), "grid oracle is for T <= 3");
    let b = &instance.params;
    let g = instance.gamma.weights();
    let lambda = match instance.spec.scheme {
        Scheme::None => 0.0,
        _ => instance.spec.lambda,
    };
    let s = instance.spec.s;

    let mut points = Vec::new();
    let mut i = 0;
    loop {
        let v = b.p_lower + i as f64 * step;
        if v > b.p_upper {
            break;
        }
        points.push(v);
        i += 1;
    }
    points.push(0.0);
    points.push(b.p_upper);

    let k = b.eta * b.dt / b.e_nom;
    let cap = t as f64 / 48.0 * b.e_nom + 1e-12;
    let soc_ok = |x: f64| x >= b.soc_lower - 1e-12 && x <= b.soc_upper + 1e-12;
    // per-step objective term
    let term = |n: usize, p: f64| {
        let r = match s {
            1 => p.abs() / g[n],
            _ => (p / g[n]) * (p / g[n]),
        };
        instance.prices[n] * g[n] * p - lambda * r
    };

    let mut best = f64::NEG_INFINITY;
    for &p1 in &points {
        let s1 = instance.soc0 - k * p1;
        let e1 = p1.abs() * b.dt;
        if !soc_ok(s1) || e1 > cap {
            continue;
        }
        let v1 = term(0, p1);
        if t == 1 {
            best = best.max(v1);
            continue;
        }
        for &p2 in &points {
            let s2 = s1 - k * p2;
            let e2 = e1 + p2.abs() * b.dt;
            if !soc_ok(s2) || e2 > cap {
                continue;
            }
            let v2 = v1 + term(1, p2);
            if t == 2 {
                best = best.max(v2);
                continue;
            }
            for &p3 in &points {
                let s3 = s2 - k * p3;
                if !soc_ok(s3) || e2 + p3.abs() * b.dt > cap {
                    continue;
                }
                best = best.max(v2 + term(2, p3));
            }
        }
    }

    // Lipschitz constant of each term times the grid step.
    let pmax = b.p_upper.max(-b.p_lower);
    let eps: f64 = (0..t)
        .map(|n| {
            let reg = match s {
                1 => lambda / g[n],
                _ => 2.0 * lambda * pmax / (g[n] * g[n]),
            };
            (instance.prices[n].abs() * g[n] + reg) * step
        })
        .sum();
    (best, eps)
}

/// 04:00 on the first day of the phantom scenario.
pub fn phantom_origin() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2024, 1, 1)
        .unwrap()
        .and_time(NaiveTime::from_hms_opt(4, 0, 0).unwrap())
}

pub const PHANTOM_STEPS: usize = 48;
pub const PHANTOM_TARGET: usize = 40;

/// True price of half-hour `i` after the origin: $50, with a real $300
/// spike at intervals 10 and 11.
pub fn phantom_truth(i: usize) -> f64 {
    if i == 10 || i == 11 {
        300.0
    } else {
        50.0
    }
}

/// Forecast of interval `target` made `lead` half-hours ahead. The $1000
/// phantom at interval 40 shows only at leads above 8. A -0.01 $/MWh per
/// interval tilt makes every plan unique.
pub fn phantom_forecast(target: usize, lead: usize) -> f64 {
    let mut c = phantom_truth(target);
    if target == PHANTOM_TARGET && lead > 8 {
        c = 1000.0;
    }
    c - 0.01 * target as f64
}

pub fn phantom_scenario() -> MarketData {
    phantom_scenario_with(phantom_origin(), PHANTOM_TARGET)
}

pub fn phantom_scenario_with(origin: NaiveDateTime, target: usize) -> MarketData {
    let half = |i: usize| origin + Duration::minutes(30 * i as i64);
    let forecast = |t: usize, lead: usize| {
        let c = if t == target && lead > 8 {
            1000.0
        } else {
            phantom_truth(t)
        };
        c - 0.01 * t as f64
    };
    let snapshots = (0..PHANTOM_STEPS).map(|k| {
        let entries = (k..k + 80)
            .map(|t| (half(t), forecast(t, t - k + 1)))
            .collect();
        ForecastSnapshot::new(half(k), "PHN1", entries).unwrap()
    });
    let mut actual = Vec::new();
    for i in 0..PHANTOM_STEPS {
        for j in 0..6 {
            actual.push((half(i) + Duration::minutes(5 * j), phantom_truth(i)));
        }
    }
    MarketData {
        forecasts: snapshots.collect(),
        actuals: ActualPriceSeries::new("PHN1", actual).unwrap(),
    }
}

#[derive(Debug, Clone)]
pub struct OracleRun {
    pub profit: f64,
    pub powers: Vec<f64>,
    pub final_soc: f64,
}

/// Receding-horizon re-simulation with the exact LP planner, for `s = 1`
/// or `lambda = 0` specs.
pub fn oracle_backtest(
    data: &MarketData,
    scheme: Scheme,
    gamma0: f64,
    lambda: f64,
    params: &BatteryParams,
    soc0: f64,
    start: NaiveDateTime,
    steps: usize,
) -> OracleRun {
    let k = params.eta * params.dt / params.e_nom;
    let mut soc = soc0;
    let mut profit = 0.0;
    let mut powers = Vec::new();
    for i in 0..steps {
        let t = start + Duration::minutes(30 * i as i64);
        let snap = data.forecasts.get(t).expect("snapshot");
        let first = snap.entries().iter().position(|(x, _)| *x == t).unwrap();
        let horizon = oracle_horizon(t).min(snap.len() - first);
        let prices: Vec<f64> = snap.entries()[first..first + horizon]
            .iter()
            .map(|e| e.1)
            .collect();
        let gamma = oracle_gamma(scheme, gamma0, horizon);
        let (plan, _) = lp_plan(&prices, &gamma, lambda, params, soc).expect("feasible plan");
        let lo = ((soc - params.soc_upper) / k).max(params.p_lower).min(0.0);
        let hi = ((soc - params.soc_lower) / k).min(params.p_upper).max(0.0);
        let p = plan[0].clamp(lo, hi);
        soc -= k * p;
        let six = data.actuals.interval_prices(t).expect("actual prices");
        profit += p * params.dt * six.iter().sum::<f64>() / 6.0;
        powers.push(p);
    }
    OracleRun {
        profit,
        powers,
        final_soc: soc,
    }
}

/// Resolution bound for comparing realised profits: a 0.011 MW error on
/// every executed step, priced at the settled mean.
pub fn realised_resolution_bound(
    data: &MarketData,
    params: &BatteryParams,
    start: NaiveDateTime,
    steps: usize,
) -> f64 {
    (0..steps)
        .map(|i| {
            let t = start + Duration::minutes(30 * i as i64);
            let six = data.actuals.interval_prices(t).unwrap();
            GRID_STEP * params.dt * (six.iter().sum::<f64>() / 6.0).abs()
        })
        .sum()
}

/// Checks the executed-level physics of a ledger: the SOC chain reproduces
/// exactly, every solved plan was feasible to 1e-6, and executed SOC stays
/// in bounds to 1e-9.
pub fn check_ledger_physics(ledger: &Ledger, params: &BatteryParams) -> Result<(), String> {
    let k = params.eta * params.dt / params.e_nom;
    let mut prev = ledger.initial_soc;
    for (i, e) in ledger.entries.iter().enumerate() {
        let expected = prev - k * e.power_mw;
        if expected.to_bits() != e.soc.to_bits() {
            return Err(format!(
                "entry {i}: soc {} but chain gives {expected}",
                e.soc
            ));
        }
        if e.status == StepStatus::Solved && !(e.plan_violation <= 1e-6) {
            return Err(format!("entry {i}: plan violation {:e}", e.plan_violation));
        }
        if e.soc < params.soc_lower - 1e-9 || e.soc > params.soc_upper + 1e-9 {
            return Err(format!("entry {i}: soc {} out of bounds", e.soc));
        }
        if e.power_mw < params.p_lower || e.power_mw > params.p_upper {
            return Err(format!("entry {i}: power {} out of the box", e.power_mw));
        }
        prev = e.soc;
    }
    Ok(())
}
