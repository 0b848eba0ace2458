//! Battery model, SOC recursion and the half-hourly market clock.

use std::fmt;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minutes in one dispatch interval of the optimiser.
pub const INTERVAL_MINUTES: i64 = 30;
/// Half-hours in one trading day.
pub const INTERVALS_PER_DAY: usize = 48;

/// Physical and operational limits of the storage asset.
///
/// Power is positive when discharging (exporting) and negative when charging.
/// SOC is a fraction of `e_nom`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryParams {
    /// Energy capacity, MWh.
    pub e_nom: f64,
    /// Minimum (charging) power, MW. Negative.
    pub p_lower: f64,
    /// Maximum (discharging) power, MW. Positive.
    pub p_upper: f64,
    pub soc_lower: f64,
    pub soc_upper: f64,
    /// Efficiency applied symmetrically to charge and discharge.
    pub eta: f64,
    /// Interval length, hours.
    pub dt: f64,
}

impl Default for BatteryParams {
    /// The 1.1 MW / 2.2 MWh campus battery.
    fn default() -> Self {
        Self {
            e_nom: 2.2,
            p_lower: -1.1,
            p_upper: 1.1,
            soc_lower: 0.1,
            soc_upper: 1.0,
            eta: 0.95,
            dt: 0.5,
        }
    }
}

impl BatteryParams {
    /// SOC change per MW of discharge over one interval.
    pub fn soc_per_mw(&self) -> f64 {
        self.eta * self.dt / self.e_nom
    }

    /// Largest power magnitude the battery can reach in either direction.
    pub fn max_abs_power(&self) -> f64 {
        self.p_upper.max(-self.p_lower)
    }

    /// Power range that keeps the next SOC inside the bounds, intersected with
    /// the power box. Empty ranges cannot occur for a valid `soc` because zero
    /// power is always admissible.
    pub fn admissible_power(&self, soc: f64) -> (f64, f64) {
        let k = self.soc_per_mw();
        let lo = ((soc - self.soc_upper) / k).max(self.p_lower);
        let hi = ((soc - self.soc_lower) / k).min(self.p_upper);
        (lo.min(0.0), hi.max(0.0))
    }

    pub fn validate(&self) -> Result<()> {
        let violations = validate_params(self);
        if violations.is_empty() {
            Ok(())
        } else {
            let joined: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            Err(Error::Config(format!(
                "battery parameters: {}",
                joined.join("; ")
            )))
        }
    }
}

/// One violated invariant of [`BatteryParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamViolation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for ParamViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Returns every violated invariant; an empty list means the parameters are valid.
pub fn validate_params(params: &BatteryParams) -> Vec<ParamViolation> {
    let mut out = Vec::new();
    let mut push = |field, message: String| out.push(ParamViolation { field, message });

    if !(params.e_nom > 0.0) || !params.e_nom.is_finite() {
        push("e_nom", format!("must be positive, got {}", params.e_nom));
    }
    if !(params.dt > 0.0) || !params.dt.is_finite() {
        push("dt", format!("must be positive, got {}", params.dt));
    }
    if !(params.eta > 0.0 && params.eta <= 1.0) {
        push("eta", format!("must lie in (0, 1], got {}", params.eta));
    }
    if !(params.p_lower < 0.0 && params.p_upper > 0.0)
        || !params.p_lower.is_finite()
        || !params.p_upper.is_finite()
    {
        push(
            "power bounds",
            format!(
                "need p_lower < 0 < p_upper, got [{}, {}]",
                params.p_lower, params.p_upper
            ),
        );
    }
    if !(params.soc_lower >= 0.0 && params.soc_lower < params.soc_upper && params.soc_upper <= 1.0)
    {
        push(
            "soc bounds",
            format!(
                "need 0 <= soc_lower < soc_upper <= 1, got [{}, {}]",
                params.soc_lower, params.soc_upper
            ),
        );
    }
    out
}

/// SOC after holding power `p` for one interval.
///
/// The result is deliberately not clamped.
#[inline]
pub fn soc_step(soc_prev: f64, p: f64, params: &BatteryParams) -> f64 {
    soc_prev - params.soc_per_mw() * p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocState {
    pub soc: f64,
    pub timestamp: NaiveDateTime,
}

impl SocState {
    pub fn check(&self, params: &BatteryParams) -> Result<()> {
        if self.soc < params.soc_lower || self.soc > params.soc_upper || !self.soc.is_finite() {
            return Err(Error::argument(format!(
                "SOC {} at {} outside [{}, {}]",
                self.soc, self.timestamp, params.soc_lower, params.soc_upper
            )));
        }
        Ok(())
    }
}

/// A half-hour interval start in market local time.
///
/// Trading days run from 04:00 to 04:00.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MarketClock {
    timestamp: NaiveDateTime,
}

const TRADING_DAY_ANCHOR_HOUR: u32 = 4;
/// Minutes after the trading-day anchor from which pre-dispatch extends to the
/// end of the following trading day (12:30 local).
const EXTENDED_HORIZON_FROM_MINUTES: i64 = 8 * 60 + 30;
pub const MIN_HORIZON: usize = 32;
pub const MAX_HORIZON: usize = 80;

impl MarketClock {
    pub fn new(timestamp: NaiveDateTime) -> Result<Self> {
        if !is_half_hour_aligned(timestamp) {
            return Err(Error::argument(format!(
                "{timestamp} is not aligned to a half-hour boundary"
            )));
        }
        Ok(Self { timestamp })
    }

    pub fn timestamp(&self) -> NaiveDateTime {
        self.timestamp
    }

    pub fn next(&self) -> Self {
        Self {
            timestamp: self.timestamp + Duration::minutes(INTERVAL_MINUTES),
        }
    }

    /// Calendar date the trading day containing this interval started on.
    pub fn trading_day(&self) -> NaiveDate {
        let date = self.timestamp.date();
        if self.timestamp.hour() < TRADING_DAY_ANCHOR_HOUR {
            date.pred_opt().expect("date underflow")
        } else {
            date
        }
    }

    pub fn trading_day_start(&self) -> NaiveDateTime {
        self.trading_day()
            .and_time(NaiveTime::from_hms_opt(TRADING_DAY_ANCHOR_HOUR, 0, 0).expect("valid anchor"))
    }

    /// Pre-dispatch horizon length in half-hours for a run at this interval.
    ///
    /// Runs before 12:30 reach the end of the current trading day; later runs
    /// reach the end of the next one. Clamped to `[MIN_HORIZON, MAX_HORIZON]`.
    pub fn horizon_length(&self) -> usize {
        let day_start = self.trading_day_start();
        let minutes_in = (self.timestamp - day_start).num_minutes();
        let days_ahead = if minutes_in < EXTENDED_HORIZON_FROM_MINUTES {
            1
        } else {
            2
        };
        let end = day_start + Duration::days(days_ahead);
        let intervals = ((end - self.timestamp).num_minutes() / INTERVAL_MINUTES) as usize;
        intervals.clamp(MIN_HORIZON, MAX_HORIZON)
    }
}

pub fn is_half_hour_aligned(t: NaiveDateTime) -> bool {
    t.second() == 0 && t.nanosecond() == 0 && t.minute().is_multiple_of(30)
}

pub fn is_five_minute_aligned(t: NaiveDateTime) -> bool {
    t.second() == 0 && t.nanosecond() == 0 && t.minute().is_multiple_of(5)
}

/// Start of the half-hour containing `t`.
pub fn half_hour_floor(t: NaiveDateTime) -> NaiveDateTime {
    let minute = t.minute() - t.minute() % 30;
    t.date()
        .and_hms_opt(t.hour(), minute, 0)
        .expect("valid floored time")
}
