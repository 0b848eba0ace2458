//! Seeded synthetic prices and forecasts.
//!
//! True 5-minute prices follow a daily cosine peaking at 18:00 plus
//! occasional one-interval spikes. Every half-hour gets a snapshot of
//! `MAX_HORIZON` entries (fewer at the end of the series); the entry at lead
//! `n` is the true half-hour mean plus `noise_scale * n * z`, with one
//! standard normal `z` per target interval, so errors shrink steadily as a
//! target approaches. Phantom spikes are added only at leads above the
//! threshold and never occur in the true series.

use std::f64::consts::PI;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    interval_mean, ActualPriceSeries, ForecastSnapshot, MarketData, SnapshotIndex,
    SAMPLES_PER_INTERVAL,
};
use crate::domain::{INTERVALS_PER_DAY, MAX_HORIZON};
use crate::error::{Error, Result};

const PEAK_HOUR: f64 = 18.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub days: usize,
    /// First trading day; the series starts at 04:00 on this date.
    pub start: NaiveDate,
    pub region: String,
    /// $/MWh
    pub base_price: f64,
    /// $/MWh
    pub daily_amplitude: f64,
    /// Chance per trading day of one real spike, and independently of one
    /// phantom spike.
    pub spike_probability: f64,
    /// $/MWh
    pub spike_magnitude: f64,
    /// Phantom spikes appear only at leads strictly above this many half-hours.
    pub phantom_lead_threshold: usize,
    /// Forecast error standard deviation per half-hour of lead, $/MWh.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            days: 365,
            start: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            region: "SYN1".into(),
            base_price: 80.0,
            daily_amplitude: 40.0,
            spike_probability: 0.2,
            spike_magnitude: 1000.0,
            phantom_lead_threshold: 8,
            noise_scale: 0.5,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let magnitudes = [
            ("base_price", self.base_price),
            ("daily_amplitude", self.daily_amplitude),
            ("spike_magnitude", self.spike_magnitude),
            ("noise_scale", self.noise_scale),
        ];
        for (name, v) in magnitudes {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "synthetic {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.spike_probability) {
            return Err(Error::Config(format!(
                "synthetic spike_probability must lie in [0, 1], got {}",
                self.spike_probability
            )));
        }
        if self.days == 0 {
            return Err(Error::Config("synthetic days must be at least 1".into()));
        }
        Ok(())
    }

    pub fn origin(&self) -> NaiveDateTime {
        self.start
            .and_time(NaiveTime::from_hms_opt(4, 0, 0).expect("valid time"))
    }

    /// One past the last generated half-hour.
    pub fn end(&self) -> NaiveDateTime {
        self.origin() + Duration::days(self.days as i64)
    }
}

fn daily_shape(t: NaiveDateTime) -> f64 {
    let hour = t.hour() as f64 + t.minute() as f64 / 60.0;
    (2.0 * PI * (hour - PEAK_HOUR) / 24.0).cos()
}

/// Generates the true series and its forecast snapshots.
pub fn synth_generate(config: &SynthConfig) -> Result<MarketData> {
    config.validate()?;
    let intervals = config.days * INTERVALS_PER_DAY;
    let origin = config.origin();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut spikes = vec![0.0; intervals];
    let mut phantoms = vec![false; intervals];
    for day in 0..config.days {
        if rng.random::<f64>() < config.spike_probability {
            spikes[day * INTERVALS_PER_DAY + rng.random_range(0..INTERVALS_PER_DAY)] +=
                config.spike_magnitude;
        }
        if rng.random::<f64>() < config.spike_probability {
            phantoms[day * INTERVALS_PER_DAY + rng.random_range(0..INTERVALS_PER_DAY)] = true;
        }
    }
    let z: Vec<f64> = (0..intervals).map(|_| rng.sample(StandardNormal)).collect();

    let mut entries = Vec::with_capacity(intervals * SAMPLES_PER_INTERVAL);
    let mut means = Vec::with_capacity(intervals);
    for (k, spike) in spikes.iter().enumerate() {
        let start = origin + Duration::minutes(30 * k as i64);
        let mut prices = [0.0; SAMPLES_PER_INTERVAL];
        for (j, p) in prices.iter_mut().enumerate() {
            let t = start + Duration::minutes(5 * j as i64);
            *p = config.base_price + config.daily_amplitude * daily_shape(t) + spike;
            entries.push((t, *p));
        }
        means.push(interval_mean(&prices));
    }
    let actuals = ActualPriceSeries::new(config.region.clone(), entries)?;

    let mut forecasts = SnapshotIndex::new();
    for k in 0..intervals {
        let run = origin + Duration::minutes(30 * k as i64);
        let len = MAX_HORIZON.min(intervals - k);
        let entries = (0..len)
            .map(|i| {
                let target = k + i;
                let lead = (i + 1) as f64;
                let mut price = means[target] + config.noise_scale * lead * z[target];
                if phantoms[target] && i + 1 > config.phantom_lead_threshold {
                    price += config.spike_magnitude;
                }
                (run + Duration::minutes(30 * i as i64), price)
            })
            .collect();
        forecasts.insert(ForecastSnapshot::new(run, config.region.clone(), entries)?);
    }
    Ok(MarketData { forecasts, actuals })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(days: usize) -> SynthConfig {
        SynthConfig {
            days,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn noiseless_snapshots_equal_truth() {
        let config = SynthConfig {
            noise_scale: 0.0,
            spike_probability: 0.0,
            ..small(2)
        };
        let data = synth_generate(&config).unwrap();
        for snap in data.forecasts.iter() {
            for (t, p) in snap.entries() {
                assert_eq!(
                    p.to_bits(),
                    data.actuals.interval_mean(*t).unwrap().to_bits()
                );
            }
        }
    }

    #[test]
    fn same_seed_same_bits() {
        let a = synth_generate(&small(3)).unwrap();
        let b = synth_generate(&small(3)).unwrap();
        assert_eq!(a.actuals, b.actuals);
        assert_eq!(a.forecasts, b.forecasts);
        let c = synth_generate(&SynthConfig {
            seed: 8,
            ..small(3)
        })
        .unwrap();
        assert_ne!(a.forecasts, c.forecasts);
    }

    #[test]
    fn covers_every_half_hour() {
        let data = synth_generate(&small(2)).unwrap();
        assert_eq!(data.actuals.len(), 2 * 48 * 6);
        assert_eq!(data.forecasts.len(), 96);
        assert_eq!(data.forecasts.get(small(2).origin()).unwrap().len(), 80);
        assert_eq!(
            data.forecasts
                .latest_at_or_before(small(2).end())
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn invalid_configs() {
        assert!(SynthConfig {
            spike_probability: 1.5,
            ..small(1)
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            noise_scale: -1.0,
            ..small(1)
        }
        .validate()
        .is_err());
        assert!(small(0).validate().is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let ok: SynthConfig =
            serde_json::from_str(r#"{"days": 3, "start": "2024-02-01"}"#).unwrap();
        assert_eq!(ok.days, 3);
        assert!(serde_json::from_str::<SynthConfig>(r#"{"dayz": 3}"#).is_err());
    }
}
