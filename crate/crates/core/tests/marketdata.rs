mod common;

use std::collections::BTreeMap;
use std::fs;

use arbmpc_core::marketdata::{
    load_actuals, load_forecasts, parse_aemo_csv, write_aemo_csv, AemoRow,
};
use arbmpc_core::*;
use chrono::{Duration, NaiveDateTime};
use common::*;
use proptest::prelude::*;

fn aemo() -> std::path::PathBuf {
    fixtures().join("aemo")
}

fn ts(s: &str) -> NaiveDateTime {
    NaiveDateTime::parse_from_str(s, "%Y/%m/%d %H:%M").unwrap()
}

#[test]
fn predispatch_rows_are_projected_exactly() {
    let bytes = fs::read(aemo().join("predispatch/PUBLIC_PREDISPATCHIS_202311011200.CSV")).unwrap();
    let rows = parse_aemo_csv(&bytes[..], &AemoTableSpec::predispatch(), "fixture").unwrap();
    let run = Some(ts("2023/11/01 12:00"));
    let row = |region: &str, target: &str, price: f64| AemoRow {
        region: region.into(),
        run_time: run,
        target_time: ts(target),
        price,
    };
    assert_eq!(
        rows,
        vec![
            row("NSW1", "2023/11/01 12:30", 88.1),
            row("QLD1", "2023/11/01 12:30", 61.25),
            row("NSW1", "2023/11/01 13:00", 90.5),
            row("QLD1", "2023/11/01 13:00", -15.75),
            row("NSW1", "2023/11/01 13:30", 120.0),
            row("QLD1", "2023/11/01 13:30", 300.5),
        ]
    );
}

#[test]
fn other_tables_are_ignored() {
    let bytes = fs::read(aemo().join("predispatch/PUBLIC_PREDISPATCHIS_202311011200.CSV")).unwrap();
    let spec = AemoTableSpec {
        table: "REGION_SOLUTION".into(),
        price_column: "TOTALDEMAND".into(),
        run_time_column: None,
        ..AemoTableSpec::predispatch()
    };
    let rows = parse_aemo_csv(&bytes[..], &spec, "fixture").unwrap();
    let demand: Vec<f64> = rows.iter().map(|r| r.price).collect();
    assert_eq!(demand, vec![8123.4, 6011.2, 6102.9]);
}

#[test]
fn two_runs_give_two_snapshots() {
    let spec = AemoTableSpec {
        region: Some("QLD1".into()),
        ..AemoTableSpec::predispatch()
    };
    let loaded = load_forecasts(&aemo().join("predispatch"), &spec, LoadPolicy::FailFast).unwrap();
    let runs: Vec<_> = loaded.value.iter().map(|s| s.run_time()).collect();
    assert_eq!(runs, vec![ts("2023/11/01 12:00"), ts("2023/11/01 12:30")]);
    let first = loaded.value.get(runs[0]).unwrap();
    assert_eq!(
        first.entries(),
        &[
            (ts("2023/11/01 12:00"), 61.25),
            (ts("2023/11/01 12:30"), -15.75),
            (ts("2023/11/01 13:00"), 300.5)
        ]
    );
    assert_eq!(first.lead_of(ts("2023/11/01 13:00")), 3);
}

#[test]
fn dispatch_duplicates_collapse_and_regions_filter() {
    let spec = AemoTableSpec {
        region: Some("QLD1".into()),
        ..AemoTableSpec::dispatch()
    };
    let loaded = load_actuals(
        &aemo().join("dispatch/PUBLIC_DISPATCHIS_202311011300.CSV"),
        &spec,
        LoadPolicy::FailFast,
    )
    .unwrap();
    let series = loaded.value;
    assert_eq!(series.len(), 12);
    let first = series.interval_prices(ts("2023/11/01 12:00")).unwrap();
    assert_eq!(first, [50.0, 52.5, 48.0, -10.0, 61.5, 55.0]);
    assert!((series.interval_mean(ts("2023/11/01 12:30")).unwrap() - 650.25 / 6.0).abs() < 1e-12);
}

/// Six prices per half-hour: a base plus offsets summing to 5.75.
fn day_base(h: usize) -> f64 {
    match h {
        20 => -30.0,
        36 => 9000.0,
        _ => 40.0 + h as f64,
    }
}

#[test]
fn full_day_of_dispatch_prices() {
    let loaded = load_actuals(
        &aemo().join("day/PUBLIC_DISPATCHIS_DAY_20231102.CSV"),
        &AemoTableSpec::dispatch(),
        LoadPolicy::FailFast,
    )
    .unwrap();
    assert_eq!(loaded.rows, 288);
    let series = loaded.value;
    assert_eq!(series.region(), "SA1");
    let starts: Vec<_> = series.intervals().collect();
    assert_eq!(starts.len(), 48);
    assert_eq!(starts[0], ts("2023/11/02 04:00"));
    assert_eq!(*starts.last().unwrap(), ts("2023/11/03 03:30"));
    for (h, t) in starts.into_iter().enumerate() {
        let want = day_base(h) + 5.75 / 6.0;
        let got = series.interval_mean(t).unwrap();
        assert!((got - want).abs() < 1e-9, "half-hour {h}: {got} vs {want}");
    }
}

#[test]
fn malformed_price_names_its_line() {
    let err = load_forecasts(
        &aemo().join("malformed"),
        &AemoTableSpec::predispatch(),
        LoadPolicy::FailFast,
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let msg = err.to_string();
    assert!(msg.contains(":4") && msg.contains("n/a"), "{msg}");
}

fn row_strategy(with_run: bool) -> impl Strategy<Value = AemoRow> {
    (
        prop::sample::select(vec!["NSW1", "QLD1", "SA1", "VIC1", "TAS1"]),
        0i64..20_000,
        0i64..160,
        prop_oneof![
            (-1000.0f64..16_600.0),
            (-1e6f64..1e6),
            Just(0.0),
            Just(-0.0)
        ],
    )
        .prop_map(move |(region, run, lead, price)| {
            let base = ts("2023/01/01 00:00") + Duration::minutes(30 * run);
            AemoRow {
                region: region.into(),
                run_time: with_run.then_some(base),
                target_time: base + Duration::minutes(30 * lead),
                price,
            }
        })
}

proptest! {
    #[test]
    fn aemo_writer_and_parser_round_trip(rows in prop::collection::vec(row_strategy(true), 0..40)) {
        let spec = AemoTableSpec::predispatch();
        let mut out = Vec::new();
        write_aemo_csv(&rows, &spec, &mut out).unwrap();
        let back = parse_aemo_csv(&out[..], &spec, "round trip").unwrap();
        prop_assert_eq!(back, rows);
    }

    #[test]
    fn dispatch_rows_round_trip(rows in prop::collection::vec(row_strategy(false), 0..40)) {
        let spec = AemoTableSpec::dispatch();
        let mut out = Vec::new();
        write_aemo_csv(&rows, &spec, &mut out).unwrap();
        prop_assert_eq!(parse_aemo_csv(&out[..], &spec, "round trip").unwrap(), rows);
    }

    #[test]
    fn phantoms_appear_only_beyond_the_threshold(seed in 0u64..1000, threshold in 0usize..20) {
        let config = SynthConfig {
            days: 2,
            seed,
            noise_scale: 0.0,
            spike_probability: 0.9,
            phantom_lead_threshold: threshold,
            ..SynthConfig::default()
        };
        let data = synth_generate(&config).unwrap();
        for snap in data.forecasts.iter() {
            for &(target, price) in snap.entries() {
                let truth = data.actuals.interval_mean(target).unwrap();
                let lead = snap.lead_of(target);
                if (price - truth).abs() > 1e-9 {
                    prop_assert!(lead > threshold, "phantom at lead {}", lead);
                    prop_assert!((price - truth - config.spike_magnitude).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn forecast_errors_grow_with_lead() {
    let data = synth_generate(&SynthConfig {
        days: 30,
        seed: 7,
        ..SynthConfig::default()
    })
    .unwrap();
    let stats = forecast_error_stats(&data.forecasts, &data.actuals).unwrap();
    assert_eq!(stats.len(), 80);
    let band = |r: std::ops::Range<usize>| {
        let v: Vec<f64> = stats[r].iter().map(|s| s.mape_pct).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (near, mid, far) = (band(0..10), band(35..45), band(70..80));
    assert!(near < mid && mid < far, "{near} {mid} {far}");
    assert!(stats[0].mape_pct < stats[79].mape_pct);
}

#[test]
fn error_stats_match_a_direct_recount() {
    let data = synth_generate(&SynthConfig {
        days: 3,
        seed: 12,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut by_lead: BTreeMap<usize, (f64, f64, usize, usize)> = BTreeMap::new();
    for snap in data.forecasts.iter() {
        for (i, &(target, forecast)) in snap.entries().iter().enumerate() {
            let Some(six) = data.actuals.interval_prices(target) else {
                continue;
            };
            let actual = six.iter().sum::<f64>() / 6.0;
            let e = by_lead.entry(i + 1).or_insert((0.0, 0.0, 0, 0));
            if actual.abs() < 1.0 {
                e.3 += 1;
                continue;
            }
            let ape = 100.0 * ((forecast - actual) / actual).abs();
            e.0 += ape;
            e.1 = e.1.max(ape);
            e.2 += 1;
        }
    }
    let stats = forecast_error_stats(&data.forecasts, &data.actuals).unwrap();
    assert_eq!(stats.len(), by_lead.len());
    for s in stats {
        let (sum, max, n, excluded) = by_lead[&s.lead_time];
        assert_eq!((s.samples, s.excluded), (n, excluded));
        assert!((s.mape_pct - sum / n as f64).abs() < 1e-9);
        assert!((s.max_ape_pct - max).abs() < 1e-9);
    }
}
