mod common;

use arbmpc_core::*;
use chrono::Duration;
use common::*;

fn synthetic(config: SynthConfig) -> (SynthConfig, MarketData) {
    let data = synth_generate(&config).unwrap();
    (config, data)
}

#[test]
fn constant_prices_obey_the_energy_identity() {
    let (synth, data) = synthetic(SynthConfig {
        days: 3,
        daily_amplitude: 0.0,
        spike_probability: 0.0,
        noise_scale: 0.0,
        ..SynthConfig::default()
    });
    let mut config = BacktestConfig::new(synth.origin(), synth.end());
    config.initial_soc = 0.8;
    let ledger = run_backtest(&config, &data).unwrap();
    check_ledger_physics(&ledger, &config.battery).unwrap();
    let b = config.battery;
    let final_soc = ledger.entries.last().unwrap().soc;
    let identity = synth.base_price * b.e_nom / b.eta * (config.initial_soc - final_soc);
    let (profit, n) = annual_profit(&ledger).unwrap();
    assert_eq!(n, 3 * 48);
    assert!(
        (profit - identity).abs() < 1e-9 * (1.0 + identity.abs()),
        "{profit} vs {identity}"
    );
    assert!(
        final_soc < config.initial_soc,
        "a positive flat price should be sold into"
    );
}

#[test]
fn phantom_scenario_rewards_discounting() {
    let data = phantom_scenario();
    let origin = phantom_origin();
    let base = BacktestConfig::new(origin, origin + Duration::hours(24));
    let sweep = run_sweep(&base, &data, &SweepGrid::default(), 2).unwrap();
    for row in sweep.grid_rows() {
        if row.spec.scheme == Scheme::PowerLaw && row.spec.gamma0 == 0.95 && row.spec.s == 1 {
            assert!(row.uplift_pct > 0.0, "{:?}", row.spec);
        }
    }
    let best = sweep
        .grid_rows()
        .max_by(|a, b| a.uplift_pct.total_cmp(&b.uplift_pct))
        .unwrap();
    // Cosine anneal with the squared regulariser spreads the discharge over
    // the real spike and wins this scenario.
    assert_eq!(best.spec.scheme, Scheme::CosineAnneal, "{:?}", best.spec);
    assert!(best.uplift_pct > 0.0);
    let report = compare_report(&sweep).unwrap();
    assert!(
        report.summary.contains("cosine_anneal"),
        "{}",
        report.summary
    );
}

#[test]
fn phantom_ledgers_match_the_simplex_resimulation() {
    let data = phantom_scenario();
    let origin = phantom_origin();
    let params = BatteryParams::default();
    for (scheme, g0) in [
        (Scheme::None, 1.0),
        (Scheme::PowerLaw, 0.95),
        (Scheme::PowerLaw, 0.99),
    ] {
        let mut config = BacktestConfig::new(origin, origin + Duration::hours(24));
        config.discount = if scheme == Scheme::None {
            DiscountSpec::none()
        } else {
            DiscountSpec::new(scheme, g0, 0.0, 1)
        };
        let ledger = run_backtest(&config, &data).unwrap();
        check_ledger_physics(&ledger, &params).unwrap();
        let oracle = oracle_backtest(&data, scheme, g0, 0.0, &params, 0.1, origin, PHANTOM_STEPS);
        let worst = ledger
            .entries
            .iter()
            .zip(&oracle.powers)
            .map(|(e, p)| (e.power_mw - p).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "{scheme} {g0}: power differs by {worst}");
        for (e, i) in ledger.entries.iter().zip(0..) {
            assert_eq!(e.t_k, oracle_horizon(origin + Duration::minutes(30 * i)));
        }
    }
}

#[test]
fn sweep_does_not_depend_on_point_order() {
    let (synth, data) = synthetic(SynthConfig {
        days: 1,
        seed: 21,
        ..SynthConfig::default()
    });
    let base = BacktestConfig::new(synth.origin(), synth.end());
    let grid = SweepGrid {
        schemes: vec![Scheme::PowerLaw, Scheme::CosineAnneal],
        gamma0s: vec![0.95],
        lambdas: vec![1.0, 0.0],
        norms: vec![1],
    };
    let reversed = SweepGrid {
        schemes: vec![Scheme::CosineAnneal, Scheme::PowerLaw],
        lambdas: vec![0.0, 1.0],
        ..grid.clone()
    };
    let a = run_sweep(&base, &data, &grid, 1).unwrap();
    let b = run_sweep(&base, &data, &reversed, 2).unwrap();
    assert_eq!(
        a.rows[0].annual_profit.to_bits(),
        b.rows[0].annual_profit.to_bits()
    );
    for row in a.grid_rows() {
        let other = b.grid_rows().find(|r| r.spec == row.spec).unwrap();
        assert_eq!(
            row.annual_profit.to_bits(),
            other.annual_profit.to_bits(),
            "{:?}",
            row.spec
        );
    }
}

#[test]
fn warm_and_cold_starts_agree() {
    let (synth, data) = synthetic(SynthConfig {
        days: 2,
        seed: 4,
        ..SynthConfig::default()
    });
    for spec in [
        DiscountSpec::none(),
        DiscountSpec::new(Scheme::SimulatedAnneal, 0.99, 0.5, 2),
    ] {
        let mut config = BacktestConfig::new(synth.origin(), synth.end());
        config.discount = spec;
        let warm = run_backtest(&config, &data).unwrap();
        config.warm_start = false;
        let cold = run_backtest(&config, &data).unwrap();
        check_ledger_physics(&warm, &config.battery).unwrap();
        check_ledger_physics(&cold, &config.battery).unwrap();
        let (pw, _) = annual_profit(&warm).unwrap();
        let (pc, _) = annual_profit(&cold).unwrap();
        assert!(
            (pw - pc).abs() <= 1e-3 * pc.abs().max(1.0),
            "{:?}: warm {pw} cold {pc}",
            spec.scheme
        );
        for (w, c) in warm.entries.iter().zip(&cold.entries) {
            assert_eq!(w.status, c.status);
            let scale = 1.0 + c.objective.abs();
            assert!(
                (w.objective - c.objective).abs() <= 1e-4 * scale,
                "{}: {} vs {}",
                w.interval_start,
                w.objective,
                c.objective
            );
        }
    }
}

#[test]
fn policies_keep_the_physics() {
    let (synth, mut data) = synthetic(SynthConfig {
        days: 1,
        seed: 9,
        ..SynthConfig::default()
    });
    let holes = [
        synth.origin() + Duration::hours(3),
        synth.origin() + Duration::hours(15),
    ];
    let kept: Vec<_> = data
        .forecasts
        .iter()
        .filter(|s| !holes.contains(&s.run_time()))
        .cloned()
        .collect();
    data.forecasts = kept.into_iter().collect();
    let mut config = BacktestConfig::new(synth.origin(), synth.end());
    config.initial_soc = 0.6;
    assert_eq!(run_backtest(&config, &data).unwrap_err().exit_code(), 3);
    for policy in [
        MissingSnapshotPolicy::ForwardFill,
        MissingSnapshotPolicy::SkipZeroDispatch,
    ] {
        config.policy = policy;
        let ledger = run_backtest(&config, &data).unwrap();
        check_ledger_physics(&ledger, &config.battery).unwrap();
        let skipped = ledger.count(StepStatus::Skipped);
        match policy {
            MissingSnapshotPolicy::SkipZeroDispatch => assert_eq!(skipped, 2),
            _ => assert_eq!(skipped, 0),
        }
    }
}

/// Reference profits for a full-year comparison, in grid order (scheme, s,
/// gamma0, lambda) with gamma0 in {0.95, 0.99} and lambda in {1, 0.5, 0}.
const TABLE: [(Scheme, u8, [f64; 6]); 6] = [
    (
        Scheme::SimulatedAnneal,
        1,
        [272035.1, 271893.4, 271712.3, 273529.7, 273404.7, 273334.9],
    ),
    (
        Scheme::SimulatedAnneal,
        2,
        [272590.8, 272280.5, 271721.7, 273283.1, 273256.5, 273364.4],
    ),
    (
        Scheme::CosineAnneal,
        1,
        [268877.0, 268723.5, 268543.4, 268877.0, 268723.5, 268543.4],
    ),
    (
        Scheme::CosineAnneal,
        2,
        [268485.4, 269169.5, 268582.1, 268480.8, 269163.6, 268578.0],
    ),
    (
        Scheme::PowerLaw,
        1,
        [282015.6, 281880.6, 281179.3, 256313.2, 256169.6, 256109.4],
    ),
    (
        Scheme::PowerLaw,
        2,
        [281990.0, 281842.7, 281189.9, 256457.8, 256202.4, 256129.5],
    ),
];

#[test]
fn report_on_reference_table() {
    let mut points = Vec::new();
    for (scheme, s, cells) in TABLE {
        for (i, p) in cells.into_iter().enumerate() {
            let gamma0 = [0.95, 0.99][i / 3];
            let lambda = [1.0, 0.5, 0.0][i % 3];
            points.push((DiscountSpec::new(scheme, gamma0, lambda, s), p));
        }
    }
    let sweep = SweepResult::from_profits(230699.89, points);
    assert_eq!(sweep.rows.len(), 37);
    let report = compare_report(&sweep).unwrap();
    let best = &sweep.rows[report.best.unwrap()];
    assert_eq!(best.spec, DiscountSpec::new(Scheme::PowerLaw, 0.95, 1.0, 1));
    assert_eq!(best.annual_profit, 282015.6);
    assert_eq!(format!("{:.2}", best.uplift_pct), "22.24");
    assert!(report.summary.contains("22.24"), "{}", report.summary);

    let marked: Vec<(Scheme, u8, f64, f64)> = report
        .marked
        .iter()
        .map(|&i| {
            let s = sweep.rows[i].spec;
            (s.scheme, s.s, s.gamma0, s.lambda)
        })
        .collect();
    let mut expected = vec![
        (Scheme::PowerLaw, 1, 0.95, 1.0),
        (Scheme::PowerLaw, 1, 0.95, 0.5),
        (Scheme::PowerLaw, 2, 0.95, 0.0),
        (Scheme::SimulatedAnneal, 1, 0.99, 1.0),
        (Scheme::SimulatedAnneal, 1, 0.99, 0.5),
        (Scheme::SimulatedAnneal, 2, 0.99, 0.0),
    ];
    expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut got = marked.clone();
    got.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(got, expected);
}
