//! Properties that must hold for any configuration.

use proptest::prelude::*;
use spadsim::analysis::{dead_time_correct, predicted_measured_rate};
use spadsim::{run, ActiveQuenchConfig, QuenchMode, SimConfig, SourceStep, Spad, SpadParams};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn active_gap_never_below_dead_time(
        seed in any::<u64>(),
        log_rate in 4.0f64..8.5,
        v_over in 0.5f64..8.0,
        t_case in -30.0f64..25.0,
        t_sense in 1_000u64..30_000,
        t_quench in 1_000u64..30_000,
        t_recover in 1_000u64..5_000,
        afterpulsing in any::<bool>(),
        thermal in any::<bool>(),
        step in any::<bool>(),
    ) {
        let spad = Spad::new(SpadParams { ap_slope: 0.05, ..SpadParams::default() }).unwrap();
        let q = ActiveQuenchConfig { t_sense, t_quench, t_recover, ..Default::default() };
        let rate = 10f64.powf(log_rate);
        let mut cfg = SimConfig::constant(rate, 2e-3, seed, t_case, spad.breakdown_voltage(t_case) + v_over, QuenchMode::Active(q));
        cfg.afterpulsing = afterpulsing;
        cfg.thermal_feedback = thermal;
        if step {
            cfg.source_program.push(SourceStep { start: 1e-3, rate: rate / 50.0 });
        }
        let rec = run(&cfg, &spad).unwrap();
        let d = q.dead_time();
        prop_assert!(rec.pulses.windows(2).all(|w| w[1] - w[0] >= d));
        prop_assert!(rec.pulses.iter().all(|&p| p < rec.duration));
    }

    #[test]
    fn passive_output_is_ordered(seed in any::<u64>(), log_rate in 4.0f64..8.0) {
        let spad = Spad::new(SpadParams::default()).unwrap();
        let cfg = SimConfig::constant(
            10f64.powf(log_rate), 2e-3, seed, 20.0, spad.breakdown_voltage(20.0) + 5.0,
            QuenchMode::Passive(Default::default()),
        );
        let rec = run(&cfg, &spad).unwrap();
        prop_assert!(rec.pulses.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(rec.n_avalanches >= rec.pulses.len() as u64);
    }

    #[test]
    fn correction_inverts_response_without_dark(log_f in 0.0f64..6.0, d in 1e-9f64..1e-7) {
        let f = 100.0 * 10f64.powf(log_f);
        let back = dead_time_correct(predicted_measured_rate(f, 0.0, d), 0.0, d).unwrap();
        prop_assert!((back / f - 1.0).abs() < 1e-12);
    }
}
