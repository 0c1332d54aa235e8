//! Acceptance suite: every criterion runs at its stated tolerance and
//! runtime budget, and prints one PASS/FAIL line.
//!
//! The process exits non-zero on any failure not listed in
//! [`KNOWN_FAILURES`]. A known failure must still match its documented
//! explanation (checked against an independent oracle), otherwise it counts
//! as unexpected too.

use std::time::{Duration, Instant};

use spadsim::analysis::{dead_time_correct, predicted_measured_rate, RateEstimate};
use spadsim::scenarios::{run_scenario, Config};
use spadsim::scenarios::ScenarioName as S;
use spadsim::{run, ActiveQuenchConfig, QuenchMode, SimConfig, SourceStep, Spad, SpadParams};

/// The passive peak cannot fall in the target window under the mandated
/// re-arm rule and τ; see `passive_renewal_peak`.
const KNOWN_FAILURES: &[u32] = &[4];

struct Outcome {
    pass: bool,
    detail: String,
    /// For known failures: whether the failure matches its explanation.
    explained: bool,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Outcome { pass, detail, explained: false }
    }
}

type Check = fn() -> Outcome;

fn main() {
    let criteria: [(u32, &str, u64, Check); 9] = [
        (1, "dead time", 10, c1_dead_time),
        (2, "non-paralyzable agreement", 60, c2_c3_counting),
        (3, "linearity after correction", 60, c2_c3_counting),
        (4, "maximum counting rate", 60, c4_max_rate),
        (5, "breakdown tempco recovery", 120, c5_breakdown),
        (6, "dark-rate exponential", 60, c6_dark),
        (7, "SNR shape", 120, c7_snr),
        (8, "thermal transient", 60, c8_thermal),
        (9, "algebra and determinism", 10, c9_properties),
    ];
    let mut cached_c2: Option<(Outcome, Outcome, Duration)> = None;
    let mut unexpected = Vec::new();
    let mut passed = 0;
    for (id, name, budget, check) in criteria {
        let (out, elapsed) = if id == 2 || id == 3 {
            // criteria 2 and 3 share one set of runs
            let (a, b, dt) = cached_c2.get_or_insert_with(|| {
                let t0 = Instant::now();
                let (a, b) = counting_runs();
                (a, b, t0.elapsed())
            });
            let o = if id == 2 { a } else { b };
            (Outcome { pass: o.pass, detail: o.detail.clone(), explained: o.explained }, *dt)
        } else {
            let t0 = Instant::now();
            let o = check();
            (o, t0.elapsed())
        };
        let in_budget = elapsed < Duration::from_secs(budget);
        let pass = out.pass && in_budget;
        println!(
            "{} criterion {id} ({name}): {} [{:.1} s / {budget} s]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
        if pass {
            passed += 1;
        } else if !(KNOWN_FAILURES.contains(&id) && out.explained && in_budget) {
            unexpected.push(id);
        }
    }
    println!("{passed}/9 criteria passed");
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

fn scenario(name: S, overrides: &str) -> spadsim::scenarios::ScenarioOutput {
    let cfg = if overrides.is_empty() {
        Config::defaults(name)
    } else {
        spadsim::scenarios::parse_config_for(overrides, Some(name)).unwrap()
    };
    run_scenario(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn c1_dead_time() -> Outcome {
    let out = scenario(S::DeadTime, "");
    let min_gap = out.get("min_gap_ps").unwrap();
    let below = out.get("counts_below_dead_time").unwrap();
    let n = out.get("n_pulses").unwrap();
    Outcome::new(
        min_gap == 39_000.0 && below == 0.0 && n >= 1e6,
        format!("min gap {min_gap} ps, {below} counts below, {n} pulses"),
    )
}

fn c2_c3_counting() -> Outcome {
    unreachable!("handled through counting_runs")
}

/// Runs the five ideal-counter points once; returns the outcomes of the
/// agreement and corrected-linearity criteria.
fn counting_runs() -> (Outcome, Outcome) {
    // dark counts off; afterpulsing and thermal feedback are off by default
    let spad = Spad::new(SpadParams { dark_rate_ref: 0.0, ..SpadParams::default() }).unwrap();
    let q = ActiveQuenchConfig::default();
    let d = q.dead_time_secs();
    let v_bias = spad.breakdown_voltage(20.0) + 5.0;
    let (mut agree, mut linear) = (true, true);
    let (mut worst_sigma, mut worst_dev): (f64, f64) = (0.0, 0.0);
    for (i, f_true) in [0.1e6, 1e6, 5e6, 10e6, 20e6].into_iter().enumerate() {
        let duration = 1e7 / f_true;
        let mut cfg = SimConfig::constant(f_true, duration, 1000 + i as u64, 20.0, v_bias, QuenchMode::Active(q));
        cfg.unit_efficiency = true;
        let rec = run(&cfg, &spad).unwrap();
        assert!(rec.n_photons_offered.abs_diff(10_000_000) < 20_000);
        let est = RateEstimate::from_pulses(&rec.pulses, (0.0, duration)).unwrap();
        let expect = predicted_measured_rate(f_true, 0.0, d);
        let sigma = (est.rate - expect).abs() / est.std_error;
        worst_sigma = worst_sigma.max(sigma);
        agree &= sigma < 3.0;
        if f_true <= 10e6 {
            let corr = dead_time_correct(est.rate, 0.0, d).unwrap();
            let dev = (corr - f_true).abs() / f_true;
            worst_dev = worst_dev.max(dev);
            linear &= dev < 0.03;
        }
    }
    (
        Outcome::new(agree, format!("worst deviation {worst_sigma:.2} standard errors")),
        Outcome::new(linear, format!("worst corrected deviation {:.3}% up to 10 MHz", worst_dev * 100.0)),
    )
}

/// Independent renewal-theory oracle for the passive counter: after each
/// avalanche the overvoltage recovers as V(1 − e^{−t/τ}), the next trigger
/// time has hazard λ·DE(v(t))/DE(V), and the trigger yields a pulse if the
/// overvoltage has reached the re-arm fraction. Returns the peak of
/// P(pulse)/E[cycle] over photon-carrier rates λ.
fn passive_renewal_peak(v: f64, tau: f64, frac: f64) -> f64 {
    let de = |x: f64| 0.710708 * (1.0 - (-x / 14.76411).exp());
    let n = 60_000;
    let dt = 30.0 * tau / n as f64;
    let p: Vec<f64> = (0..=n).map(|k| de(v * (1.0 - (-(k as f64) * dt / tau).exp())) / de(v)).collect();
    let rate = |lam: f64| {
        let (mut h, mut et, mut pp) = (0.0f64, 0.0, 0.0);
        for (k, pk) in p.iter().enumerate() {
            let t = k as f64 * dt;
            let dens = lam * pk * (-h).exp();
            et += t * dens * dt;
            if 1.0 - (-t / tau).exp() >= frac {
                pp += dens * dt;
            }
            h += lam * pk * dt;
        }
        pp / et
    };
    (0..=280).map(|k| rate(10f64.powf(5.0 + k as f64 / 80.0))).fold(0.0, f64::max)
}

fn c4_max_rate() -> Outcome {
    let fmax = scenario(S::FmaxVsOvervoltage, "");
    let bound = 1.0 / 39e-9;
    let t = &fmax.table;
    let (v, f) = (t.column("v_over").unwrap(), t.column("fmax").unwrap());
    let at5: Vec<f64> = v.iter().zip(&f).filter(|(v, _)| **v == 5.0).map(|(_, f)| *f).collect();
    let above = !at5.is_empty() && at5.iter().all(|&x| x > 14e6 && x < bound);
    let searches_monotone = fmax.get("all_monotone") == Some(1.0);

    // explicit intensity sweep at 5 V: measured rate must rise toward 1/d
    let spad = Spad::new(SpadParams::default()).unwrap();
    let v_bias = spad.breakdown_voltage(20.0) + 5.0;
    let mut sweep = Vec::new();
    for (i, photons) in [1e6, 3e6, 1e7, 3e7, 1e8, 1.9e8].into_iter().enumerate() {
        let mut cfg = SimConfig::constant(photons, 0.02, 77 + i as u64, 20.0, v_bias, QuenchMode::Active(Default::default()));
        cfg.afterpulsing = true;
        sweep.push(run(&cfg, &spad).unwrap().mean_rate());
    }
    let approaches = sweep.windows(2).all(|w| w[1] > w[0]) && sweep.iter().all(|&r| r < bound);

    let passive = scenario(S::PassiveBaseline, "");
    let peak = passive.get("peak_rate").unwrap();
    let in_window = (0.15e6..=0.6e6).contains(&peak);
    let oracle = passive_renewal_peak(5.0, 660e-9, 0.5);
    let matches_oracle = (peak / oracle - 1.0).abs() < 0.03;

    let active_ok = above && searches_monotone && approaches;
    Outcome {
        pass: active_ok && in_window,
        detail: format!(
            "active fmax at 5 V {:.2} MHz (bound {:.2}), monotone {}; passive peak {:.3} MHz {} [0.15, 0.6] \
             (renewal oracle {:.3} MHz)",
            at5.iter().cloned().fold(0.0, f64::max) / 1e6,
            bound / 1e6,
            searches_monotone && approaches,
            peak / 1e6,
            if in_window { "inside" } else { "outside" },
            oracle / 1e6
        ),
        explained: active_ok && !in_window && matches_oracle,
    }
}

fn c5_breakdown() -> Outcome {
    let vbr = scenario(S::VbrVsTemp, "");
    let n = vbr.table.len();
    let slope = vbr.get("tempco_fit").unwrap();
    let resp = scenario(S::ResponseVsTemp, "");
    let dev = resp.get("max_deviation_sigma").unwrap();
    Outcome::new(
        n == 8 && (slope - 0.655).abs() <= 0.01 && dev < 3.0,
        format!("{n} temperatures, slope {slope:.4} V/K, response max deviation {dev:.2} sigma"),
    )
}

fn c6_dark() -> Outcome {
    let out = scenario(S::DarkVsTemp, "");
    let t = out.table.column("t_case").unwrap();
    let r2 = out.get("r_squared").unwrap();
    let td = out.get("t_double_fit").unwrap();
    let configured = SpadParams::default().t_double;
    Outcome::new(
        t.first() == Some(&-30.0) && t.last() == Some(&20.0) && r2 > 0.999 && (td / configured - 1.0).abs() < 0.05,
        format!("r^2 {r2:.6}, doubling {td:.3} K (configured {configured})"),
    )
}

fn c7_snr() -> Outcome {
    let out = scenario(S::SnrVsOvervoltage, "");
    let t = &out.table;
    let (v, norm) = (t.column("v_over").unwrap(), t.column("snr_norm").unwrap());
    let exact = v.iter().zip(&norm).filter(|(v, _)| **v == 3.5).all(|(_, n)| *n == 1.0);
    let n_ref = v.iter().filter(|v| **v == 3.5).count();
    let peaks: Vec<(String, f64)> =
        out.summary.iter().filter(|(k, _)| k.starts_with("peak_v_over[")).cloned().collect();
    let interior = peaks.iter().all(|(_, p)| (1.5..=4.5).contains(p));
    let spread = out.get("peak_spread_across_levels").unwrap();
    Outcome::new(
        exact && n_ref == 12 && peaks.len() == 12 && interior && spread < 0.5,
        format!(
            "{} curves, 1.0 at 3.5 V: {exact}, peaks {:.2}..{:.2} V, spread across levels {spread:.2} V",
            peaks.len(),
            out.get("peak_v_over_min").unwrap(),
            out.get("peak_v_over_max").unwrap()
        ),
    )
}

fn c8_thermal() -> Outcome {
    let tau_th = SpadParams::default().tau_th;
    let on = scenario(S::DynamicResponse, "[scenario]\ncycles = 4\nreference = false\n");
    let tau = on.get("droop_tau").unwrap();
    let off = scenario(
        S::DynamicResponse,
        "[scenario]\ncycles = 2\nreference = false\nthermal_feedback = false\n",
    );
    let slope_sigma = off.get("high_slope").unwrap() / off.get("high_slope_err").unwrap();
    let droop_rel = on.get("droop_rel").unwrap();
    Outcome::new(
        (tau / tau_th - 1.0).abs() < 0.10 && droop_rel > 0.0 && slope_sigma.abs() < 3.0,
        format!(
            "feedback on: tau {tau:.3} s (tau_th {tau_th}), droop {:.2}%; feedback off: plateau slope {slope_sigma:.2} sigma",
            droop_rel * 100.0
        ),
    )
}

fn c9_properties() -> Outcome {
    // round trip at zero dark rate
    let mut worst: f64 = 0.0;
    for d in [1e-9, 18e-9, 39e-9, 100e-9] {
        for k in 0..=60 {
            let f = 10f64.powf(1.0 + k as f64 * 0.1);
            let back = dead_time_correct(predicted_measured_rate(f, 0.0, d), 0.0, d).unwrap();
            worst = worst.max((back / f - 1.0).abs());
        }
    }
    let round_trip = worst < 1e-12;

    // byte-identical CSV for repeated seeds
    let determinism = [
        (S::DeadTime, "[scenario]\nduration = 0.01\nseed = 5\n"),
        (S::Linearity, "[scenario]\nduration = 0.01\nrate_steps = 4\nseed = 5\n"),
        (S::DarkVsTemp, "[scenario]\ntarget_counts = 5e3\nseed = 5\n"),
    ]
    .iter()
    .all(|(name, text)| {
        let a = scenario(*name, text).table.to_csv_string();
        let b = scenario(*name, text).table.to_csv_string();
        a == b
    });

    // minimum-gap invariant over a corpus of active configurations
    let mut corpus_ok = true;
    let mut n_pulses = 0usize;
    for i in 0..40u64 {
        let spad = Spad::new(SpadParams { ap_slope: 0.05 * (i % 3) as f64, ..SpadParams::default() }).unwrap();
        let q = ActiveQuenchConfig {
            t_sense: 2_000 + 1_000 * (i % 20),
            t_quench: 3_000 + 700 * (i % 11),
            t_recover: 1_000 + 500 * (i % 5),
            ..Default::default()
        };
        let rate = 10f64.powf(4.0 + (i % 9) as f64 * 0.5);
        let t_case = -30.0 + (i % 6) as f64 * 10.0;
        let v_bias = spad.breakdown_voltage(t_case) + 0.5 + (i % 8) as f64;
        let mut cfg = SimConfig::constant(rate, 5e-3, i, t_case, v_bias, QuenchMode::Active(q));
        cfg.afterpulsing = i % 2 == 0;
        cfg.thermal_feedback = i % 4 < 2;
        if i % 3 == 0 {
            cfg.source_program.push(SourceStep { start: 2.5e-3, rate: rate * 10.0 });
        }
        let rec = run(&cfg, &spad).unwrap();
        n_pulses += rec.pulses.len();
        corpus_ok &= rec.pulses.windows(2).all(|w| w[1] - w[0] >= q.dead_time());
    }
    Outcome::new(
        round_trip && determinism && corpus_ok,
        format!(
            "round trip worst {worst:.1e}, repeated-seed CSV identical {determinism}, \
             gap invariant over {n_pulses} pulses {corpus_ok}"
        ),
    )
}
