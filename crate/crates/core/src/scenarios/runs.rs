//! Per-scenario sweep logic.

use rayon::prelude::*;

use super::bias::{find_breakdown, DarkHarness};
use super::{Config, ScenarioName, ScenarioOutput, ScenarioSpec, Table};
use crate::analysis::{
    dead_time_correct, fit_exp_decay, fit_exponential, fit_linear, interarrival_histogram, max_rate_search,
    predicted_measured_rate, snr_curve, snr_peak, RateEstimate,
};
use crate::device::{Led, Spad, SpadParams};
use crate::engine::{derive_seed, run, PulseRecord, SimConfig, SourceStep};
use crate::error::{AnalysisError, ScenarioError, SimError};
use crate::quench::{ActiveQuenchConfig, QuenchMode};
use crate::secs_from_ps;

/// Runs the configured scenario.
pub fn run_scenario(cfg: &Config) -> Result<ScenarioOutput, ScenarioError> {
    cfg.validate()?;
    let ctx = Ctx {
        spec: &cfg.scenario,
        spad: Spad::new(cfg.spad.clone()).map_err(|source| model_err("device", source))?,
        led: Led::new(cfg.led.clone()).map_err(|source| model_err("led", source))?,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.scenario.workers)
        .build()
        .expect("thread pool");
    pool.install(|| match cfg.scenario.name {
        ScenarioName::VbrVsTemp => vbr_vs_temp(&ctx),
        ScenarioName::ResponseVsTemp => response_vs_temp(&ctx),
        ScenarioName::DarkVsTemp => dark_vs_temp(&ctx),
        ScenarioName::NoiseSignalVsOvervoltage => noise_signal(&ctx),
        ScenarioName::SnrVsOvervoltage => snr_vs_overvoltage(&ctx),
        ScenarioName::Linearity => linearity(&ctx),
        ScenarioName::FmaxVsOvervoltage => fmax(&ctx),
        ScenarioName::DynamicResponse => dynamic_response(&ctx),
        ScenarioName::DeadTime => dead_time(&ctx),
        ScenarioName::PassiveBaseline => passive_baseline(&ctx),
    })
}

fn model_err(point: &str, source: crate::error::ModelError) -> ScenarioError {
    ScenarioError::Model { point: point.into(), source }
}

fn analysis_err(point: impl Into<String>) -> impl FnOnce(AnalysisError) -> ScenarioError {
    let point = point.into();
    move |source| ScenarioError::Analysis { point, source }
}

struct Ctx<'a> {
    spec: &'a ScenarioSpec,
    spad: Spad,
    led: Led,
}

/// A rate measurement: raw counter reading and its dead-time corrected value.
#[derive(Debug, Clone, Copy)]
struct Reading {
    raw: RateEstimate,
}

impl Reading {
    fn rate(&self) -> f64 {
        self.raw.rate
    }

    fn err(&self) -> f64 {
        self.raw.std_error
    }
}

impl Ctx<'_> {
    fn dead_time(&self) -> f64 {
        self.spec.active.dead_time_secs()
    }

    fn active(&self) -> QuenchMode {
        QuenchMode::Active(self.spec.active)
    }

    fn bias_for(&self, t_case: f64, v_over: f64) -> f64 {
        self.spad.breakdown_voltage(t_case) + v_over
    }

    /// Photon rate delivered by the LED when driven for `nominal` photons/s at
    /// its calibration temperature, and the drive current.
    fn led_light(&self, nominal: f64, point: &str) -> Result<(f64, f64), ScenarioError> {
        let i = self.led.current_for_rate(nominal).map_err(|s| model_err(point, s))?;
        let rate = self.led.photon_rate(i, self.spec.t_led).map_err(|s| model_err(point, s))?;
        Ok((i, rate))
    }

    fn sim(&self, photon_rate: f64, duration: f64, seed: u64, t_case: f64, v_bias: f64) -> SimConfig {
        let mut c = SimConfig::constant(photon_rate, duration, seed, t_case, v_bias, self.active());
        c.afterpulsing = self.spec.afterpulsing;
        c.thermal_feedback = self.spec.thermal_feedback;
        c.queue_cap = self.spec.queue_cap;
        c
    }

    fn run(&self, cfg: &SimConfig, point: &str) -> Result<PulseRecord, ScenarioError> {
        self.run_with(cfg, &self.spad, point)
    }

    fn run_with(&self, cfg: &SimConfig, spad: &Spad, point: &str) -> Result<PulseRecord, ScenarioError> {
        run(cfg, spad).map_err(|source: SimError| ScenarioError::Sim { point: point.into(), source })
    }

    fn read(&self, cfg: &SimConfig, point: &str) -> Result<Reading, ScenarioError> {
        let rec = self.run(cfg, point)?;
        let raw = RateEstimate::from_pulses(&rec.pulses, (0.0, cfg.duration)).map_err(analysis_err(point))?;
        Ok(Reading { raw })
    }

    /// Gate giving about `target_counts` counts at the expected rate.
    fn gate(&self, expected: f64) -> f64 {
        let s = self.spec;
        if expected <= 0.0 {
            return s.max_gate;
        }
        (s.target_counts / expected).clamp(s.min_gate, s.max_gate)
    }

    /// Model prediction of the counter reading (for gate sizing only).
    fn expected_rate(&self, photon_rate: f64, t_case: f64, v_over: f64) -> f64 {
        let f_true = photon_rate * self.spad.detection_efficiency(v_over);
        predicted_measured_rate(f_true, self.spad.dark_rate(t_case, v_over), self.dead_time())
    }

    fn dark_reading(&self, t_case: f64, v_bias: f64, seed: u64, point: &str) -> Result<Reading, ScenarioError> {
        let v_over = self.spad.overvoltage(t_case, v_bias);
        let gate = self.gate(self.expected_rate(0.0, t_case, v_over));
        self.read(&self.sim(0.0, gate, seed, t_case, v_bias), point)
    }

    fn light_reading(
        &self,
        photon_rate: f64,
        t_case: f64,
        v_bias: f64,
        seed: u64,
        point: &str,
    ) -> Result<Reading, ScenarioError> {
        let v_over = self.spad.overvoltage(t_case, v_bias);
        let gate = self.gate(self.expected_rate(photon_rate, t_case, v_over));
        self.read(&self.sim(photon_rate, gate, seed, t_case, v_bias), point)
    }

    /// Dark-subtracted, dead-time corrected rate with propagated error.
    fn corrected(&self, light: &Reading, dark: &Reading, point: &str) -> Result<(f64, f64), ScenarioError> {
        let d = self.dead_time();
        let f = dead_time_correct(light.rate(), dark.rate(), d).map_err(analysis_err(point))?;
        let load = 1.0 - light.rate() * d;
        let df_dmeas = (1.0 - dark.rate() * d) / (load * load);
        let err = ((df_dmeas * light.err()).powi(2) + (dark.err() / load).powi(2)).sqrt();
        Ok((f, err))
    }

    fn seed(&self, index: usize) -> u64 {
        derive_seed(self.spec.seed, index as u64)
    }

    fn dark_harness(&self, seed: u64) -> DarkHarness<'_> {
        DarkHarness {
            spad: &self.spad,
            quench: self.active(),
            afterpulsing: self.spec.afterpulsing,
            gate: self.spec.breakdown_gate,
            seed,
        }
    }
}

/// Runs `f` over indexed items in parallel; results keep item order.
fn par_points<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(usize, &T) -> Result<R, ScenarioError> + Sync,
) -> Result<Vec<R>, ScenarioError> {
    items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

fn vbr_vs_temp(ctx: &Ctx) -> Result<ScenarioOutput, ScenarioError> {
    let s = ctx.spec;
    let found = par_points(&s.t_cases, |i, &t| {
        find_breakdown(&ctx.dark_harness(ctx.seed(i)), t, s.dark_threshold, &s.bias)
    })?;
    let mut table = Table::new(&["t_case", "v_br_found", "v_br_model"]);
    for (&t, &v) in s.t_cases.iter().zip(&found) {
        table.push(vec![t, v, ctx.spad.breakdown_voltage(t)]);
    }
    let mut summary = Vec::new();
    if s.t_cases.len() >= 2 {
        let fit = fit_linear(&s.t_cases, &found).map_err(analysis_err("tempco fit"))?;
        summary.push(("tempco_fit".into(), fit.coefficients[1]));
        summary.push(("tempco_std_error".into(), fit.std_errors[1]));
        summary.push(("v_br_at_0c".into(), fit.coefficients[0]));
        summary.push(("r_squared".into(), fit.r_squared));
    }
    let worst = s
        .t_cases
        .iter()
        .zip(&found)
        .map(|(&t, &v)| (v - ctx.spad.breakdown_voltage(t)).abs())
        .fold(0.0, f64::max);
    summary.push(("max_abs_offset".into(), worst));
    Ok(ScenarioOutput { table, summary })
}

fn response_vs_temp(ctx: &Ctx) -> Result<ScenarioOutput, ScenarioError> {
    let s = ctx.spec;
    let (current, photons) = ctx.led_light(s.photon_rate, "light source")?;
    let rows = par_points(&s.t_cases, |i, &t| {
        let seed = ctx.seed(i);
        let point = format!("t_case {t} °C");
        let v_br = find_breakdown(&ctx.dark_harness(derive_seed(seed, 0)), t, s.dark_threshold, &s.bias)?;
        let v_bias = s.bias.quantize(v_br + s.v_over);
        let light = ctx.read(&ctx.sim(photons, s.duration, derive_seed(seed, 1), t, v_bias), &point)?;
        let dark = ctx.dark_reading(t, v_bias, derive_seed(seed, 2), &point)?;
        let (corr, corr_err) = ctx.corrected(&light, &dark, &point)?;
        Ok(vec![
            t,
            v_br,
            v_bias,
            ctx.spad.overvoltage(t, v_bias),
            light.rate(),
            light.err(),
            dark.rate(),
            corr,
            corr_err,
        ])
    })?;
    let mut table = Table::new(&[
        "t_case",
        "v_br_found",
        "v_bias",
        "v_over_true",
        "rate_raw",
        "rate_raw_err",
        "dark_rate",
        "rate_corrected",
        "rate_corrected_err",
    ]);
    rows.into_iter().for_each(|r| table.push(r));
    let (rates, errs) = (table.column("rate_corrected").unwrap(), table.column("rate_corrected_err").unwrap());
    let weights: Vec<f64> = errs.iter().map(|e| 1.0 / (e * e)).collect();
    let wsum: f64 = weights.iter().sum();
    let mean = rates.iter().zip(&weights).map(|(r, w)| r * w).sum::<f64>() / wsum;
    let chi2: f64 = rates.iter().zip(&errs).map(|(r, e)| ((r - mean) / e).powi(2)).sum();
    let max_dev = rates.iter().zip(&errs).map(|(r, e)| ((r - mean) / e).abs()).fold(0.0, f64::max);
    let summary = vec![
        ("led_current".into(), current),
        ("mean_rate_corrected".into(), mean),
        ("chi2".into(), chi2),
        ("dof".into(), (rates.len().max(1) - 1) as f64),
        ("max_deviation_sigma".into(), max_dev),
    ];
    Ok(ScenarioOutput { table, summary })
}

fn dark_vs_temp(ctx: &Ctx) -> Result<ScenarioOutput, ScenarioError> {
    let s = ctx.spec;
    let d = ctx.dead_time();
    let rows = par_points(&s.t_cases, |i, &t| {
        let point = format!("t_case {t} °C");
        let v_bias = ctx.bias_for(t, s.v_over);
        let dark = ctx.dark_reading(t, v_bias, ctx.seed(i), &point)?;
        let corrected = dead_time_correct(dark.rate(), 0.0, d).map_err(analysis_err(&point))?;
        Ok(vec![
            t,
            v_bias,
            dark.raw.window,
            dark.raw.n_pulses as f64,
            dark.rate(),
            dark.err(),
            corrected,
            ctx.spad.dark_rate(t, s.v_over),
        ])
    })?;
    let mut table = Table::new(&[
        "t_case",
        "v_bias",
        "gate",
        "n_pulses",
        "dark_rate_raw",
        "dark_rate_err",
        "dark_rate",
        "dark_rate_model",
    ]);
    rows.into_iter().for_each(|r| table.push(r));
    let mut summary = Vec::new();
    if s.t_cases.len() >= 2 {
        let fit = fit_exponential(&s.t_cases, &table.column("dark_rate").unwrap()).map_err(analysis_err("exponential fit"))?;
        let b = fit.coefficients[1];
        summary.push(("t_double_fit".into(), std::f64::consts::LN_2 / b));
        summary.push(("t_double_std_error".into(), std::f64::consts::LN_2 / (b * b) * fit.std_errors[1]));
        summary.push(("rate_at_0c".into(), fit.coefficients[0]));
        summary.push(("r_squared".into(), fit.r_squared));
    }
    Ok(ScenarioOutput { table, summary })
}

/// Dark and illuminated readings on the `(t_case, v_over)` grid.
struct OvervoltagePoint {
    t_case: f64,
    v_over: f64,
    dark: Reading,
}

fn dark_grid(ctx: &Ctx, salt: u64) -> Result<Vec<OvervoltagePoint>, ScenarioError> {
    let s = ctx.spec;
    let grid: Vec<(f64, f64)> = s
        .t_cases
        .iter()
        .flat_map(|&t| s.v_over_grid().into_iter().map(move |v| (t, v)))
        .collect();
    par_points(&grid, |i, &(t, v)| {
        let point = format!("dark at {t} °C, {v} V");
        let dark = ctx.dark_reading(t, ctx.bias_for(t, v), derive_seed(ctx.seed(i), salt), &point)?;
        Ok(OvervoltagePoint { t_case: t, v_over: v, dark })
    })
}

fn noise_signal(ctx: &Ctx) -> Result<ScenarioOutput, ScenarioError> {
    let s = ctx.spec;
    let (_, photons) = ctx.led_light(s.photon_rate, "light source")?;
    let darks = dark_grid(ctx, 0)?;
    let rows = par_points(&darks, |i, p| {
        let point = format!("light at {} °C, {} V", p.t_case, p.v_over);
        let v_bias = ctx.bias_for(p.t_case, p.v_over);
        let light = ctx.light_reading(photons, p.t_case, v_bias, derive_seed(ctx.seed(i), 1), &point)?;
        let (signal, signal_err) = ctx.corrected(&light, &p.dark, &point)?;
        Ok(vec![
            p.t_case,
            p.v_over,
            p.dark.rate(),
            p.dark.err(),
            light.rate(),
            light.err(),
            signal,
            signal_err,
            ctx.spad.detection_efficiency(p.v_over),
        ])
    })?;
    let mut table = Table::new(&[
        "t_case",
        "v_over",
        "dark_rate",
        "dark_rate_err",
        "signal_rate",
        "signal_rate_err",
        "signal_minus_dark",
        "signal_minus_dark_err",
        "de_model",
    ]);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(ScenarioOutput { table, summary: vec![("photon_rate".into(), photons)] })
}

fn snr_vs_overvoltage(ctx: &Ctx) -> Result<ScenarioOutput, ScenarioError> {
    let s = ctx.spec;
    let d = ctx.dead_time();
    let darks = dark_grid(ctx, 0)?;
    let levels = s
        .signal_rates
        .iter()
        .map(|&r| ctx.led_light(r / ctx.spad.detection_efficiency(3.5), "light source").map(|(_, p)| p))
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, usize)> = (0..levels.len())
        .flat_map(|l| (0..darks.len()).map(move |k| (l, k)))
        .collect();
    let lights = par_points(&jobs, |i, &(l, k)| {
        let p = &darks[k];
        let point = format!("light {} at {} °C, {} V", levels[l], p.t_case, p.v_over);
        let v_bias = ctx.bias_for(p.t_case, p.v_over);
        ctx.light_reading(levels[l], p.t_case, v_bias, derive_seed(ctx.seed(i), 1), &point)
    })?;
    let mut table = Table::new(&[
        "t_case",
        "signal_at_ref",
        "photon_rate",
        "v_over",
        "signal_rate",
        "dark_rate",
        "signal_corrected",
        "dark_corrected",
        "snr",
        "snr_norm",
    ]);
    let mut summary = Vec::new();
    let per_temp = s.v_over_grid().len();
    let mut peaks = Vec::new();
    for (l, &level) in levels.iter().enumerate() {
        for (ti, &t) in s.t_cases.iter().enumerate() {
            let point = format!("snr curve at {t} °C, {level} photons/s");
            let signal = s.signal_rates[l];
            let mut pts = Vec::with_capacity(per_temp);
            let mut raw = Vec::with_capacity(per_temp);
            for k in ti * per_temp..(ti + 1) * per_temp {
                let (p, light) = (&darks[k], &lights[l * darks.len() + k]);
                let sig = dead_time_correct(light.rate(), 0.0, d).map_err(analysis_err(&point))?;
                let dark = dead_time_correct(p.dark.rate(), 0.0, d).map_err(analysis_err(&point))?;
                pts.push((p.v_over, sig, dark));
                raw.push((light.rate(), p.dark.rate()));
            }
            let curve = snr_curve(&pts, 3.5).map_err(analysis_err(&point))?;
            for ((&(v, sig, dark), &(sig_raw, dark_raw)), &(_, norm)) in pts.iter().zip(&raw).zip(&curve) {
                table.push(vec![t, signal, level, v, sig_raw, dark_raw, sig, dark, (sig - dark) / dark, norm]);
            }
            let peak = snr_peak(&curve, 3).unwrap_or(f64::NAN);
            peaks.push((ti, peak));
            summary.push((format!("peak_v_over[t={t},signal={signal}]"), peak));
        }
    }
    // largest argmax spread across light levels at a fixed temperature
    let spread = (0..s.t_cases.len())
        .map(|ti| {
            let ps: Vec<f64> = peaks.iter().filter(|p| p.0 == ti).map(|p| p.1).collect();
            let (lo, hi) = ps.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
            hi - lo
        })
        .fold(0.0, f64::max);
    let (lo, hi) = peaks
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    summary.push(("peak_v_over_min".into(), lo));
    summary.push(("peak_v_over_max".into(), hi));
    summary.push(("peak_spread_across_levels".into(), spread));
    Ok(ScenarioOutput { table, summary })
}

fn linearity(ctx: &Ctx) -> Result<ScenarioOutput, ScenarioError> {
    let s = ctx.spec;
    let t = s.t_cases[0];
    let v_bias = ctx.bias_for(t, s.v_over);
    let de = ctx.spad.detection_efficiency(s.v_over);
    let dark = ctx.dark_reading(t, v_bias, derive_seed(s.seed, u64::MAX), "dark reference")?;
    let rates = s.rate_grid();
    let rows = par_points(&rates, |i, &nominal| {
        let point = format!("photon rate {nominal}");
        let (current, photons) = ctx.led_light(nominal, &point)?;
        let light = ctx.read(&ctx.sim(photons, s.duration, ctx.seed(i), t, v_bias), &point)?;
        let (corr, corr_err) = ctx.corrected(&light, &dark, &point)?;
        let f_true = photons * de;
        Ok(vec![
            current,
            photons,
            f_true,
            light.rate(),
            light.err(),
            dark.rate(),
            corr,
            corr_err,
            (corr - f_true) / f_true,
        ])
    })?;
    let mut table = Table::new(&[
        "led_current",
        "f_emit",
        "f_true",
        "f_meas",
        "f_meas_err",
        "f_dark",
        "f_corr",
        "f_corr_err",
        "rel_dev",
    ]);
    rows.into_iter().for_each(|r| table.push(r));
    let (f_true, dev) = (table.column("f_true").unwrap(), table.column("rel_dev").unwrap());
    let max_dev = |limit: f64| {
        f_true
            .iter()
            .zip(&dev)
            .filter(|(f, _)| **f <= limit)
            .map(|(_, d)| d.abs())
            .fold(0.0, f64::max)
    };
    let summary = vec![
        ("max_rel_dev_to_10mhz".into(), max_dev(10e6)),
        ("max_rel_dev".into(), max_dev(f64::INFINITY)),
        ("max_f_true".into(), f_true.iter().cloned().fold(0.0, f64::max)),
    ];
    Ok(ScenarioOutput { table, summary })
}

fn fmax(ctx: &Ctx) -> Result<ScenarioOutput, ScenarioError> {
    let s = ctx.spec;
    let grid: Vec<(f64, f64)> = s
        .t_cases
        .iter()
        .flat_map(|&t| s.v_over_grid().into_iter().map(move |v| (t, v)))
        .collect();
    let rows = par_points(&grid, |i, &(t, v)| {
        let point = format!("fmax at {t} °C, {v} V");
        let v_bias = ctx.bias_for(t, v);
        let seed = ctx.seed(i);
        let mut probe = 0u64;
        let found = max_rate_search::<ScenarioError>(
            |nominal| {
                probe += 1;
                let (_, photons) = ctx.led_light(nominal, &point)?;
                let r = ctx.read(&ctx.sim(photons, s.probe_duration, derive_seed(seed, probe), t, v_bias), &point)?;
                Ok(r.rate())
            },
            (s.rate_min, s.rate_max),
            s.search_tolerance,
        )
        .map_err(|e| match e {
            ScenarioError::Analysis { source, .. } => ScenarioError::Analysis { point: point.clone(), source },
            other => other,
        })?;
        let (_, photons) = ctx.led_light(found.intensity, &point)?;
        let fin = ctx.read(&ctx.sim(photons, s.duration, derive_seed(seed, 0), t, v_bias), &point)?;
        Ok(vec![t, v, photons, fin.rate(), fin.err(), f64::from(u8::from(found.monotone))])
    })?;
    let mut table = Table::new(&["t_case", "v_over", "photon_rate", "fmax", "fmax_err", "monotone"]);
    rows.into_iter().for_each(|r| table.push(r));
    let (ts, vs, fm) = (
        table.column("t_case").unwrap(),
        table.column("v_over").unwrap(),
        table.column("fmax").unwrap(),
    );
    // pointwise spread across temperatures
    let mut spread: f64 = 0.0;
    for &v in &s.v_over_grid() {
        let at: Vec<f64> = vs.iter().zip(&fm).filter(|(x, _)| **x == v).map(|(_, f)| *f).collect();
        let (lo, hi) = at.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &f| (a.min(f), b.max(f)));
        let mean = at.iter().sum::<f64>() / at.len() as f64;
        spread = spread.max((hi - lo) / mean);
    }
    let best = fm.iter().cloned().fold(0.0, f64::max);
    let _ = ts;
    let summary = vec![
        ("fmax_highest".into(), best),
        ("fraction_of_bound".into(), best * ctx.dead_time()),
        ("max_rel_spread_across_temps".into(), spread),
        ("all_monotone".into(), f64::from(u8::from(table.column("monotone").unwrap().iter().all(|&m| m == 1.0)))),
    ];
    Ok(ScenarioOutput { table, summary })
}

/// Counts pulses in consecutive bins of `width` ps.
fn bin_counts(pulses: &[u64], width: u64, n_bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n_bins];
    for &p in pulses {
        if let Some(c) = counts.get_mut((p / width) as usize) {
            *c += 1;
        }
    }
    counts
}

fn dynamic_response(ctx: &Ctx) -> Result<ScenarioOutput, ScenarioError> {
    let s = ctx.spec;
    let t = s.t_cases[0];
    let d = ctx.dead_time();
    let v_bias = ctx.bias_for(t, s.v_over);
    let de = ctx.spad.detection_efficiency(s.v_over);
    // photon rates that give the requested output rates at the case temperature
    let photons_for = |f: f64| f / (1.0 - f * d) / de;
    let (_, low) = ctx.led_light(photons_for(s.low_rate), "low phase")?;
    let (_, high) = ctx.led_light(photons_for(s.high_rate), "high phase")?;
    let phase = s.duration;
    let program: Vec<SourceStep> = (0..2 * s.cycles)
        .map(|k| SourceStep { start: k as f64 * phase, rate: if k % 2 == 0 { low } else { high } })
        .collect();
    let total = 2.0 * s.cycles as f64 * phase;
    let mut cfg = ctx.sim(0.0, total, ctx.seed(0), t, v_bias);
    cfg.source_program = program.clone();
    cfg.sample_interval = Some(s.sample_interval);

    // ideal reference counter: fixed efficiency, no noise, no heating, 18 ns
    let reference = s.reference.then(|| {
        let spad = Spad::new(SpadParams {
            dark_rate_ref: 0.0,
            ..ctx.spad.params().clone()
        })
        .expect("valid parameters stay valid without dark counts");
        let mut c = cfg.clone();
        c.seed = ctx.seed(1);
        c.afterpulsing = false;
        c.thermal_feedback = false;
        c.sample_interval = None;
        c.quench = QuenchMode::Active(ActiveQuenchConfig { t_sense: 10_000, t_quench: 6_000, t_recover: 2_000, ..s.active });
        (spad, c)
    });
    let jobs: Vec<u8> = if reference.is_some() { vec![0, 1] } else { vec![0] };
    let recs = par_points(&jobs, |_, &j| match (j, &reference) {
        (1, Some((spad, c))) => ctx.run_with(c, spad, "reference counter"),
        _ => ctx.run(&cfg, "detector"),
    })?;

    let width = crate::ps_from_secs(s.sample_interval);
    let n_bins = (total / s.sample_interval).round() as usize;
    let counts = bin_counts(&recs[0].pulses, width, n_bins);
    let ref_counts = recs.get(1).map(|r| bin_counts(&r.pulses, width, n_bins));
    let dt = secs_from_ps(width);
    let mut table = Table::new(&[
        "time",
        "phase",
        "rate_raw",
        "rate_raw_err",
        "rate_deadtime_corrected",
        "t_chip",
        "rate_reference",
    ]);
    let trace = &recs[0].temp_trace;
    for k in 0..n_bins {
        let t0 = k as f64 * dt;
        let rate = counts[k] as f64 / dt;
        let corr = dead_time_correct(rate, 0.0, d).map_err(analysis_err(format!("bin at {t0} s")))?;
        let end = (k as u64 + 1) * width;
        let temp = trace
            .iter()
            .take_while(|(ts, _)| *ts <= end)
            .last()
            .map_or(t, |&(_, temp)| temp);
        let phase_idx = ((t0 + 0.5 * dt) / phase) as usize % 2;
        let reference_rate = ref_counts.as_ref().map_or(f64::NAN, |c| c[k] as f64 / dt);
        table.push(vec![t0, phase_idx as f64, rate, (counts[k] as f64).sqrt() / dt, corr, temp, reference_rate]);
    }

    // fold the high phases and fit the droop
    let per_phase = (phase / dt).round() as usize;
    let mut folded = vec![0.0; per_phase];
    for c in 0..s.cycles {
        let start = (2 * c + 1) * per_phase;
        for (j, f) in folded.iter_mut().enumerate() {
            *f += counts[start + j] as f64 / dt / s.cycles as f64;
        }
    }
    let ts: Vec<f64> = (0..per_phase).map(|j| (j as f64 + 0.5) * dt).collect();
    let fit = fit_exp_decay(&ts, &folded, (0.01 * phase, 20.0 * phase)).map_err(analysis_err("droop fit"))?;
    let line = fit_linear(&ts, &folded).map_err(analysis_err("plateau slope"))?;
    let excess_end = trace.last().map_or(0.0, |&(_, temp)| temp - t);
    let mut summary = vec![
        ("high_plateau_mean".into(), folded.iter().sum::<f64>() / per_phase as f64),
        ("droop_tau".into(), fit.tau),
        ("droop_amplitude".into(), fit.amplitude),
        ("droop_rel".into(), fit.amplitude / fit.offset),
        ("high_slope".into(), line.coefficients[1]),
        ("high_slope_err".into(), line.std_errors[1]),
        ("t_chip_excess_end".into(), excess_end),
    ];
    if let Some(rc) = &ref_counts {
        let mut rf = 0.0;
        for c in 0..s.cycles {
            let start = (2 * c + 1) * per_phase;
            rf += rc[start..start + per_phase].iter().sum::<u64>() as f64;
        }
        summary.push(("reference_high_mean".into(), rf / (s.cycles as f64 * phase)));
    }
    Ok(ScenarioOutput { table, summary })
}

fn dead_time(ctx: &Ctx) -> Result<ScenarioOutput, ScenarioError> {
    let s = ctx.spec;
    let t = s.t_cases[0];
    let (_, photons) = ctx.led_light(s.photon_rate, "light source")?;
    let rec = ctx.run(&ctx.sim(photons, s.duration, ctx.seed(0), t, ctx.bias_for(t, s.v_over)), "dead time run")?;
    let h = interarrival_histogram(&rec.pulses, s.bin_width, s.t_max).map_err(analysis_err("histogram"))?;
    let mut table = Table::new(&["gap_start", "count"]);
    for (k, &c) in h.hist.counts.iter().enumerate() {
        table.push(vec![h.hist.bin_start(k), c as f64]);
    }
    let dead = s.active.dead_time();
    let dead_bins = (dead / crate::ps_from_secs(s.bin_width)) as usize;
    let below: u64 = h.hist.counts.iter().take(dead_bins).sum();
    let summary = vec![
        ("min_gap_ps".into(), h.min_gap.map_or(f64::NAN, |g| g as f64)),
        ("dead_time_ps".into(), dead as f64),
        ("n_pulses".into(), rec.pulses.len() as f64),
        ("counts_below_dead_time".into(), below as f64),
        ("overflow".into(), h.hist.overflow as f64),
    ];
    Ok(ScenarioOutput { table, summary })
}

fn passive_baseline(ctx: &Ctx) -> Result<ScenarioOutput, ScenarioError> {
    let s = ctx.spec;
    let t = s.t_cases[0];
    let v_bias = ctx.bias_for(t, s.v_over);
    let quench = QuenchMode::Passive(s.passive);
    let de = ctx.spad.detection_efficiency(s.v_over);
    let passive_read = |nominal: f64, duration: f64, seed: u64, point: &str| -> Result<(f64, Reading), ScenarioError> {
        let (_, photons) = ctx.led_light(nominal, point)?;
        let mut c = ctx.sim(photons, duration, seed, t, v_bias);
        c.quench = quench;
        Ok((photons, ctx.read(&c, point)?))
    };
    let rates = s.rate_grid();
    let rows = par_points(&rates, |i, &nominal| {
        let point = format!("passive at {nominal} photons/s");
        let (photons, r) = passive_read(nominal, s.duration, ctx.seed(i), &point)?;
        Ok(vec![photons, photons * de, r.rate(), r.err()])
    })?;
    let mut table = Table::new(&["photon_rate", "carrier_rate", "rate_meas", "rate_err"]);
    rows.into_iter().for_each(|r| table.push(r));

    let mut probe = 0u64;
    let search_seed = derive_seed(s.seed, u64::MAX);
    let found = max_rate_search::<ScenarioError>(
        |nominal| {
            probe += 1;
            Ok(passive_read(nominal, s.probe_duration, derive_seed(search_seed, probe), "passive search")?.1.rate())
        },
        (s.rate_min, s.rate_max),
        s.search_tolerance,
    )?;
    let (photons, peak) = passive_read(found.intensity, s.duration, derive_seed(search_seed, 0), "passive peak")?;
    let tau = s.passive.tau(&ctx.spad);
    let summary = vec![
        ("peak_rate".into(), peak.rate()),
        ("peak_rate_err".into(), peak.err()),
        ("peak_photon_rate".into(), photons),
        ("peak_monotone".into(), f64::from(u8::from(found.monotone))),
        ("tau".into(), tau),
        ("latches".into(), f64::from(u8::from(s.passive.latches(&ctx.spad, s.v_over)))),
        ("grid_peak_rate".into(), table.column("rate_meas").unwrap().iter().cloned().fold(0.0, f64::max)),
    ];
    Ok(ScenarioOutput { table, summary })
}
