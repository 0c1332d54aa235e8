//! `key = value` configuration files with `[spad]`, `[led]`, `[scenario]`
//! and `[quench]` sections.
//!
//! Units: voltages in V, temperatures in °C, times in s, rates in Hz or
//! photons/s, currents in A, capacitance in F, resistance in Ω, energy in J.
//! Lists and pairs are comma separated.

use std::collections::HashMap;

use super::{ScenarioName, ScenarioSpec};
use crate::device::{Led, LedParams, Spad, SpadParams};
use crate::error::{ConfigError, ModelError};
use crate::{ps_from_secs, secs_from_ps};

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub scenario: ScenarioSpec,
    pub spad: SpadParams,
    pub led: LedParams,
}

impl Config {
    pub fn defaults(name: ScenarioName) -> Self {
        Self {
            scenario: ScenarioSpec::defaults(name),
            spad: SpadParams::default(),
            led: LedParams::default(),
        }
    }

    /// Validates every section; errors name the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        Spad::new(self.spad.clone()).map_err(model_error)?;
        Led::new(self.led.clone()).map_err(model_error)?;
        self.scenario.validate()
    }
}

fn model_error(e: ModelError) -> ConfigError {
    let (key, reason) = match &e {
        ModelError::OutOfRange { name, reason } => (name.to_string(), reason.clone()),
        ModelError::AnchorSolve { .. } | ModelError::ZeroReferenceEfficiency(_) => ("de_anchor_lo".into(), e.to_string()),
        ModelError::NonMonotoneCalibration { .. } => ("loglog_coeffs".into(), e.to_string()),
        ModelError::CurrentOutOfRange { .. } => ("current_range".into(), e.to_string()),
    };
    ConfigError::OutOfRange { key, reason }
}

const SPAD_KEYS: &[&str] = &[
    "v_br_ref",
    "t_ref",
    "tempco",
    "c_spad",
    "i_latch",
    "de_anchor_lo",
    "de_anchor_hi",
    "dark_rate_ref",
    "t_dark_ref",
    "v_over_ref",
    "t_double",
    "dark_de_exponent",
    "dark_field_scale",
    "ap_p0",
    "ap_knee",
    "ap_slope",
    "ap_norm",
    "ap_tau",
    "r_th",
    "tau_th",
    "e_avalanche",
];
const LED_KEYS: &[&str] = &["loglog_coeffs", "t_cal", "tempco_rel", "current_range"];
const QUENCH_KEYS: &[&str] = &["t_sense", "t_quench", "t_recover", "v_over_max", "r_s", "r_l", "rearm_fraction"];
const SCENARIO_KEYS: &[&str] = &[
    "name",
    "seed",
    "workers",
    "duration",
    "t_cases",
    "t_led",
    "v_over",
    "v_over_min",
    "v_over_max",
    "v_over_steps",
    "rate_min",
    "rate_max",
    "rate_steps",
    "photon_rate",
    "signal_rates",
    "thermal_feedback",
    "afterpulsing",
    "dark_threshold",
    "breakdown_gate",
    "bias_min",
    "bias_max",
    "bias_step",
    "target_counts",
    "min_gate",
    "max_gate",
    "low_rate",
    "high_rate",
    "cycles",
    "sample_interval",
    "bin_width",
    "t_max",
    "search_tolerance",
    "probe_duration",
    "reference",
    "queue_cap",
];

fn section_keys(section: &str) -> Option<&'static [&'static str]> {
    match section {
        "spad" => Some(SPAD_KEYS),
        "led" => Some(LED_KEYS),
        "scenario" => Some(SCENARIO_KEYS),
        "quench" => Some(QUENCH_KEYS),
        _ => None,
    }
}

struct Entry<'a> {
    line: usize,
    section: &'a str,
    key: &'a str,
    value: &'a str,
}

fn lex(text: &str) -> Result<Vec<Entry<'_>>, ConfigError> {
    let mut section: Option<&str> = None;
    let mut seen: HashMap<(&str, &str), usize> = HashMap::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax { line, msg: "unterminated section header".into() })?
                .trim();
            section_keys(name).ok_or_else(|| ConfigError::UnknownSection { line, section: name.into() })?;
            section = Some(name);
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            msg: format!("expected `key = value`, found `{body}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax { line, msg: "empty key or value".into() });
        }
        let sec = section.ok_or_else(|| ConfigError::Syntax {
            line,
            msg: format!("`{key}` appears before any section header"),
        })?;
        if !section_keys(sec).is_some_and(|keys| keys.contains(&key)) {
            return Err(ConfigError::UnknownKey { line, section: sec.into(), key: key.into() });
        }
        if let Some(prev) = seen.insert((sec, key), line) {
            return Err(ConfigError::Syntax {
                line,
                msg: format!("`{key}` already set on line {prev}"),
            });
        }
        out.push(Entry { line, section: sec, key, value });
    }
    Ok(out)
}

impl Entry<'_> {
    fn err(&self, msg: impl Into<String>) -> ConfigError {
        ConfigError::BadValue { line: self.line, key: self.key.into(), msg: msg.into() }
    }

    fn f64(&self) -> Result<f64, ConfigError> {
        let v: f64 = self.value.parse().map_err(|_| self.err(format!("`{}` is not a number", self.value)))?;
        if v.is_nan() {
            return Err(self.err("NaN is not allowed"));
        }
        Ok(v)
    }

    fn list(&self) -> Result<Vec<f64>, ConfigError> {
        self.value
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| self.err(format!("`{}` is not a number", s.trim()))))
            .collect()
    }

    fn pair(&self) -> Result<(f64, f64), ConfigError> {
        match self.list()?[..] {
            [a, b] => Ok((a, b)),
            _ => Err(self.err("expected two comma-separated numbers")),
        }
    }

    fn uint<T: std::str::FromStr>(&self) -> Result<T, ConfigError> {
        self.value
            .parse()
            .map_err(|_| self.err(format!("`{}` is not a non-negative integer", self.value)))
    }

    fn bool(&self) -> Result<bool, ConfigError> {
        match self.value {
            "true" | "on" | "yes" => Ok(true),
            "false" | "off" | "no" => Ok(false),
            other => Err(self.err(format!("`{other}` is not a boolean"))),
        }
    }

    fn secs_as_ps(&self) -> Result<u64, ConfigError> {
        let v = self.f64()?;
        if !(v > 0.0 && v < 1.0) {
            return Err(ConfigError::OutOfRange { key: self.key.into(), reason: "must lie in (0, 1) s".into() });
        }
        Ok(ps_from_secs(v))
    }
}

fn apply(cfg: &mut Config, e: &Entry) -> Result<(), ConfigError> {
    let (sp, led, sc) = (&mut cfg.spad, &mut cfg.led, &mut cfg.scenario);
    match (e.section, e.key) {
        ("spad", "v_br_ref") => sp.v_br_ref = e.f64()?,
        ("spad", "t_ref") => sp.t_ref = e.f64()?,
        ("spad", "tempco") => sp.tempco = e.f64()?,
        ("spad", "c_spad") => sp.c_spad = e.f64()?,
        ("spad", "i_latch") => sp.i_latch = e.f64()?,
        ("spad", "de_anchor_lo") => sp.de_anchor_lo = e.pair()?,
        ("spad", "de_anchor_hi") => sp.de_anchor_hi = e.pair()?,
        ("spad", "dark_rate_ref") => sp.dark_rate_ref = e.f64()?,
        ("spad", "t_dark_ref") => sp.t_dark_ref = e.f64()?,
        ("spad", "v_over_ref") => sp.v_over_ref = e.f64()?,
        ("spad", "t_double") => sp.t_double = e.f64()?,
        ("spad", "dark_de_exponent") => sp.dark_de_exponent = e.f64()?,
        ("spad", "dark_field_scale") => sp.dark_field_scale = e.f64()?,
        ("spad", "ap_p0") => sp.ap_p0 = e.f64()?,
        ("spad", "ap_knee") => sp.ap_knee = e.f64()?,
        ("spad", "ap_slope") => sp.ap_slope = e.f64()?,
        ("spad", "ap_norm") => sp.ap_norm = e.f64()?,
        ("spad", "ap_tau") => sp.ap_tau = e.f64()?,
        ("spad", "r_th") => sp.r_th = e.f64()?,
        ("spad", "tau_th") => sp.tau_th = e.f64()?,
        ("spad", "e_avalanche") => {
            sp.e_avalanche = if e.value == "auto" { None } else { Some(e.f64()?) };
        }
        ("led", "loglog_coeffs") => led.loglog_coeffs = e.list()?,
        ("led", "t_cal") => led.t_cal = e.f64()?,
        ("led", "tempco_rel") => led.tempco_rel = e.f64()?,
        ("led", "current_range") => led.current_range = e.pair()?,
        ("quench", "t_sense") => sc.active.t_sense = e.secs_as_ps()?,
        ("quench", "t_quench") => sc.active.t_quench = e.secs_as_ps()?,
        ("quench", "t_recover") => sc.active.t_recover = e.secs_as_ps()?,
        ("quench", "v_over_max") => sc.active.v_over_max = e.f64()?,
        ("quench", "r_s") => sc.passive.r_s = e.f64()?,
        ("quench", "r_l") => sc.passive.r_l = e.f64()?,
        ("quench", "rearm_fraction") => sc.passive.rearm_fraction = e.f64()?,
        ("scenario", "name") => {}
        ("scenario", "seed") => sc.seed = e.uint()?,
        ("scenario", "workers") => sc.workers = e.uint()?,
        ("scenario", "duration") => sc.duration = e.f64()?,
        ("scenario", "t_cases") => sc.t_cases = e.list()?,
        ("scenario", "t_led") => sc.t_led = e.f64()?,
        ("scenario", "v_over") => sc.v_over = e.f64()?,
        ("scenario", "v_over_min") => sc.v_over_min = e.f64()?,
        ("scenario", "v_over_max") => sc.v_over_max = e.f64()?,
        ("scenario", "v_over_steps") => sc.v_over_steps = e.uint()?,
        ("scenario", "rate_min") => sc.rate_min = e.f64()?,
        ("scenario", "rate_max") => sc.rate_max = e.f64()?,
        ("scenario", "rate_steps") => sc.rate_steps = e.uint()?,
        ("scenario", "photon_rate") => sc.photon_rate = e.f64()?,
        ("scenario", "signal_rates") => sc.signal_rates = e.list()?,
        ("scenario", "thermal_feedback") => sc.thermal_feedback = e.bool()?,
        ("scenario", "afterpulsing") => sc.afterpulsing = e.bool()?,
        ("scenario", "dark_threshold") => sc.dark_threshold = e.f64()?,
        ("scenario", "breakdown_gate") => sc.breakdown_gate = e.f64()?,
        ("scenario", "bias_min") => sc.bias.v_min = e.f64()?,
        ("scenario", "bias_max") => sc.bias.v_max = e.f64()?,
        ("scenario", "bias_step") => sc.bias.step = e.f64()?,
        ("scenario", "target_counts") => sc.target_counts = e.f64()?,
        ("scenario", "min_gate") => sc.min_gate = e.f64()?,
        ("scenario", "max_gate") => sc.max_gate = e.f64()?,
        ("scenario", "low_rate") => sc.low_rate = e.f64()?,
        ("scenario", "high_rate") => sc.high_rate = e.f64()?,
        ("scenario", "cycles") => sc.cycles = e.uint()?,
        ("scenario", "sample_interval") => sc.sample_interval = e.f64()?,
        ("scenario", "bin_width") => sc.bin_width = e.f64()?,
        ("scenario", "t_max") => sc.t_max = e.f64()?,
        ("scenario", "search_tolerance") => sc.search_tolerance = e.f64()?,
        ("scenario", "probe_duration") => sc.probe_duration = e.f64()?,
        ("scenario", "reference") => sc.reference = e.bool()?,
        ("scenario", "queue_cap") => sc.queue_cap = e.uint()?,
        _ => unreachable!("key table and apply() disagree on {}.{}", e.section, e.key),
    }
    Ok(())
}

/// Parses a configuration; the scenario is taken from `[scenario] name`
/// (default `dead_time`).
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    parse_config_for(text, None)
}

/// Parses a configuration for a scenario chosen by the caller. A `name` in
/// the file must then agree with `requested`.
pub fn parse_config_for(text: &str, requested: Option<ScenarioName>) -> Result<Config, ConfigError> {
    let entries = lex(text)?;
    let in_file = entries
        .iter()
        .find(|e| e.section == "scenario" && e.key == "name")
        .map(|e| e.value.parse::<ScenarioName>())
        .transpose()?;
    let name = match (requested, in_file) {
        (Some(r), Some(f)) if r != f => {
            return Err(ConfigError::OutOfRange {
                key: "name".into(),
                reason: format!("configuration is for `{f}` but `{r}` was requested"),
            })
        }
        (Some(r), _) => r,
        (None, Some(f)) => f,
        (None, None) => ScenarioName::DeadTime,
    };
    let mut cfg = Config::defaults(name);
    for e in &entries {
        apply(&mut cfg, e)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Shortest text that parses back to the same `f64`.
fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-3..1e7).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn nums(vs: &[f64]) -> String {
    vs.iter().map(|&v| num(v)).collect::<Vec<_>>().join(", ")
}

/// Serialises every resolved value; `parse_config(&to_text(c)) == c`.
pub fn to_text(cfg: &Config) -> String {
    let (sp, led, sc) = (&cfg.spad, &cfg.led, &cfg.scenario);
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    };
    kv("[scenario]\nname", sc.name.to_string());
    kv("seed", sc.seed.to_string());
    kv("workers", sc.workers.to_string());
    kv("duration", num(sc.duration));
    kv("t_cases", nums(&sc.t_cases));
    kv("t_led", num(sc.t_led));
    kv("v_over", num(sc.v_over));
    kv("v_over_min", num(sc.v_over_min));
    kv("v_over_max", num(sc.v_over_max));
    kv("v_over_steps", sc.v_over_steps.to_string());
    kv("rate_min", num(sc.rate_min));
    kv("rate_max", num(sc.rate_max));
    kv("rate_steps", sc.rate_steps.to_string());
    kv("photon_rate", num(sc.photon_rate));
    kv("signal_rates", nums(&sc.signal_rates));
    kv("thermal_feedback", sc.thermal_feedback.to_string());
    kv("afterpulsing", sc.afterpulsing.to_string());
    kv("dark_threshold", num(sc.dark_threshold));
    kv("breakdown_gate", num(sc.breakdown_gate));
    kv("bias_min", num(sc.bias.v_min));
    kv("bias_max", num(sc.bias.v_max));
    kv("bias_step", num(sc.bias.step));
    kv("target_counts", num(sc.target_counts));
    kv("min_gate", num(sc.min_gate));
    kv("max_gate", num(sc.max_gate));
    kv("low_rate", num(sc.low_rate));
    kv("high_rate", num(sc.high_rate));
    kv("cycles", sc.cycles.to_string());
    kv("sample_interval", num(sc.sample_interval));
    kv("bin_width", num(sc.bin_width));
    kv("t_max", num(sc.t_max));
    kv("search_tolerance", num(sc.search_tolerance));
    kv("probe_duration", num(sc.probe_duration));
    kv("reference", sc.reference.to_string());
    kv("queue_cap", sc.queue_cap.to_string());

    kv("\n[spad]\nv_br_ref", num(sp.v_br_ref));
    kv("t_ref", num(sp.t_ref));
    kv("tempco", num(sp.tempco));
    kv("c_spad", num(sp.c_spad));
    kv("i_latch", num(sp.i_latch));
    kv("de_anchor_lo", nums(&[sp.de_anchor_lo.0, sp.de_anchor_lo.1]));
    kv("de_anchor_hi", nums(&[sp.de_anchor_hi.0, sp.de_anchor_hi.1]));
    kv("dark_rate_ref", num(sp.dark_rate_ref));
    kv("t_dark_ref", num(sp.t_dark_ref));
    kv("v_over_ref", num(sp.v_over_ref));
    kv("t_double", num(sp.t_double));
    kv("dark_de_exponent", num(sp.dark_de_exponent));
    kv("dark_field_scale", num(sp.dark_field_scale));
    kv("ap_p0", num(sp.ap_p0));
    kv("ap_knee", num(sp.ap_knee));
    kv("ap_slope", num(sp.ap_slope));
    kv("ap_norm", num(sp.ap_norm));
    kv("ap_tau", num(sp.ap_tau));
    kv("r_th", num(sp.r_th));
    kv("tau_th", num(sp.tau_th));
    kv("e_avalanche", sp.e_avalanche.map_or("auto".into(), num));

    kv("\n[led]\nloglog_coeffs", nums(&led.loglog_coeffs));
    kv("t_cal", num(led.t_cal));
    kv("tempco_rel", num(led.tempco_rel));
    kv("current_range", nums(&[led.current_range.0, led.current_range.1]));

    kv("\n[quench]\nt_sense", num(secs_from_ps(sc.active.t_sense)));
    kv("t_quench", num(secs_from_ps(sc.active.t_quench)));
    kv("t_recover", num(secs_from_ps(sc.active.t_recover)));
    kv("v_over_max", num(sc.active.v_over_max));
    kv("r_s", num(sc.passive.r_s));
    kv("r_l", num(sc.passive.r_l));
    kv("rearm_fraction", num(sc.passive.rearm_fraction));
    s
}
