//! Named characterisation experiments, configuration files and CSV output.
//!
//! Each scenario sweeps one or two parameters, runs independent simulations
//! per sweep point (in parallel, with seeds derived from the base seed and
//! the point index) and collects the results into a [`Table`] plus a few
//! summary numbers. Output bytes depend only on the configuration and seed.

mod bias;
mod config;
mod runs;
mod table;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use bias::{find_breakdown, BiasController, DarkHarness};
pub use config::{parse_config, parse_config_for, to_text, Config};
pub use runs::run_scenario;
pub use table::{fmt_g9, write_csv, Table};

use crate::engine::DEFAULT_QUEUE_CAP;
use crate::error::{ConfigError, ScenarioError};
use crate::quench::{ActiveQuenchConfig, PassiveQuenchConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioName {
    VbrVsTemp,
    ResponseVsTemp,
    DarkVsTemp,
    NoiseSignalVsOvervoltage,
    SnrVsOvervoltage,
    Linearity,
    FmaxVsOvervoltage,
    DynamicResponse,
    DeadTime,
    PassiveBaseline,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 10] = [
        ScenarioName::VbrVsTemp,
        ScenarioName::ResponseVsTemp,
        ScenarioName::DarkVsTemp,
        ScenarioName::NoiseSignalVsOvervoltage,
        ScenarioName::SnrVsOvervoltage,
        ScenarioName::Linearity,
        ScenarioName::FmaxVsOvervoltage,
        ScenarioName::DynamicResponse,
        ScenarioName::DeadTime,
        ScenarioName::PassiveBaseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::VbrVsTemp => "vbr_vs_temp",
            ScenarioName::ResponseVsTemp => "response_vs_temp",
            ScenarioName::DarkVsTemp => "dark_vs_temp",
            ScenarioName::NoiseSignalVsOvervoltage => "noise_signal_vs_overvoltage",
            ScenarioName::SnrVsOvervoltage => "snr_vs_overvoltage",
            ScenarioName::Linearity => "linearity",
            ScenarioName::FmaxVsOvervoltage => "fmax_vs_overvoltage",
            ScenarioName::DynamicResponse => "dynamic_response",
            ScenarioName::DeadTime => "dead_time",
            ScenarioName::PassiveBaseline => "passive_baseline",
        }
    }

    /// One-line description of the measurement, for `spadsim list`.
    pub fn description(self) -> &'static str {
        match self {
            ScenarioName::VbrVsTemp => "breakdown voltage found in darkness vs case temperature; linear tempco fit",
            ScenarioName::ResponseVsTemp => "constant light at constant overvoltage vs case temperature (should be flat)",
            ScenarioName::DarkVsTemp => "dark count rate vs temperature at fixed overvoltage; exponential fit",
            ScenarioName::NoiseSignalVsOvervoltage => "dark and illuminated count rates vs overvoltage at several temperatures",
            ScenarioName::SnrVsOvervoltage => "dark-subtracted SNR vs overvoltage, normalised at 3.5 V, per temperature and light level",
            ScenarioName::Linearity => "measured and dead-time corrected rate vs emitted photon rate",
            ScenarioName::FmaxVsOvervoltage => "maximum counting rate vs overvoltage at several temperatures",
            ScenarioName::DynamicResponse => "alternating low/high light; count rate and chip temperature vs time",
            ScenarioName::DeadTime => "interarrival histogram under intense light; minimum pulse spacing",
            ScenarioName::PassiveBaseline => "count rate vs light intensity for the passive quench network",
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| ConfigError::UnknownScenario(s.to_string()))
    }
}

/// Everything a scenario needs besides the device and LED parameters.
///
/// Not every field is used by every scenario; unused ones keep their
/// defaults and are still echoed in the resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: ScenarioName,
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub workers: usize,
    /// Measurement time per sweep point (s); per phase for `dynamic_response`.
    pub duration: f64,
    /// Case temperatures (°C).
    pub t_cases: Vec<f64>,
    /// LED module temperature (°C).
    pub t_led: f64,
    /// Operating overvoltage for single-voltage scenarios (V).
    pub v_over: f64,
    pub v_over_min: f64,
    pub v_over_max: f64,
    pub v_over_steps: usize,
    /// Photon rate sweep, log-spaced (photons/s).
    pub rate_min: f64,
    pub rate_max: f64,
    pub rate_steps: usize,
    /// Fixed photon rate (photons/s).
    pub photon_rate: f64,
    /// Light levels of the SNR family, given as the signal count rate they
    /// produce at the reference overvoltage of 3.5 V (Hz).
    pub signal_rates: Vec<f64>,
    pub thermal_feedback: bool,
    pub afterpulsing: bool,
    /// Dark rate defining breakdown onset (Hz).
    pub dark_threshold: f64,
    /// Counting gate of each breakdown probe (s).
    pub breakdown_gate: f64,
    pub bias: BiasController,
    /// Adaptive gates aim for this many counts, within `[min_gate, max_gate]`.
    pub target_counts: f64,
    pub min_gate: f64,
    pub max_gate: f64,
    /// Output count rates of the two `dynamic_response` phases (Hz).
    pub low_rate: f64,
    pub high_rate: f64,
    pub cycles: usize,
    /// Time bin of traces (s).
    pub sample_interval: f64,
    /// Interarrival histogram bin width and range (s).
    pub bin_width: f64,
    pub t_max: f64,
    /// Maximum-rate search tolerance (decades of intensity).
    pub search_tolerance: f64,
    /// Length of each search probe (s).
    pub probe_duration: f64,
    /// Also simulate the ideal reference counter in `dynamic_response`.
    pub reference: bool,
    pub queue_cap: usize,
    pub active: ActiveQuenchConfig,
    pub passive: PassiveQuenchConfig,
}

fn temps(lo: i32, hi: i32, step: i32) -> Vec<f64> {
    (lo..=hi).step_by(step as usize).map(f64::from).collect()
}

/// `n` evenly spaced temperatures from `lo` to `hi` inclusive.
fn temps_n(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linear_grid(lo, hi, n)
}

impl ScenarioSpec {
    /// Defaults for the named scenario.
    pub fn defaults(name: ScenarioName) -> Self {
        let mut s = Self {
            name,
            seed: 1,
            workers: 0,
            duration: 1.0,
            t_cases: vec![20.0],
            t_led: 17.5,
            v_over: 3.5,
            v_over_min: 0.5,
            v_over_max: 5.5,
            v_over_steps: 21,
            rate_min: 2e4,
            rate_max: 1.9e8,
            rate_steps: 17,
            photon_rate: 7e6,
            signal_rates: vec![3e4, 1e5, 3e5, 1e6],
            thermal_feedback: false,
            afterpulsing: true,
            dark_threshold: 1.0,
            breakdown_gate: 10.0,
            bias: BiasController::default(),
            target_counts: 2e5,
            min_gate: 0.1,
            max_gate: 1000.0,
            low_rate: 250e3,
            high_rate: 5.5e6,
            cycles: 4,
            sample_interval: 0.05,
            bin_width: 1e-9,
            t_max: 500e-9,
            search_tolerance: 0.05,
            probe_duration: 0.01,
            reference: true,
            queue_cap: DEFAULT_QUEUE_CAP,
            active: ActiveQuenchConfig::default(),
            passive: PassiveQuenchConfig::default(),
        };
        match name {
            ScenarioName::VbrVsTemp | ScenarioName::ResponseVsTemp => s.t_cases = temps_n(-25.0, 15.0, 8),
            ScenarioName::DarkVsTemp => s.t_cases = temps(-30, 20, 5),
            ScenarioName::NoiseSignalVsOvervoltage => {
                s.t_cases = vec![6.0];
                s.photon_rate = 2e5;
            }
            ScenarioName::SnrVsOvervoltage => s.t_cases = vec![-25.0, 0.0, 20.0],
            ScenarioName::Linearity => {
                s.t_cases = vec![-20.0];
                s.v_over = 5.0;
                s.rate_max = 7e7;
                s.rate_steps = 16;
            }
            ScenarioName::FmaxVsOvervoltage => {
                s.t_cases = temps(-20, 20, 20);
                s.v_over_min = 1.0;
                s.v_over_steps = 10;
                s.duration = 0.1;
            }
            ScenarioName::DynamicResponse => {
                s.v_over = 5.0;
                s.duration = 5.0;
                s.thermal_feedback = true;
            }
            ScenarioName::DeadTime => {
                s.v_over = 5.0;
                s.photon_rate = 1e8;
                s.duration = 0.1;
            }
            ScenarioName::PassiveBaseline => {
                s.v_over = 5.0;
                s.rate_steps = 21;
                s.duration = 0.05;
            }
        }
        s
    }

    /// Checks ranges; errors name the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: &str| {
            Err(ConfigError::OutOfRange {
                key: key.to_string(),
                reason: reason.to_string(),
            })
        };
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.duration) {
            return bad("duration", "must be > 0");
        }
        if self.t_cases.is_empty() || self.t_cases.iter().any(|t| !t.is_finite() || *t < -273.15) {
            return bad("t_cases", "need at least one finite temperature above absolute zero");
        }
        if !self.t_led.is_finite() {
            return bad("t_led", "must be finite");
        }
        if !pos(self.v_over) {
            return bad("v_over", "must be > 0");
        }
        if !(self.v_over_min > 0.0 && self.v_over_max >= self.v_over_min && self.v_over_max.is_finite()) {
            return bad("v_over_min", "need 0 < v_over_min <= v_over_max");
        }
        if self.v_over_steps == 0 || (self.v_over_steps == 1 && self.v_over_max != self.v_over_min) {
            return bad("v_over_steps", "need >= 2 steps for a nonempty range, or 1 with min = max");
        }
        if !(self.rate_min > 0.0 && self.rate_max >= self.rate_min && self.rate_max.is_finite()) {
            return bad("rate_min", "need 0 < rate_min <= rate_max");
        }
        if self.rate_steps == 0 {
            return bad("rate_steps", "must be >= 1");
        }
        if !pos(self.photon_rate) {
            return bad("photon_rate", "must be > 0");
        }
        if self.signal_rates.is_empty() || !self.signal_rates.iter().all(|&r| pos(r)) {
            return bad("signal_rates", "need at least one rate > 0");
        }
        if !pos(self.dark_threshold) {
            return bad("dark_threshold", "must be > 0");
        }
        if !pos(self.breakdown_gate) {
            return bad("breakdown_gate", "must be > 0");
        }
        if let Err(e) = self.bias.validate() {
            return bad("bias_step", &e);
        }
        if !pos(self.target_counts) {
            return bad("target_counts", "must be > 0");
        }
        if !(pos(self.min_gate) && self.max_gate >= self.min_gate && self.max_gate.is_finite()) {
            return bad("min_gate", "need 0 < min_gate <= max_gate");
        }
        if !(pos(self.low_rate) && pos(self.high_rate)) {
            return bad("low_rate", "phase rates must be > 0");
        }
        let d = self.active.dead_time_secs();
        if self.high_rate * d >= 1.0 || self.low_rate * d >= 1.0 {
            return bad("high_rate", "phase rates must stay below 1/dead_time");
        }
        if self.cycles == 0 {
            return bad("cycles", "must be >= 1");
        }
        if !pos(self.sample_interval) {
            return bad("sample_interval", "must be > 0");
        }
        if !(pos(self.bin_width) && self.t_max > self.bin_width && self.t_max.is_finite()) {
            return bad("bin_width", "need 0 < bin_width < t_max");
        }
        if !pos(self.search_tolerance) {
            return bad("search_tolerance", "must be > 0");
        }
        if !pos(self.probe_duration) {
            return bad("probe_duration", "must be > 0");
        }
        if self.queue_cap == 0 {
            return bad("queue_cap", "must be > 0");
        }
        if let Err(e) = self.active.validate() {
            return bad("t_sense", &e);
        }
        if let Err(e) = self.passive.validate() {
            return bad("r_s", &e);
        }
        Ok(())
    }

    /// Linear overvoltage grid `v_over_min ..= v_over_max`.
    pub fn v_over_grid(&self) -> Vec<f64> {
        linear_grid(self.v_over_min, self.v_over_max, self.v_over_steps)
    }

    /// Log-spaced photon-rate grid `rate_min ..= rate_max`.
    pub fn rate_grid(&self) -> Vec<f64> {
        let (a, b) = (self.rate_min.log10(), self.rate_max.log10());
        let n = self.rate_steps;
        linear_grid(a, b, n)
            .into_iter()
            .enumerate()
            .map(|(k, u)| match k {
                0 => self.rate_min,
                _ if k + 1 == n => self.rate_max,
                _ => 10f64.powf(u),
            })
            .collect()
    }
}

fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|k| if k + 1 == n { hi } else { lo + k as f64 * step }).collect()
}

/// Result of one scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub table: Table,
    /// Named headline numbers (fit results, extrema), in a fixed order.
    pub summary: Vec<(String, f64)>,
}

impl ScenarioOutput {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|&(_, v)| v)
    }
}

/// Runs the configured scenario and writes `<name>.csv` and `run.meta`
/// into `out_dir`. Returns the CSV path.
pub fn run_to_dir(cfg: &Config, out_dir: &Path) -> Result<(ScenarioOutput, PathBuf), ScenarioError> {
    let out = run_scenario(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("{}.csv", cfg.scenario.name));
    write_csv(&out.table, &csv_path)?;
    std::fs::write(out_dir.join("run.meta"), run_meta(cfg, &out))?;
    Ok((out, csv_path))
}

/// Text of the `run.meta` file: versions, seed, resolved configuration and
/// summary values. Contains nothing that varies between identical runs.
pub fn run_meta(cfg: &Config, out: &ScenarioOutput) -> String {
    let mut s = String::new();
    s.push_str(&format!("spadsim {}\n", env!("CARGO_PKG_VERSION")));
    s.push_str(&format!("scenario = {}\n", cfg.scenario.name));
    s.push_str(&format!("seed = {}\n", cfg.scenario.seed));
    s.push_str(&format!("rows = {}\n", out.table.len()));
    s.push_str("\n# resolved configuration\n");
    s.push_str(&to_text(cfg));
    s.push_str("\n# summary\n");
    for (k, v) in &out.summary {
        s.push_str(&format!("{k} = {}\n", fmt_g9(*v)));
    }
    s
}
