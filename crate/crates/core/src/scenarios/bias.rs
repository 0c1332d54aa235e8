use crate::device::Spad;
use crate::engine::{run, SimConfig};
use crate::error::{ScenarioError, SimError};
use crate::quench::QuenchMode;

/// Quantised bias supply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasController {
    pub v_min: f64,
    pub v_max: f64,
    pub step: f64,
}

impl Default for BiasController {
    fn default() -> Self {
        Self {
            v_min: 0.0,
            v_max: 300.0,
            step: 0.010,
        }
    }
}

impl BiasController {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err("bias_step must be > 0".into());
        }
        if !(self.v_max > self.v_min && self.v_min >= 0.0) {
            return Err("need 0 <= bias_min < bias_max".into());
        }
        if self.first_index() > self.last_index() {
            return Err("bias range holds no step".into());
        }
        Ok(())
    }

    fn first_index(&self) -> i64 {
        (self.v_min / self.step - 1e-9).ceil() as i64
    }

    fn last_index(&self) -> i64 {
        (self.v_max / self.step + 1e-9).floor() as i64
    }

    /// Bias value of step `k`. Steps that are exact reciprocals of an integer
    /// (10 mV) are computed by division so that `k / 100` prints exactly.
    pub fn value(&self, k: i64) -> f64 {
        let inv = 1.0 / self.step;
        if (inv - inv.round()).abs() < 1e-9 {
            k as f64 / inv.round()
        } else {
            k as f64 * self.step
        }
    }

    /// Nearest settable bias, clamped to the range.
    pub fn quantize(&self, v: f64) -> f64 {
        let k = ((v / self.step).round() as i64).clamp(self.first_index(), self.last_index());
        self.value(k)
    }

    /// Binary search for the lowest step satisfying a monotone predicate.
    pub fn lowest_where<E>(&self, mut pred: impl FnMut(f64) -> Result<bool, E>) -> Result<Option<f64>, E> {
        let (mut lo, mut hi) = (self.first_index(), self.last_index());
        if !pred(self.value(hi))? {
            return Ok(None);
        }
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if pred(self.value(mid))? {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(Some(self.value(lo)))
    }
}

/// Dark-count probe used by the breakdown search.
#[derive(Debug, Clone, Copy)]
pub struct DarkHarness<'a> {
    pub spad: &'a Spad,
    pub quench: QuenchMode,
    pub afterpulsing: bool,
    /// Counting gate (s).
    pub gate: f64,
    pub seed: u64,
}

impl DarkHarness<'_> {
    /// Whether the dark count rate over the gate reaches `threshold`.
    ///
    /// The gate is simulated in growing prefixes starting at 1 µs; since a
    /// run's pulses do not depend on its length, reaching the required count
    /// early decides the full gate without simulating it.
    pub fn reaches(&self, t_case: f64, v_bias: f64, threshold: f64) -> Result<bool, SimError> {
        let need = (threshold * self.gate).ceil().max(1.0) as usize;
        let mut len = self.gate.min(1e-6);
        loop {
            let mut cfg = SimConfig::constant(0.0, len, self.seed, t_case, v_bias, self.quench);
            cfg.afterpulsing = self.afterpulsing;
            let n = run(&cfg, self.spad)?.pulses.len();
            if n >= need {
                return Ok(true);
            }
            if len >= self.gate {
                return Ok(false);
            }
            len = (len * 10.0).min(self.gate);
        }
    }
}

/// Lowest settable bias at which darkness produces `dark_threshold` counts/s.
pub fn find_breakdown(
    harness: &DarkHarness,
    t_case: f64,
    dark_threshold: f64,
    bias: &BiasController,
) -> Result<f64, ScenarioError> {
    let point = || format!("breakdown search at {t_case} °C");
    if !(dark_threshold > 0.0) {
        return Err(ScenarioError::Config(crate::error::ConfigError::OutOfRange {
            key: "dark_threshold".into(),
            reason: "must be > 0".into(),
        }));
    }
    bias.lowest_where(|v| harness.reaches(t_case, v, dark_threshold))
        .map_err(|source| ScenarioError::Sim { point: point(), source })?
        .ok_or(ScenarioError::BreakdownNotFound { t_case, v_max: bias.v_max })
}
