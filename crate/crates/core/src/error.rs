//! Error types shared across the simulator.

use thiserror::Error;

/// Invalid device, source or quench parameters.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parameter `{name}` out of range: {reason}")]
    OutOfRange { name: &'static str, reason: String },
    #[error("efficiency anchors ({lo_v} V, {lo_p}) and ({hi_v} V, {hi_p}) admit no saturating-exponential curve")]
    AnchorSolve {
        lo_v: f64,
        lo_p: f64,
        hi_v: f64,
        hi_p: f64,
    },
    #[error("reference overvoltage {0} V has zero detection efficiency")]
    ZeroReferenceEfficiency(f64),
    #[error("LED current {current} A outside calibrated range [{lo}, {hi}] A")]
    CurrentOutOfRange { current: f64, lo: f64, hi: f64 },
    #[error("LED calibration is not monotone in current (slope {slope} at ln I = {at})")]
    NonMonotoneCalibration { slope: f64, at: f64 },
}

/// Violations of the quench state-machine preconditions.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QuenchError {
    #[error("carrier at {t} ps precedes state timestamp {last} ps")]
    TimeRegression { t: u64, last: u64 },
}

/// Failures of a single simulation run.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ordering(#[from] QuenchError),
    #[error("event queue overflow: {pending} pending events exceed cap {cap} (runaway afterpulse cascade?)")]
    QueueOverflow { pending: usize, cap: usize },
}

/// Domain errors of the counting-statistics and fitting routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dead-time correction undefined: f_meas * d = {0} >= 1")]
    Saturated(f64),
    #[error("measured rate {f_meas} Hz below dark rate {f_dark} Hz")]
    NegativeSignal { f_meas: f64, f_dark: f64 },
    #[error("degenerate design matrix: {0}")]
    Rank(String),
    #[error("fitted calibration is not monotone: {0}")]
    Calibration(String),
    #[error("division by zero dark rate at {0} V")]
    ZeroDark(f64),
}

/// Problems in a configuration file or its resolved values.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: bad value for `{key}`: {msg}")]
    BadValue { line: usize, key: String, msg: String },
    #[error("`{key}` out of range: {reason}")]
    OutOfRange { key: String, reason: String },
    #[error("unknown scenario `{0}` (see `spadsim list`)")]
    UnknownScenario(String),
}

/// Failures while running a scenario.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{point}: {source}")]
    Sim {
        point: String,
        #[source]
        source: SimError,
    },
    #[error("{point}: {source}")]
    Analysis {
        point: String,
        #[source]
        source: AnalysisError,
    },
    #[error("{point}: {source}")]
    Model {
        point: String,
        #[source]
        source: ModelError,
    },
    #[error("breakdown not found at {t_case} °C: no dark counts up to {v_max} V")]
    BreakdownNotFound { t_case: f64, v_max: f64 },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl From<AnalysisError> for ScenarioError {
    fn from(source: AnalysisError) -> Self {
        ScenarioError::Analysis { point: "analysis".into(), source }
    }
}
