//! Monte Carlo simulator of Geiger-mode avalanche photodiode photon counters.
//!
//! The crate is layered bottom-up:
//!
//! - [`device`]: SPAD physics (breakdown, efficiency, dark counts,
//!   afterpulsing, chip heating) and the calibrated LED source.
//! - [`quench`]: behavioural state machines for active and passive quenching.
//! - [`engine`]: the seeded discrete-event loop producing pulse records.
//! - [`analysis`]: dead-time models, rate estimation, histograms, fits and
//!   maximum-rate search.
//! - [`scenarios`]: reproducible characterisation experiments, configuration
//!   parsing and CSV output, driven by the `spadsim` binary.

pub mod analysis;
pub mod device;
pub mod engine;
pub mod error;
pub mod quench;
pub mod scenarios;

/// Simulation timestamps and durations in picoseconds.
pub type Ps = u64;

/// Converts seconds to the nearest picosecond.
pub fn ps_from_secs(secs: f64) -> Ps {
    (secs * 1e12).round().max(0.0) as Ps
}

pub fn secs_from_ps(ps: Ps) -> f64 {
    ps as f64 * 1e-12
}

pub use device::{Led, LedParams, Spad, SpadParams, ThermalState};
pub use engine::{run, PulseRecord, SimConfig, SourceStep};
pub use quench::{ActiveQuenchConfig, DetectorMode, DetectorState, PassiveQuenchConfig, QuenchMode};
