//! Discrete-event simulation core.
//!
//! A run interleaves three carrier sources (photons, dark carriers and trap
//! releases) through one quench state machine while tracking the chip
//! temperature. Time is an unsigned picosecond counter; events are ordered by
//! `(time, insertion sequence)` so identical inputs always replay identically.
//!
//! Photons are generated as a Poisson stream already thinned by the
//! efficiency at the case temperature, which bounds the efficiency at any
//! hotter chip temperature; a second acceptance step with probability
//! `DE(chip) / DE(case)` completes the per-photon thinning. Photons rejected
//! by the first stage are accounted for by a geometric draw so that
//! `n_photons_offered` still counts every arrival. In active mode the photon
//! stream is restarted at the end of each dead window (arrivals inside it
//! cannot interact), with the skipped arrivals counted by a Poisson draw.

mod event;
mod rng;

pub use event::{Event, EventKind, EventQueue};
pub use rng::{derive_seed, next_poisson_gap, RngStreams};

use rand::Rng;
use rand_distr::{Distribution, Geometric, Poisson};

use crate::device::{Spad, ThermalState};
use crate::error::SimError;
use crate::quench::{DetectorMode, DetectorState, QuenchMode};
use crate::{ps_from_secs, Ps};

/// Default bound on pending events.
pub const DEFAULT_QUEUE_CAP: usize = 1 << 20;

/// Chip temperature drift that triggers regeneration of the dark stream (K).
const DARK_REGEN_DRIFT: f64 = 0.1;

/// One step of the piecewise-constant photon source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceStep {
    /// Start time of the step (s).
    pub start: f64,
    /// Photon arrival rate at the SPAD surface (Hz).
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Run length (s).
    pub duration: f64,
    pub seed: u64,
    pub source_program: Vec<SourceStep>,
    /// Temperature of the regulated case (°C).
    pub t_case: f64,
    /// Reverse bias applied to the SPAD (V).
    pub v_bias: f64,
    pub quench: QuenchMode,
    pub afterpulsing: bool,
    pub thermal_feedback: bool,
    /// Treat every photon as converting (efficiency 1 above breakdown).
    pub unit_efficiency: bool,
    /// Interval of the chip temperature trace (s); `None` disables it.
    pub sample_interval: Option<f64>,
    pub queue_cap: usize,
}

impl SimConfig {
    /// Constant-intensity run with afterpulsing and thermal feedback off.
    pub fn constant(rate: f64, duration: f64, seed: u64, t_case: f64, v_bias: f64, quench: QuenchMode) -> Self {
        Self {
            duration,
            seed,
            source_program: vec![SourceStep { start: 0.0, rate }],
            t_case,
            v_bias,
            quench,
            afterpulsing: false,
            thermal_feedback: false,
            unit_efficiency: false,
            sample_interval: None,
            queue_cap: DEFAULT_QUEUE_CAP,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad("duration must be > 0");
        }
        if self.duration * 1e12 >= u64::MAX as f64 / 2.0 {
            return bad("duration exceeds the picosecond clock");
        }
        let Some(first) = self.source_program.first() else {
            return bad("source_program is empty");
        };
        if first.start != 0.0 {
            return bad("source_program must start at 0");
        }
        for w in self.source_program.windows(2) {
            if !(w[1].start > w[0].start) {
                return bad("source_program times must be strictly increasing");
            }
        }
        if self
            .source_program
            .iter()
            .any(|s| !(s.rate >= 0.0 && s.rate.is_finite() && s.start.is_finite()))
        {
            return bad("source rates must be finite and >= 0");
        }
        if !self.t_case.is_finite() || !self.v_bias.is_finite() {
            return bad("t_case and v_bias must be finite");
        }
        if let Some(dt) = self.sample_interval {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad("sample_interval must be > 0");
            }
        }
        if self.queue_cap == 0 {
            return bad("queue_cap must be > 0");
        }
        self.quench.validate().map_err(SimError::InvalidConfig)
    }
}

/// Output of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseRecord {
    /// Output pulse times, strictly increasing (ps).
    pub pulses: Vec<Ps>,
    pub n_avalanches: u64,
    pub n_photons_offered: u64,
    pub n_photon_carriers: u64,
    pub n_photon_pulses: u64,
    pub n_dark_carriers: u64,
    pub n_trap_carriers: u64,
    /// `(time, chip temperature)` samples.
    pub temp_trace: Vec<(Ps, f64)>,
    pub final_state: DetectorState,
    /// Run length (ps).
    pub duration: Ps,
}

impl PulseRecord {
    pub fn duration_secs(&self) -> f64 {
        self.duration as f64 * 1e-12
    }

    /// Mean pulse rate over the whole run (Hz).
    pub fn mean_rate(&self) -> f64 {
        self.pulses.len() as f64 / self.duration_secs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Photon,
    Dark,
    Trap,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    spad: &'a Spad,
    end: Ps,
    rng: RngStreams,
    queue: EventQueue,
    state: DetectorState,
    thermal: ThermalState,
    photon_rate: f64,
    photon_gen: u32,
    /// Efficiency at the case temperature; upper bound of the chip efficiency.
    photon_bound: f64,
    rejected: Option<Geometric>,
    dark_gen: u32,
    dark_temp: f64,
    rec: PulseRecord,
}

/// Runs one simulation. Identical `(sim, spad)` inputs give bit-identical output.
pub fn run(sim: &SimConfig, spad: &Spad) -> Result<PulseRecord, SimError> {
    sim.validate()?;
    let end = ps_from_secs(sim.duration);
    let thermal = ThermalState::at_equilibrium(sim.t_case);
    let mut engine = Engine {
        cfg: sim,
        spad,
        end,
        rng: RngStreams::new(sim.seed),
        queue: EventQueue::new(),
        state: DetectorState::default(),
        thermal,
        photon_rate: 0.0,
        photon_gen: 0,
        photon_bound: 0.0,
        rejected: None,
        dark_gen: 0,
        dark_temp: sim.t_case,
        rec: PulseRecord {
            pulses: Vec::new(),
            n_avalanches: 0,
            n_photons_offered: 0,
            n_photon_carriers: 0,
            n_photon_pulses: 0,
            n_dark_carriers: 0,
            n_trap_carriers: 0,
            temp_trace: Vec::new(),
            final_state: DetectorState::default(),
            duration: end,
        },
    };
    engine.photon_bound = engine.efficiency(engine.v_nominal());
    if engine.photon_bound > 0.0 && engine.photon_bound < 1.0 {
        engine.rejected = Some(Geometric::new(engine.photon_bound).expect("bound in (0,1)"));
    }
    engine.start();
    engine.run_loop()?;
    engine.rec.final_state = engine.state;
    Ok(engine.rec)
}

impl Engine<'_> {
    fn start(&mut self) {
        for step in &self.cfg.source_program {
            let t = ps_from_secs(step.start);
            if t < self.end {
                self.queue.push(t, EventKind::IntensityChange { new_rate: step.rate });
            }
        }
        if self.cfg.sample_interval.is_some() {
            self.queue.push(0, EventKind::SampleTick);
        }
        self.schedule_dark(0);
    }

    fn run_loop(&mut self) -> Result<(), SimError> {
        while let Some(ev) = self.queue.pop() {
            if ev.time >= self.end {
                break;
            }
            self.advance(ev.time);
            match ev.kind {
                EventKind::Photon { gen } => {
                    if gen == self.photon_gen {
                        self.on_photon(ev.time)?;
                    }
                }
                EventKind::DarkCarrier { gen } => {
                    if gen == self.dark_gen {
                        self.rec.n_dark_carriers += 1;
                        self.carrier(ev.time, Source::Dark)?;
                        self.schedule_dark(ev.time);
                    }
                }
                EventKind::TrapRelease => {
                    if self.is_sensitive(ev.time) {
                        self.rec.n_trap_carriers += 1;
                        self.carrier(ev.time, Source::Trap)?;
                    }
                }
                EventKind::IntensityChange { new_rate } => {
                    self.photon_rate = new_rate;
                    self.photon_gen = self.photon_gen.wrapping_add(1);
                    if self.photon_bound <= 0.0 {
                        self.count_unconvertible(ev.time);
                    }
                    self.schedule_photon(ev.time);
                }
                EventKind::SampleTick => {
                    self.rec.temp_trace.push((ev.time, self.thermal.t_chip));
                    if let Some(dt) = self.cfg.sample_interval {
                        let next = ev.time.saturating_add(ps_from_secs(dt).max(1));
                        if next < self.end {
                            self.queue.push(next, EventKind::SampleTick);
                        }
                    }
                }
            }
            if self.queue.len() > self.cfg.queue_cap {
                return Err(SimError::QueueOverflow {
                    pending: self.queue.len(),
                    cap: self.cfg.queue_cap,
                });
            }
        }
        Ok(())
    }

    fn v_nominal(&self) -> f64 {
        self.spad.overvoltage(self.thermal.t_chip, self.cfg.v_bias)
    }

    fn efficiency(&self, v_over: f64) -> f64 {
        if self.cfg.unit_efficiency {
            if v_over > 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            self.spad.detection_efficiency(v_over)
        }
    }

    fn is_sensitive(&self, t: Ps) -> bool {
        match self.cfg.quench {
            QuenchMode::Active(c) => c.is_sensitive(&self.state, t),
            QuenchMode::Passive(_) => self.state.mode != DetectorMode::Latched,
        }
    }

    fn advance(&mut self, t: Ps) {
        if !self.cfg.thermal_feedback {
            return;
        }
        self.thermal = self.thermal.advance(self.spad.params(), t);
        self.check_dark_drift(t);
    }

    fn check_dark_drift(&mut self, t: Ps) {
        if (self.thermal.t_chip - self.dark_temp).abs() > DARK_REGEN_DRIFT {
            self.dark_gen = self.dark_gen.wrapping_add(1);
            self.schedule_dark(t);
        }
    }

    fn schedule_dark(&mut self, now: Ps) {
        self.dark_temp = self.thermal.t_chip;
        let rate = self.spad.dark_rate(self.thermal.t_chip, self.v_nominal());
        if rate > 0.0 {
            let t = now.saturating_add(next_poisson_gap(&mut self.rng.dark, rate));
            if t < self.end {
                self.queue.push(t, EventKind::DarkCarrier { gen: self.dark_gen });
            }
        }
    }

    fn poisson_count(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        match Poisson::new(mean) {
            Ok(d) => d.sample(&mut self.rng.photon) as u64,
            Err(_) => mean.round() as u64,
        }
    }

    /// Photons arriving while no carrier can be produced are only counted.
    fn count_unconvertible(&mut self, now: Ps) {
        let seg_end = self
            .cfg
            .source_program
            .iter()
            .map(|s| ps_from_secs(s.start))
            .find(|&s| s > now)
            .unwrap_or(self.end)
            .min(self.end);
        let mean = self.photon_rate * (seg_end - now) as f64 * 1e-12;
        self.rec.n_photons_offered += self.poisson_count(mean);
    }

    fn schedule_photon(&mut self, now: Ps) {
        if self.photon_rate <= 0.0 || self.photon_bound <= 0.0 {
            return;
        }
        let mut start = now;
        if let (QuenchMode::Active(_), DetectorMode::DeadUntil(u)) = (self.cfg.quench, self.state.mode) {
            // restart just before the window closes so an arrival exactly at
            // the re-arm instant remains possible
            if u > now + 1 {
                let skip_to = u - 1;
                let mean = self.photon_rate * (skip_to.min(self.end) - now.min(self.end)) as f64 * 1e-12;
                self.rec.n_photons_offered += self.poisson_count(mean);
                start = skip_to;
            }
        }
        let gap = next_poisson_gap(&mut self.rng.photon, self.photon_rate * self.photon_bound);
        let t = start.saturating_add(gap);
        if t < self.end {
            self.queue.push(t, EventKind::Photon { gen: self.photon_gen });
        }
    }

    fn on_photon(&mut self, t: Ps) -> Result<(), SimError> {
        let rejected = match self.rejected {
            Some(g) => g.sample(&mut self.rng.photon),
            None => 0,
        };
        self.rec.n_photons_offered += 1 + rejected;
        let accept = if self.cfg.thermal_feedback {
            let ratio = (self.efficiency(self.v_nominal()) / self.photon_bound).min(1.0);
            self.rng.thinning.random::<f64>() < ratio
        } else {
            true
        };
        if accept {
            self.rec.n_photon_carriers += 1;
            self.carrier(t, Source::Photon)?;
        }
        self.schedule_photon(t);
        Ok(())
    }

    fn carrier(&mut self, t: Ps, src: Source) -> Result<(), SimError> {
        let v_nom = self.v_nominal();
        let (out, v_at) = match self.cfg.quench {
            QuenchMode::Active(cfg) => (cfg.on_carrier(self.state, t)?, v_nom),
            QuenchMode::Passive(cfg) => {
                let u: f64 = self.rng.thinning.random();
                let v_at = cfg.current_overvoltage(self.spad, &self.state, v_nom, t);
                (cfg.on_carrier(self.state, self.spad, v_nom, t, u)?, v_at)
            }
        };
        self.state = out.state;
        if out.avalanche {
            self.avalanche(t, v_at);
        }
        if let Some(p) = out.pulse {
            self.rec.pulses.push(p);
            if src == Source::Photon {
                self.rec.n_photon_pulses += 1;
            }
        }
        Ok(())
    }

    fn avalanche(&mut self, t: Ps, v_over: f64) {
        self.rec.n_avalanches += 1;
        if self.cfg.thermal_feedback {
            let e = self.spad.avalanche_energy(self.cfg.v_bias, v_over);
            self.thermal = self.thermal.deposit(self.spad.params(), e);
            self.check_dark_drift(t);
        }
        if self.cfg.afterpulsing {
            let p = self.spad.afterpulse_probability(v_over.max(0.0));
            if self.rng.afterpulse.random::<f64>() < p {
                let gap = next_poisson_gap(&mut self.rng.afterpulse, 1.0 / self.spad.params().ap_tau);
                let at = t.saturating_add(gap);
                if at < self.end {
                    self.queue.push(at, EventKind::TrapRelease);
                }
            }
        }
    }
}
