//! Behavioural quench models.
//!
//! The active circuit is a non-retriggerable monostable: an avalanche in the
//! armed state produces a pulse and blinds the detector for a fixed dead time.
//! The passive network recharges the diode exponentially through the series
//! resistor, so a second avalanche during recovery sees a reduced overvoltage
//! and may pile up without producing a countable pulse.

use crate::device::Spad;
use crate::error::QuenchError;
use crate::Ps;

/// Timing constants of the active quenching circuit, in picoseconds.
///
/// `t_sense` lumps comparator and inverter propagation; only the quench hold
/// and the recharge time are separately observable, the remainder of the
/// total dead time is assigned here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveQuenchConfig {
    pub t_sense: Ps,
    pub t_quench: Ps,
    pub t_recover: Ps,
    /// Highest overvoltage at which avalanches are still quenched reliably (V).
    pub v_over_max: f64,
}

impl Default for ActiveQuenchConfig {
    fn default() -> Self {
        Self {
            t_sense: 20_000,
            t_quench: 16_000,
            t_recover: 3_000,
            v_over_max: 5.0,
        }
    }
}

impl ActiveQuenchConfig {
    pub fn dead_time(&self) -> Ps {
        self.t_sense + self.t_quench + self.t_recover
    }

    pub fn dead_time_secs(&self) -> f64 {
        self.dead_time() as f64 * 1e-12
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.t_sense == 0 || self.t_quench == 0 || self.t_recover == 0 {
            return Err("active quench durations must be > 0".into());
        }
        if !(self.v_over_max > 0.0) {
            return Err("v_over_max must be > 0".into());
        }
        Ok(())
    }

    /// Handles one carrier arriving at `t`.
    ///
    /// The dead window is closed on the right: a carrier exactly at the end of
    /// the window re-arms the circuit first and is counted.
    pub fn on_carrier(&self, st: DetectorState, t: Ps) -> Result<CarrierOutcome, QuenchError> {
        st.check_order(t)?;
        let armed = match st.mode {
            DetectorMode::Armed => true,
            DetectorMode::DeadUntil(u) => t >= u,
            // passive-only modes never occur here; treat as armed
            DetectorMode::RecoveringSince(_) | DetectorMode::Latched => true,
        };
        if !armed {
            return Ok(CarrierOutcome {
                state: st,
                avalanche: false,
                pulse: None,
            });
        }
        Ok(CarrierOutcome {
            state: DetectorState {
                mode: DetectorMode::DeadUntil(t + self.dead_time()),
                last_pulse: Some(t),
            },
            avalanche: true,
            pulse: Some(t),
        })
    }

    /// True when a carrier at `t` would find the circuit armed.
    pub fn is_sensitive(&self, st: &DetectorState, t: Ps) -> bool {
        match st.mode {
            DetectorMode::DeadUntil(u) => t >= u,
            _ => true,
        }
    }
}

/// Passive quench network values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassiveQuenchConfig {
    /// Series (current limiting) resistance, ohms.
    pub r_s: f64,
    /// Signal pickup resistance, ohms. Informational only.
    pub r_l: f64,
    /// Fraction of nominal overvoltage that must be restored before an
    /// avalanche produces a countable output pulse.
    pub rearm_fraction: f64,
}

impl Default for PassiveQuenchConfig {
    fn default() -> Self {
        Self {
            r_s: 220e3,
            r_l: 220.0,
            rearm_fraction: 0.5,
        }
    }
}

impl PassiveQuenchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.r_s > 0.0 && self.r_s.is_finite()) {
            return Err("r_s must be > 0".into());
        }
        if !(self.r_l >= 0.0) {
            return Err("r_l must be >= 0".into());
        }
        if !(self.rearm_fraction > 0.0 && self.rearm_fraction < 1.0) {
            return Err("rearm_fraction must lie in (0, 1)".into());
        }
        Ok(())
    }

    /// Recharge time constant `r_s * c_spad` in seconds.
    pub fn tau(&self, spad: &Spad) -> f64 {
        self.r_s * spad.params().c_spad
    }

    /// Overvoltage restored `dt` picoseconds after the last avalanche.
    pub fn overvoltage_at(&self, spad: &Spad, v_over_nominal: f64, dt: Ps) -> f64 {
        let x = dt as f64 * 1e-12 / self.tau(spad);
        v_over_nominal * -(-x).exp_m1()
    }

    /// True when the steady avalanche current `v_over / r_s` reaches the
    /// latch current, i.e. the avalanche will not self-extinguish.
    pub fn latches(&self, spad: &Spad, v_over_nominal: f64) -> bool {
        v_over_nominal / self.r_s >= spad.params().i_latch
    }

    /// Instantaneous overvoltage for a given state.
    pub fn current_overvoltage(&self, spad: &Spad, st: &DetectorState, v_over_nominal: f64, t: Ps) -> f64 {
        match st.mode {
            DetectorMode::RecoveringSince(t0) => self.overvoltage_at(spad, v_over_nominal, t - t0),
            DetectorMode::Latched => 0.0,
            _ => v_over_nominal,
        }
    }

    /// Handles one carrier at `t`; `u` is a uniform draw in `[0, 1)` used for
    /// the recovery-dependent trigger probability `DE(v(t)) / DE(v_nominal)`.
    pub fn on_carrier(
        &self,
        st: DetectorState,
        spad: &Spad,
        v_over_nominal: f64,
        t: Ps,
        u: f64,
    ) -> Result<CarrierOutcome, QuenchError> {
        st.check_order(t)?;
        if st.mode == DetectorMode::Latched || v_over_nominal <= 0.0 {
            return Ok(CarrierOutcome {
                state: st,
                avalanche: false,
                pulse: None,
            });
        }
        let v = self.current_overvoltage(spad, &st, v_over_nominal, t);
        let de_nom = spad.detection_efficiency(v_over_nominal);
        let p_trigger = if v >= v_over_nominal {
            1.0
        } else {
            spad.detection_efficiency(v) / de_nom
        };
        if u >= p_trigger {
            return Ok(CarrierOutcome {
                state: st,
                avalanche: false,
                pulse: None,
            });
        }
        let pulse = (v >= self.rearm_fraction * v_over_nominal).then_some(t);
        let mode = if self.latches(spad, v_over_nominal) {
            DetectorMode::Latched
        } else {
            DetectorMode::RecoveringSince(t)
        };
        Ok(CarrierOutcome {
            state: DetectorState {
                mode,
                last_pulse: pulse.or(st.last_pulse),
            },
            avalanche: true,
            pulse,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuenchMode {
    Active(ActiveQuenchConfig),
    Passive(PassiveQuenchConfig),
}

impl QuenchMode {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            QuenchMode::Active(c) => c.validate(),
            QuenchMode::Passive(c) => c.validate(),
        }
    }
}

impl Default for QuenchMode {
    fn default() -> Self {
        QuenchMode::Active(ActiveQuenchConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorMode {
    Armed,
    DeadUntil(Ps),
    RecoveringSince(Ps),
    Latched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectorState {
    pub mode: DetectorMode,
    pub last_pulse: Option<Ps>,
}

impl Default for DetectorState {
    fn default() -> Self {
        Self {
            mode: DetectorMode::Armed,
            last_pulse: None,
        }
    }
}

impl DetectorState {
    fn check_order(&self, t: Ps) -> Result<(), QuenchError> {
        let mut last = self.last_pulse.unwrap_or(0);
        if let DetectorMode::RecoveringSince(t0) = self.mode {
            last = last.max(t0);
        }
        if t < last {
            return Err(QuenchError::TimeRegression { t, last });
        }
        Ok(())
    }
}

/// Result of presenting one carrier to a quench state machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CarrierOutcome {
    pub state: DetectorState,
    /// The carrier triggered an avalanche (heat, possible trap filling).
    pub avalanche: bool,
    /// Output pulse timestamp, if the avalanche was counted.
    pub pulse: Option<Ps>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::SpadParams;
    use proptest::prelude::*;

    fn spad() -> Spad {
        Spad::new(SpadParams::default()).unwrap()
    }

    #[test]
    fn dead_time_default() {
        assert_eq!(ActiveQuenchConfig::default().dead_time(), 39_000);
    }

    #[test]
    fn active_transitions() {
        let cfg = ActiveQuenchConfig::default();
        let out = cfg.on_carrier(DetectorState::default(), 0).unwrap();
        assert_eq!(out.pulse, Some(0));
        assert_eq!(out.state.mode, DetectorMode::DeadUntil(39_000));

        let inside = cfg.on_carrier(out.state, 20_000).unwrap();
        assert_eq!(inside.pulse, None);
        assert!(!inside.avalanche);
        assert_eq!(inside.state, out.state);

        let edge = cfg.on_carrier(out.state, 39_000).unwrap();
        assert_eq!(edge.pulse, Some(39_000));
        assert_eq!(edge.state.mode, DetectorMode::DeadUntil(78_000));
    }

    #[test]
    fn active_rejects_time_regression() {
        let cfg = ActiveQuenchConfig::default();
        let out = cfg.on_carrier(DetectorState::default(), 50_000).unwrap();
        assert!(matches!(
            cfg.on_carrier(out.state, 10_000),
            Err(QuenchError::TimeRegression { t: 10_000, last: 50_000 })
        ));
    }

    #[test]
    fn passive_overvoltage_examples() {
        let s = spad();
        let cfg = PassiveQuenchConfig::default();
        assert!((cfg.tau(&s) - 660e-9).abs() < 1e-18);
        assert_eq!(cfg.overvoltage_at(&s, 3.5, 0), 0.0);
        let v = cfg.overvoltage_at(&s, 3.5, 660_000);
        assert!((v - 3.5 * (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert!((v - 2.2124).abs() < 1e-4);
    }

    #[test]
    fn latch_condition() {
        let s = spad();
        let cfg = PassiveQuenchConfig::default();
        assert!(!cfg.latches(&s, 3.5));
        assert!(cfg.latches(&s, 15.0));
        assert!(cfg.latches(&s, 50e-6 * 220e3));
    }

    #[test]
    fn passive_armed_counts() {
        let s = spad();
        let cfg = PassiveQuenchConfig::default();
        let out = cfg
            .on_carrier(DetectorState::default(), &s, 3.5, 1_000, 0.999)
            .unwrap();
        assert!(out.avalanche);
        assert_eq!(out.pulse, Some(1_000));
        assert_eq!(out.state.mode, DetectorMode::RecoveringSince(1_000));
    }

    #[test]
    fn passive_early_carrier_rarely_triggers_and_never_counts() {
        let s = spad();
        let cfg = PassiveQuenchConfig::default();
        let st = DetectorState {
            mode: DetectorMode::RecoveringSince(0),
            last_pulse: Some(0),
        };
        let dt = 6_600; // 0.01 tau
        let v = cfg.overvoltage_at(&s, 3.5, dt);
        let p = s.detection_efficiency(v) / s.detection_efficiency(3.5);
        // DE(0.035 V)/DE(3.5 V) for the default anchors
        assert!((p - 0.01116).abs() < 2e-4, "{p}");
        let miss = cfg.on_carrier(st, &s, 3.5, dt, p + 1e-6).unwrap();
        assert!(!miss.avalanche);
        let hit = cfg.on_carrier(st, &s, 3.5, dt, 0.0).unwrap();
        assert!(hit.avalanche);
        assert_eq!(hit.pulse, None);
        assert_eq!(hit.state.mode, DetectorMode::RecoveringSince(dt));
    }

    #[test]
    fn passive_latched_absorbs() {
        let s = spad();
        let cfg = PassiveQuenchConfig::default();
        let out = cfg
            .on_carrier(DetectorState::default(), &s, 15.0, 0, 0.0)
            .unwrap();
        assert_eq!(out.state.mode, DetectorMode::Latched);
        let next = cfg.on_carrier(out.state, &s, 15.0, 10_000_000, 0.0).unwrap();
        assert!(!next.avalanche);
        assert_eq!(next.pulse, None);
    }

    proptest! {
        #[test]
        fn passive_overvoltage_monotone_bounded(dt1 in 0u64..10_000_000, dt2 in 0u64..10_000_000, v in 0.1f64..10.0) {
            let s = spad();
            let cfg = PassiveQuenchConfig::default();
            let (a, b) = (dt1.min(dt2), dt1.max(dt2));
            let va = cfg.overvoltage_at(&s, v, a);
            let vb = cfg.overvoltage_at(&s, v, b);
            prop_assert!(va <= vb);
            prop_assert!(vb <= v);
            prop_assert!(va >= 0.0);
        }

        #[test]
        fn active_gaps_respect_dead_time(mut ts in proptest::collection::vec(0u64..5_000_000, 1..400)) {
            ts.sort_unstable();
            let cfg = ActiveQuenchConfig::default();
            let mut st = DetectorState::default();
            let mut pulses = Vec::new();
            for t in ts {
                let out = cfg.on_carrier(st, t).unwrap();
                st = out.state;
                pulses.extend(out.pulse);
            }
            for w in pulses.windows(2) {
                prop_assert!(w[1] - w[0] >= cfg.dead_time());
            }
        }
    }
}
