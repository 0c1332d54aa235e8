//! Device physics: the avalanche photodiode, the calibrated LED source and the
//! lumped thermal model of the SPAD chip.
//!
//! Everything in this module is a pure function of its inputs. Voltages are in
//! volts, temperatures in degrees Celsius (differences in kelvin), currents in
//! amperes and durations in seconds, except [`ThermalState::last_update`] which
//! carries the engine's picosecond clock.

use crate::error::ModelError;
use crate::Ps;

/// Physical constants of a Geiger-mode avalanche photodiode.
///
/// The defaults describe a C30902S-class silicon SPAD. Values for the dark
/// count magnitude, afterpulsing and the thermal path are synthetic
/// placeholders: only their qualitative behaviour is anchored in measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct SpadParams {
    /// Breakdown voltage at `t_ref` (V).
    pub v_br_ref: f64,
    /// Reference temperature for `v_br_ref` (°C).
    pub t_ref: f64,
    /// Breakdown temperature coefficient (V/K).
    pub tempco: f64,
    /// Diode plus parasitic capacitance (F).
    pub c_spad: f64,
    /// Latch current (A).
    pub i_latch: f64,
    /// Low efficiency anchor (overvoltage V, probability).
    pub de_anchor_lo: (f64, f64),
    /// High efficiency anchor (overvoltage V, probability).
    pub de_anchor_hi: (f64, f64),
    /// Dark count rate at (`t_dark_ref`, `v_over_ref`) in Hz. Synthetic.
    pub dark_rate_ref: f64,
    /// Temperature of the dark-rate reference point (°C).
    pub t_dark_ref: f64,
    /// Overvoltage of the dark-rate reference point (V).
    pub v_over_ref: f64,
    /// Temperature interval over which the dark rate doubles (K).
    pub t_double: f64,
    /// Exponent applied to the efficiency ratio in the dark-rate law.
    /// `1.0` makes thermal carriers trigger exactly like photo-carriers.
    pub dark_de_exponent: f64,
    /// e-folding overvoltage of field-enhanced carrier generation (V).
    /// `f64::INFINITY` disables the term.
    pub dark_field_scale: f64,
    /// Afterpulse probability per avalanche below the knee.
    pub ap_p0: f64,
    /// Overvoltage above which quenching degrades (V).
    pub ap_knee: f64,
    /// Afterpulse probability increase per volt above the knee (1/V).
    pub ap_slope: f64,
    /// Normalisation of the quench-failure boost in the dark rate.
    pub ap_norm: f64,
    /// Trap release time constant (s).
    pub ap_tau: f64,
    /// Chip-to-case thermal resistance (K/W).
    pub r_th: f64,
    /// Chip thermal time constant (s).
    pub tau_th: f64,
    /// Heat deposited per avalanche (J). `None` uses `c_spad * v_bias * v_over`.
    pub e_avalanche: Option<f64>,
}

impl Default for SpadParams {
    fn default() -> Self {
        Self {
            v_br_ref: 225.0,
            t_ref: 21.0,
            tempco: 0.655,
            c_spad: 3e-12,
            i_latch: 50e-6,
            de_anchor_lo: (3.5, 0.15),
            de_anchor_hi: (25.0, 0.58),
            dark_rate_ref: 2e4,
            t_dark_ref: 20.0,
            v_over_ref: 3.5,
            t_double: 8.0,
            dark_de_exponent: 0.6,
            dark_field_scale: 7.0,
            ap_p0: 0.003,
            ap_knee: 4.5,
            ap_slope: 0.02,
            ap_norm: 0.1,
            ap_tau: 100e-9,
            r_th: 10.0,
            tau_th: 2.0,
            e_avalanche: None,
        }
    }
}

fn out_of_range(name: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::OutOfRange {
        name,
        reason: reason.into(),
    }
}

fn require(ok: bool, name: &'static str, reason: &str) -> Result<(), ModelError> {
    if ok {
        Ok(())
    } else {
        Err(out_of_range(name, reason))
    }
}

impl SpadParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        require(self.v_br_ref.is_finite(), "v_br_ref", "must be finite")?;
        require(self.t_ref.is_finite(), "t_ref", "must be finite")?;
        require(self.tempco > 0.0 && self.tempco.is_finite(), "tempco", "must be > 0")?;
        require(self.c_spad > 0.0 && self.c_spad.is_finite(), "c_spad", "must be > 0")?;
        require(self.i_latch > 0.0 && self.i_latch.is_finite(), "i_latch", "must be > 0")?;
        let (vl, pl) = self.de_anchor_lo;
        let (vh, ph) = self.de_anchor_hi;
        require(vl > 0.0 && vl < vh, "de_anchor", "need 0 < v_lo < v_hi")?;
        require(pl > 0.0 && pl < ph && ph < 1.0, "de_anchor", "need 0 < p_lo < p_hi < 1")?;
        require(self.dark_rate_ref >= 0.0 && self.dark_rate_ref.is_finite(), "dark_rate_ref", "must be >= 0")?;
        require(self.t_dark_ref.is_finite(), "t_dark_ref", "must be finite")?;
        require(self.v_over_ref > 0.0 && self.v_over_ref.is_finite(), "v_over_ref", "must be > 0")?;
        require(self.t_double > 0.0 && self.t_double.is_finite(), "t_double", "must be > 0")?;
        require(self.dark_de_exponent > 0.0 && self.dark_de_exponent.is_finite(), "dark_de_exponent", "must be > 0")?;
        require(self.dark_field_scale > 0.0, "dark_field_scale", "must be > 0 (inf disables)")?;
        require((0.0..1.0).contains(&self.ap_p0), "ap_p0", "must lie in [0, 1)")?;
        require(self.ap_knee.is_finite(), "ap_knee", "must be finite")?;
        require(self.ap_slope >= 0.0 && self.ap_slope.is_finite(), "ap_slope", "must be >= 0")?;
        require(self.ap_norm > 0.0 && self.ap_norm.is_finite(), "ap_norm", "must be > 0")?;
        require(self.ap_tau > 0.0 && self.ap_tau.is_finite(), "ap_tau", "must be > 0")?;
        require(self.r_th >= 0.0 && self.r_th.is_finite(), "r_th", "must be >= 0")?;
        require(self.tau_th > 0.0 && self.tau_th.is_finite(), "tau_th", "must be > 0")?;
        if let Some(e) = self.e_avalanche {
            require(e >= 0.0 && e.is_finite(), "e_avalanche", "must be >= 0")?;
        }
        Ok(())
    }
}

/// Saturating exponential `amplitude * (1 - exp(-v / scale))` through two
/// anchor points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyCurve {
    pub amplitude: f64,
    pub scale: f64,
}

impl EfficiencyCurve {
    /// Solves for the curve passing through both anchors.
    ///
    /// With `r = p_lo / p_hi`, the scale solves
    /// `(1 - e^{-v_lo/s}) / (1 - e^{-v_hi/s}) = r`, whose left side falls
    /// monotonically from 1 (s -> 0) to `v_lo / v_hi` (s -> inf). A solution
    /// therefore exists iff `v_lo / v_hi < r < 1`.
    pub fn from_anchors(lo: (f64, f64), hi: (f64, f64)) -> Result<Self, ModelError> {
        let (vl, pl) = lo;
        let (vh, ph) = hi;
        let fail = || ModelError::AnchorSolve {
            lo_v: vl,
            lo_p: pl,
            hi_v: vh,
            hi_p: ph,
        };
        if !(vl > 0.0 && vh > vl && pl > 0.0 && ph > pl) {
            return Err(fail());
        }
        let target = pl / ph;
        if target <= vl / vh {
            return Err(fail());
        }
        // Residual in log-scale coordinates; decreasing in `u = ln s`.
        let resid = |u: f64| {
            let s = u.exp();
            (-vl / s).exp_m1() / (-vh / s).exp_m1() - target
        };
        // Bracket then regula falsi (Illinois variant).
        let mut a = vl.ln() - 8.0;
        let mut b = vh.ln() + 8.0;
        let mut fa = resid(a);
        let mut fb = resid(b);
        let mut grow = 0;
        while fb > 0.0 && grow < 60 {
            b += 4.0;
            fb = resid(b);
            grow += 1;
        }
        if !(fa > 0.0 && fb < 0.0) {
            return Err(fail());
        }
        let mut side = 0i8;
        let mut u = a;
        for _ in 0..200 {
            u = (a * fb - b * fa) / (fb - fa);
            let fu = resid(u);
            if fu == 0.0 || (b - a).abs() < 1e-15 * (1.0 + u.abs()) {
                break;
            }
            if fu > 0.0 {
                a = u;
                fa = fu;
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            } else {
                b = u;
                fb = fu;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            }
        }
        let scale = u.exp();
        let amplitude = pl / -(-vl / scale).exp_m1();
        if !(scale.is_finite() && scale > 0.0 && amplitude.is_finite()) {
            return Err(fail());
        }
        Ok(Self { amplitude, scale })
    }

    pub fn eval(&self, v_over: f64) -> f64 {
        if v_over <= 0.0 {
            return 0.0;
        }
        (self.amplitude * -(-v_over / self.scale).exp_m1()).clamp(0.0, 1.0)
    }
}

/// A validated SPAD model with its efficiency curve solved once.
#[derive(Debug, Clone, PartialEq)]
pub struct Spad {
    params: SpadParams,
    de: EfficiencyCurve,
    de_ref: f64,
}

impl Spad {
    pub fn new(params: SpadParams) -> Result<Self, ModelError> {
        params.validate()?;
        let de = EfficiencyCurve::from_anchors(params.de_anchor_lo, params.de_anchor_hi)?;
        let de_ref = de.eval(params.v_over_ref);
        if de_ref <= 0.0 {
            return Err(ModelError::ZeroReferenceEfficiency(params.v_over_ref));
        }
        Ok(Self { params, de, de_ref })
    }

    pub fn params(&self) -> &SpadParams {
        &self.params
    }

    pub fn efficiency_curve(&self) -> EfficiencyCurve {
        self.de
    }

    /// Linear in temperature: `v_br_ref + tempco * (t - t_ref)`.
    pub fn breakdown_voltage(&self, t: f64) -> f64 {
        self.params.v_br_ref + self.params.tempco * (t - self.params.t_ref)
    }

    /// Bias in excess of breakdown at the chip temperature; negative below breakdown.
    pub fn overvoltage(&self, t_chip: f64, v_bias: f64) -> f64 {
        v_bias - self.breakdown_voltage(t_chip)
    }

    pub fn detection_efficiency(&self, v_over: f64) -> f64 {
        self.de.eval(v_over)
    }

    /// Dark count rate in Hz. Zero at or below breakdown.
    ///
    /// `ref * 2^((t - t_ref)/t_double) * (DE(v)/DE(v_ref))^k * exp((v - v_ref)/v_f) * (1 + boost)`
    /// where `boost = max(0, ap_slope (v - ap_knee)) / ap_norm` is the
    /// quench-failure rise. With `k = 1` and `v_f = inf` the overvoltage
    /// dependence follows the efficiency curve exactly.
    pub fn dark_rate(&self, t_chip: f64, v_over: f64) -> f64 {
        if v_over <= 0.0 {
            return 0.0;
        }
        let p = &self.params;
        let thermal = ((t_chip - p.t_dark_ref) / p.t_double).exp2();
        let ratio = self.detection_efficiency(v_over) / self.de_ref;
        let shape = if p.dark_de_exponent == 1.0 {
            ratio
        } else {
            ratio.powf(p.dark_de_exponent)
        };
        let field = if p.dark_field_scale.is_finite() {
            ((v_over - p.v_over_ref) / p.dark_field_scale).exp()
        } else {
            1.0
        };
        let boost = (p.ap_slope * (v_over - p.ap_knee)).max(0.0) / p.ap_norm;
        p.dark_rate_ref * thermal * shape * field * (1.0 + boost)
    }

    /// Piecewise-linear afterpulse probability, constant below the knee.
    pub fn afterpulse_probability(&self, v_over: f64) -> f64 {
        let p = &self.params;
        if v_over <= p.ap_knee {
            p.ap_p0
        } else {
            (p.ap_p0 + p.ap_slope * (v_over - p.ap_knee)).clamp(0.0, 1.0)
        }
    }

    /// Smallest passive-quench time constant that still extinguishes the
    /// avalanche: `(v_over / i_latch) * c_spad`.
    pub fn min_passive_tau(&self, v_over: f64) -> f64 {
        v_over / self.params.i_latch * self.params.c_spad
    }

    /// Heat released by one avalanche at the given operating point.
    pub fn avalanche_energy(&self, v_bias: f64, v_over: f64) -> f64 {
        match self.params.e_avalanche {
            Some(e) => e,
            None => self.params.c_spad * v_bias * v_over.max(0.0),
        }
    }
}

/// Temperature of the SPAD chip relative to its temperature-controlled case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalState {
    pub t_chip: f64,
    pub t_case: f64,
    pub last_update: Ps,
}

impl ThermalState {
    pub fn at_equilibrium(t_case: f64) -> Self {
        Self {
            t_chip: t_case,
            t_case,
            last_update: 0,
        }
    }

    /// Relaxes the chip toward the case temperature up to `now`.
    pub fn advance(&self, p: &SpadParams, now: Ps) -> Self {
        debug_assert!(now >= self.last_update);
        let dt = now.saturating_sub(self.last_update) as f64 * 1e-12;
        let decay = (-dt / p.tau_th).exp();
        Self {
            t_chip: self.t_case + (self.t_chip - self.t_case) * decay,
            t_case: self.t_case,
            last_update: now.max(self.last_update),
        }
    }

    /// Adds one avalanche worth of heat: `dT = E r_th / tau_th`, i.e. `E / C_th`.
    pub fn deposit(&self, p: &SpadParams, energy: f64) -> Self {
        Self {
            t_chip: self.t_chip + energy * p.r_th / p.tau_th,
            ..*self
        }
    }

    pub fn excess(&self) -> f64 {
        self.t_chip - self.t_case
    }
}

/// Light-versus-current calibration of the LED module.
#[derive(Debug, Clone, PartialEq)]
pub struct LedParams {
    /// Coefficients `c_k` of `ln(rate) = sum c_k (ln I)^k`, current in amperes,
    /// rate in photons/s reaching the SPAD.
    pub loglog_coeffs: Vec<f64>,
    /// Calibration temperature (°C).
    pub t_cal: f64,
    /// Relative intensity change per kelvin.
    pub tempco_rel: f64,
    /// Valid current range (A).
    pub current_range: (f64, f64),
}

impl Default for LedParams {
    fn default() -> Self {
        // Mildly superlinear at low drive, sublinear near the top of the
        // range; about 2e4 photons/s at 20 nA and 2e8 photons/s at 200 uA.
        Self {
            loglog_coeffs: vec![25.99, 0.715, -0.01086],
            t_cal: 17.5,
            tempco_rel: -0.0058,
            current_range: (0.02e-6, 200e-6),
        }
    }
}

/// Number of interior points used when checking calibration monotonicity.
const MONOTONE_GRID: usize = 2000;

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn poly_slope(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c)
}

/// Checks that the log-log polynomial has a positive slope on `[lo, hi]`
/// (in `ln I`). Returns the offending point otherwise.
pub(crate) fn check_loglog_monotone(coeffs: &[f64], lo: f64, hi: f64) -> Result<(), ModelError> {
    for i in 0..=MONOTONE_GRID {
        let x = lo + (hi - lo) * i as f64 / MONOTONE_GRID as f64;
        let slope = poly_slope(coeffs, x);
        if !(slope > 0.0) {
            return Err(ModelError::NonMonotoneCalibration { slope, at: x });
        }
    }
    Ok(())
}

/// A validated LED calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct Led {
    params: LedParams,
}

impl Led {
    pub fn new(params: LedParams) -> Result<Self, ModelError> {
        let (lo, hi) = params.current_range;
        require(lo > 0.0 && hi > lo && hi.is_finite(), "current_range", "need 0 < lo < hi")?;
        require(!params.loglog_coeffs.is_empty(), "loglog_coeffs", "need at least one coefficient")?;
        require(
            params.loglog_coeffs.iter().all(|c| c.is_finite()),
            "loglog_coeffs",
            "coefficients must be finite",
        )?;
        require(params.t_cal.is_finite(), "t_cal", "must be finite")?;
        require(params.tempco_rel.is_finite(), "tempco_rel", "must be finite")?;
        check_loglog_monotone(&params.loglog_coeffs, lo.ln(), hi.ln())?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &LedParams {
        &self.params
    }

    /// Photon rate at the SPAD for a drive current and LED temperature.
    pub fn photon_rate(&self, current: f64, t_led: f64) -> Result<f64, ModelError> {
        let (lo, hi) = self.params.current_range;
        if !(current >= lo && current <= hi) {
            return Err(ModelError::CurrentOutOfRange { current, lo, hi });
        }
        let base = poly_eval(&self.params.loglog_coeffs, current.ln()).exp();
        let temp = 1.0 + self.params.tempco_rel * (t_led - self.params.t_cal);
        Ok(base * temp.max(0.0))
    }

    /// Inverse of [`Led::photon_rate`] at the calibration temperature, by
    /// bisection on the monotone curve.
    pub fn current_for_rate(&self, rate: f64) -> Result<f64, ModelError> {
        let (lo, hi) = self.params.current_range;
        let t = self.params.t_cal;
        let (r_lo, r_hi) = (self.photon_rate(lo, t)?, self.photon_rate(hi, t)?);
        if !(rate >= r_lo && rate <= r_hi) {
            return Err(out_of_range(
                "rate",
                format!("{rate} photons/s outside [{r_lo}, {r_hi}]"),
            ));
        }
        let (mut a, mut b) = (lo.ln(), hi.ln());
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.photon_rate(m.exp(), t)? < rate {
                a = m;
            } else {
                b = m;
            }
        }
        Ok((0.5 * (a + b)).exp())
    }
}
