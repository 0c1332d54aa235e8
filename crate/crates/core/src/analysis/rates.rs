use crate::engine::PulseRecord;
use crate::error::AnalysisError;
use crate::{ps_from_secs, Ps};

/// Non-paralysable counter response: `f_dark + f_true / (1 + f_true d)`.
pub fn predicted_measured_rate(f_true: f64, f_dark: f64, d: f64) -> f64 {
    f_dark + f_true / (1.0 + f_true * d)
}

/// Inverts the counter response: `(f_meas - f_dark) / (1 - f_meas d)`.
///
/// This is the exact inverse of [`predicted_measured_rate`] only when
/// `f_dark = 0`. With dark counts the round trip returns
/// `f / (1 - f_dark d (1 + f d))` instead of `f`.
pub fn dead_time_correct(f_meas: f64, f_dark: f64, d: f64) -> Result<f64, AnalysisError> {
    let load = f_meas * d;
    if load >= 1.0 {
        return Err(AnalysisError::Saturated(load));
    }
    if f_meas < f_dark {
        return Err(AnalysisError::NegativeSignal { f_meas, f_dark });
    }
    Ok((f_meas - f_dark) / (1.0 - load))
}

/// Counter reading over a time window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub rate: f64,
    /// Poisson error `sqrt(n) / window`.
    pub std_error: f64,
    pub n_pulses: u64,
    pub window: f64,
}

impl RateEstimate {
    /// Counts sorted pulse times in the half-open window `[lo, hi)` (seconds).
    pub fn from_pulses(pulses: &[Ps], window: (f64, f64)) -> Result<Self, AnalysisError> {
        let (lo, hi) = window;
        if !(hi > lo && lo >= 0.0 && hi.is_finite()) {
            return Err(AnalysisError::Domain(format!("empty or invalid window [{lo}, {hi})")));
        }
        let (a, b) = (ps_from_secs(lo), ps_from_secs(hi));
        let n = (pulses.partition_point(|&p| p < b) - pulses.partition_point(|&p| p < a)) as u64;
        let width = hi - lo;
        Ok(Self {
            rate: n as f64 / width,
            std_error: (n as f64).sqrt() / width,
            n_pulses: n,
            window: width,
        })
    }
}

/// Rate estimate over a window that must lie inside the run.
pub fn estimate_rate(rec: &PulseRecord, window: (f64, f64)) -> Result<RateEstimate, AnalysisError> {
    if window.1 > rec.duration_secs() * (1.0 + 1e-12) {
        return Err(AnalysisError::Domain(format!(
            "window end {} s beyond run duration {} s",
            window.1,
            rec.duration_secs()
        )));
    }
    RateEstimate::from_pulses(&rec.pulses, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const D: f64 = 39e-9;

    #[test]
    fn response_examples() {
        assert_eq!(predicted_measured_rate(0.0, 123.0, D), 123.0);
        assert!((predicted_measured_rate(1e7, 0.0, D) - 7_194_244.6).abs() < 0.1);
        assert!((predicted_measured_rate(1e15, 0.0, D) - 1.0 / D).abs() / (1.0 / D) < 1e-6);
        assert!((1.0 / D - 25_641_025.6).abs() < 0.1);
    }

    #[test]
    fn correction_examples() {
        assert_eq!(dead_time_correct(500.0, 500.0, D).unwrap(), 0.0);
        let f = dead_time_correct(7_194_245.0, 0.0, D).unwrap();
        assert!((f / 1e7 - 1.0).abs() < 1e-6);
        for f in [1e3, 1e6, 2e7] {
            let back = dead_time_correct(predicted_measured_rate(f, 0.0, D), 0.0, D).unwrap();
            assert!((back / f - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn correction_errors() {
        assert!(matches!(dead_time_correct(1.0 / D, 0.0, D), Err(AnalysisError::Saturated(_))));
        assert!(matches!(
            dead_time_correct(10.0, 20.0, D),
            Err(AnalysisError::NegativeSignal { .. })
        ));
    }

    #[test]
    fn dark_round_trip_residual() {
        let (f, fd) = (5e6, 2e4);
        let back = dead_time_correct(predicted_measured_rate(f, fd, D), fd, D).unwrap();
        let documented = f / (1.0 - fd * D * (1.0 + f * D));
        assert!((back / documented - 1.0).abs() < 1e-12);
        assert!(back > f);
    }

    #[test]
    fn estimate_examples() {
        let none = RateEstimate::from_pulses(&[], (0.0, 1.0)).unwrap();
        assert_eq!(none.rate, 0.0);
        let pulses: Vec<Ps> = (0..10_000).map(|i| i * 100_000_000).collect();
        let e = RateEstimate::from_pulses(&pulses, (0.0, 1.0)).unwrap();
        assert_eq!(e.rate, 10_000.0);
        assert_eq!(e.std_error, 100.0);
        let a = RateEstimate::from_pulses(&pulses, (0.0, 0.5)).unwrap();
        let b = RateEstimate::from_pulses(&pulses, (0.5, 1.0)).unwrap();
        assert_eq!(a.n_pulses + b.n_pulses, e.n_pulses);
        assert!(((a.rate + b.rate) / 2.0 - e.rate).abs() <= (a.std_error + b.std_error));
        assert!(RateEstimate::from_pulses(&pulses, (0.3, 0.3)).is_err());
    }

    proptest! {
        #[test]
        fn zero_dark_round_trip(log_f in 0.0f64..6.0) {
            let f = 10f64.powf(log_f) * 1e2; // 1e2 .. 1e8
            let m = predicted_measured_rate(f, 0.0, D);
            prop_assert!(m < 1.0 / D);
            let back = dead_time_correct(m, 0.0, D).unwrap();
            prop_assert!((back / f - 1.0).abs() < 1e-12);
            let fwd = predicted_measured_rate(dead_time_correct(m, 0.0, D).unwrap(), 0.0, D);
            prop_assert!((fwd / m - 1.0).abs() < 1e-12);
        }

        #[test]
        fn response_monotone_and_bounded(a in 0.0f64..1e9, b in 0.0f64..1e9, fd in 0.0f64..1e5) {
            let (lo, hi) = (a.min(b), a.max(b));
            let (ml, mh) = (predicted_measured_rate(lo, fd, D), predicted_measured_rate(hi, fd, D));
            prop_assert!(ml <= mh);
            if hi > lo { prop_assert!(ml < mh || (mh - ml).abs() < 1e-6 * mh); }
            prop_assert!(mh < fd + 1.0 / D);
        }
    }
}
