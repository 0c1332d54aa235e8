use crate::error::AnalysisError;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimum of a unimodal function on `[a, b]`.
pub(crate) fn golden_section_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc < fd { (c, fc) } else { (d, fd) }
}

/// Golden-section maximum over `[a, b]`; returns the best probed point.
///
/// Probe errors abort the search and are returned unchanged.
pub fn golden_section_max<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> Result<(f64, f64), E> {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
            if fc > best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
            if fd > best.1 {
                best = (d, fd);
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxRateResult {
    pub intensity: f64,
    pub rate: f64,
    /// Response still rising at the top of the range.
    pub monotone: bool,
    pub evaluations: usize,
}

/// Locates the intensity giving the highest counting rate.
///
/// Searches `log10(intensity)` to within `tolerance` decades. When the
/// bracket collapses onto the upper endpoint and the endpoint is at least as
/// good as any interior probe, the response is reported as monotone and the
/// endpoint returned.
pub fn max_rate_search<E: From<AnalysisError>>(
    mut runner: impl FnMut(f64) -> Result<f64, E>,
    intensity_range: (f64, f64),
    tolerance: f64,
) -> Result<MaxRateResult, E> {
    let (lo, hi) = intensity_range;
    if !(lo > 0.0 && hi > lo) {
        return Err(AnalysisError::Domain(format!("bad intensity range [{lo}, {hi}]")).into());
    }
    let (a, b) = (lo.log10(), hi.log10());
    if b - a < 3.0 - 1e-9 {
        return Err(AnalysisError::Domain(format!("intensity range spans {:.2} decades, need 3", b - a)).into());
    }
    if tolerance <= 0.0 {
        return Err(AnalysisError::Domain("tolerance must be positive".into()).into());
    }
    let mut evaluations = 0;
    let mut probe = |u: f64| {
        evaluations += 1;
        runner(10f64.powf(u))
    };
    let (u, rate) = golden_section_max(&mut probe, a, b, tolerance)?;
    let top = probe(b)?;
    if b - u <= 2.0 * tolerance && top >= rate {
        return Ok(MaxRateResult { intensity: hi, rate: top, monotone: true, evaluations });
    }
    Ok(MaxRateResult { intensity: 10f64.powf(u), rate, monotone: false, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;

    const D: f64 = 39e-9;

    #[test]
    fn non_paralyzable_is_monotone() {
        let r = max_rate_search::<AnalysisError>(|f| Ok(f / (1.0 + f * D)), (1e3, 1e12), 1e-3).unwrap();
        assert!(r.monotone);
        assert_eq!(r.intensity, 1e12);
        assert!((r.rate * D - 1.0).abs() < 1e-4);
    }

    #[test]
    fn paralyzable_peak() {
        let tol = 1e-4;
        let r = max_rate_search::<AnalysisError>(|f| Ok(f * (-f * D).exp()), (1e4, 1e10), tol).unwrap();
        assert!(!r.monotone);
        assert!((r.intensity.log10() - (1.0 / D).log10()).abs() < 2.0 * tol);
        let peak = 1.0 / (std::f64::consts::E * D);
        assert!((r.rate - peak).abs() / peak < 1e-6);
    }

    #[test]
    fn range_and_errors() {
        assert!(max_rate_search::<AnalysisError>(Ok, (1.0, 100.0), 1e-3).is_err());
        let r = max_rate_search::<AnalysisError>(
            |f| if f > 1e5 { Err(AnalysisError::Domain("probe".into())) } else { Ok(f) },
            (1.0, 1e8),
            1e-3,
        );
        assert!(matches!(r, Err(AnalysisError::Domain(m)) if m == "probe"));
    }

    #[test]
    fn minimiser() {
        let (x, fx) = golden_section_min(|x| (x - 1.3).powi(2) + 2.0, -4.0, 9.0, 1e-9);
        assert!((x - 1.3).abs() < 1e-7 && (fx - 2.0).abs() < 1e-12);
    }
}
