use nalgebra::{DMatrix, DVector};

use crate::device::check_loglog_monotone;
use crate::error::AnalysisError;

use super::search::golden_section_min;

/// Least-squares result. Coefficient order is documented per fitter.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    /// One-sigma errors from the residual variance; empty when not computed,
    /// zero-filled when the fit has no residual degrees of freedom.
    pub std_errors: Vec<f64>,
    pub rss: f64,
    pub r_squared: f64,
}

fn r_squared(ys: &[f64], rss: f64) -> f64 {
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let tss: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    if tss == 0.0 {
        if rss == 0.0 { 1.0 } else { f64::NEG_INFINITY }
    } else {
        1.0 - rss / tss
    }
}

fn check_lengths(xs: &[f64], ys: &[f64], min: usize) -> Result<(), AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::Domain(format!("{} x values but {} y values", xs.len(), ys.len())));
    }
    if xs.len() < min {
        return Err(AnalysisError::Rank(format!("need at least {min} points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(AnalysisError::Domain("non-finite input".into()));
    }
    Ok(())
}

/// Straight line `y = c0 + c1 x`; coefficients `[intercept, slope]`.
pub fn fit_linear(xs: &[f64], ys: &[f64]) -> Result<FitResult, AnalysisError> {
    check_lengths(xs, ys, 2)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0).powi(2) * n {
        return Err(AnalysisError::Rank("all x values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let std_errors = if xs.len() > 2 {
        let s2 = rss / (n - 2.0);
        vec![(s2 * (1.0 / n + mx * mx / sxx)).sqrt(), (s2 / sxx).sqrt()]
    } else {
        vec![0.0, 0.0]
    };
    Ok(FitResult {
        coefficients: vec![intercept, slope],
        std_errors,
        rss,
        r_squared: r_squared(ys, rss),
    })
}

/// `y = a exp(b x)` via a line through `(x, ln y)`; coefficients `[a, b]`.
///
/// `rss` and `r_squared` refer to the log-space fit, `std_errors` to
/// `[ln a, b]`.
pub fn fit_exponential(xs: &[f64], ys: &[f64]) -> Result<FitResult, AnalysisError> {
    check_lengths(xs, ys, 2)?;
    if let Some(y) = ys.iter().find(|&&y| y <= 0.0) {
        return Err(AnalysisError::Domain(format!("exponential fit needs y > 0, got {y}")));
    }
    let logs: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mut fit = fit_linear(xs, &logs)?;
    fit.coefficients[0] = fit.coefficients[0].exp();
    Ok(fit)
}

/// Polynomial in `ln I -> ln rate`; coefficients ascending in powers of `ln I`.
///
/// Solved in centred, scaled coordinates and expanded afterwards. Fits that
/// are not strictly increasing over the input range are rejected.
pub fn fit_polynomial_loglog(currents: &[f64], rates: &[f64], degree: usize) -> Result<FitResult, AnalysisError> {
    check_lengths(currents, rates, degree + 1)?;
    if degree == 0 {
        return Err(AnalysisError::Domain("degree must be at least 1".into()));
    }
    if currents.iter().chain(rates).any(|&v| v <= 0.0) {
        return Err(AnalysisError::Domain("log-log fit needs positive inputs".into()));
    }
    let lx: Vec<f64> = currents.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = rates.iter().map(|v| v.ln()).collect();
    let (lo, hi) = lx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let m = 0.5 * (lo + hi);
    let s = 0.5 * (hi - lo);
    if s <= 0.0 {
        return Err(AnalysisError::Rank("all currents coincide".into()));
    }
    let n = lx.len();
    let a = DMatrix::from_fn(n, degree + 1, |i, k| ((lx[i] - m) / s).powi(k as i32));
    let b = DVector::from_column_slice(&ly);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.rank(smax * 1e-12) < degree + 1 {
        return Err(AnalysisError::Rank(format!("design matrix rank deficient for degree {degree}")));
    }
    let d = svd
        .solve(&b, smax * 1e-14)
        .map_err(|e| AnalysisError::Rank(e.to_string()))?;
    let rss = (&a * &d - &b).norm_squared();

    // expand sum_k d_k ((x - m)/s)^k into powers of x
    let mut c = vec![0.0; degree + 1];
    for (k, dk) in d.iter().enumerate() {
        let scale = dk / s.powi(k as i32);
        let mut binom = 1.0;
        for j in 0..=k {
            c[j] += scale * binom * (-m).powi((k - j) as i32);
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
    }
    check_loglog_monotone(&c, lo, hi).map_err(|e| AnalysisError::Calibration(e.to_string()))?;
    Ok(FitResult {
        coefficients: c,
        std_errors: Vec::new(),
        rss,
        r_squared: r_squared(&ly, rss),
    })
}

/// `y = offset + amplitude exp(-t / tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpDecayFit {
    pub offset: f64,
    pub amplitude: f64,
    pub tau: f64,
    pub rss: f64,
}

fn decay_given_tau(ts: &[f64], ys: &[f64], tau: f64) -> (f64, f64, f64) {
    let n = ts.len() as f64;
    let e: Vec<f64> = ts.iter().map(|t| (-t / tau).exp()).collect();
    let me = e.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let see: f64 = e.iter().map(|v| (v - me).powi(2)).sum();
    let sey: f64 = e.iter().zip(ys).map(|(v, y)| (v - me) * (y - my)).sum();
    let amp = if see > 0.0 { sey / see } else { 0.0 };
    let off = my - amp * me;
    let rss = e.iter().zip(ys).map(|(v, y)| (y - off - amp * v).powi(2)).sum();
    (off, amp, rss)
}

/// Three-parameter decay fit: linear in offset/amplitude, golden-section in
/// `ln tau` over `tau_range`.
pub fn fit_exp_decay(ts: &[f64], ys: &[f64], tau_range: (f64, f64)) -> Result<ExpDecayFit, AnalysisError> {
    check_lengths(ts, ys, 3)?;
    let (lo, hi) = tau_range;
    if !(lo > 0.0 && hi > lo) {
        return Err(AnalysisError::Domain(format!("bad tau range [{lo}, {hi}]")));
    }
    let (u, _) = golden_section_min(|u| decay_given_tau(ts, ys, u.exp()).2, lo.ln(), hi.ln(), 1e-7);
    let tau = u.exp();
    let (offset, amplitude, rss) = decay_given_tau(ts, ys, tau);
    Ok(ExpDecayFit { offset, amplitude, tau, rss })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn linear_exact() {
        let xs: Vec<f64> = (0..8).map(|i| -25.0 + 5.0 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|t| 225.0 + 0.655 * (t - 21.0)).collect();
        let f = fit_linear(&xs, &ys).unwrap();
        assert!((f.coefficients[1] - 0.655).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_two_points_and_rank() {
        let f = fit_linear(&[1.0, 3.0], &[2.0, 8.0]).unwrap();
        assert_eq!(f.coefficients, vec![-1.0, 3.0]);
        assert_eq!(f.rss, 0.0);
        assert!(matches!(fit_linear(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]), Err(AnalysisError::Rank(_))));
        assert!(fit_linear(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn linear_noisy_regression_oracle() {
        // slope lies within 3 fitted standard errors in at least 99% of trials
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let mut inside = 0;
        let mut se_ratio = 0.0;
        for _ in 0..400 {
            let ys: Vec<f64> = xs.iter().map(|x| 1.5 + 0.7 * x + noise.sample(&mut rng)).collect();
            let f = fit_linear(&xs, &ys).unwrap();
            if (f.coefficients[1] - 0.7).abs() < 3.0 * f.std_errors[1] {
                inside += 1;
            }
            let sxx: f64 = xs.iter().map(|x| (x - 4.875f64).powi(2)).sum();
            se_ratio += f.std_errors[1] / (0.3 / sxx.sqrt()) / 400.0;
        }
        assert!(inside >= 392, "{inside}/400");
        assert!((se_ratio - 1.0).abs() < 0.05, "{se_ratio}");
    }

    #[test]
    fn exponential_doubling() {
        let t_double = 8.0;
        let xs: Vec<f64> = (0..11).map(|i| -30.0 + 5.0 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|t| 2e4 * 2f64.powf((t - 20.0) / t_double)).collect();
        let f = fit_exponential(&xs, &ys).unwrap();
        assert!((f.coefficients[1] - std::f64::consts::LN_2 / t_double).abs() < 1e-10);
        let decade: Vec<f64> = (0..10).map(|i| (i as f64 * 0.25).exp()).collect();
        let xs2: Vec<f64> = (0..10).map(|i| i as f64 * 0.25).collect();
        assert!((fit_exponential(&xs2, &decade).unwrap().r_squared - 1.0).abs() < 1e-12);
        assert!(matches!(fit_exponential(&[0.0, 1.0], &[1.0, 0.0]), Err(AnalysisError::Domain(_))));
    }

    #[test]
    fn loglog_power_law() {
        let cur: Vec<f64> = (0..25).map(|i| 0.02e-6 * 10f64.powf(i as f64 / 6.0)).collect();
        let rate: Vec<f64> = cur.iter().map(|i| 3e12 * i.powf(0.9)).collect();
        let f1 = fit_polynomial_loglog(&cur, &rate, 1).unwrap();
        assert!((f1.coefficients[0] - 3e12f64.ln()).abs() < 1e-10);
        assert!((f1.coefficients[1] - 0.9).abs() < 1e-10);
        let f3 = fit_polynomial_loglog(&cur, &rate, 3).unwrap();
        assert!(f3.coefficients[2].abs() < 1e-8 && f3.coefficients[3].abs() < 1e-8, "{:?}", f3.coefficients);
    }

    #[test]
    fn loglog_saturating_refit() {
        // generate from a mildly saturating law, refit with degree 3
        let truth = |i: f64| 5e12 * i / (1.0 + i / 10e-3);
        let cur: Vec<f64> = (0..40).map(|k| 0.02e-6 * 10f64.powf(k as f64 * 4.0 / 39.0)).collect();
        let rate: Vec<f64> = cur.iter().map(|&i| truth(i)).collect();
        let f = fit_polynomial_loglog(&cur, &rate, 3).unwrap();
        for k in 0..200 {
            let i = 0.02e-6 * 10f64.powf(k as f64 * 4.0 / 199.0);
            let li = i.ln();
            let lr: f64 = f.coefficients.iter().enumerate().map(|(p, c)| c * li.powi(p as i32)).sum();
            assert!((lr.exp() / truth(i) - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn loglog_rejects_non_monotone() {
        let cur = [1e-6, 2e-6, 4e-6, 8e-6, 16e-6];
        let rate = [1e5, 3e5, 5e5, 3e5, 1e5];
        assert!(matches!(fit_polynomial_loglog(&cur, &rate, 2), Err(AnalysisError::Calibration(_))));
        assert!(fit_polynomial_loglog(&cur, &rate, 0).is_err());
        assert!(fit_polynomial_loglog(&cur[..2], &rate[..2], 2).is_err());
    }

    #[test]
    fn decay_recovers_parameters() {
        let ts: Vec<f64> = (0..500).map(|i| i as f64 * 0.01).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 5.0e6 + 1.2e5 * (-t / 2.0f64).exp()).collect();
        let f = fit_exp_decay(&ts, &ys, (0.05, 50.0)).unwrap();
        assert!((f.tau - 2.0).abs() < 1e-4, "{}", f.tau);
        assert!((f.amplitude - 1.2e5).abs() / 1.2e5 < 1e-4);
        assert!((f.offset - 5.0e6).abs() < 1.0);
    }
}
