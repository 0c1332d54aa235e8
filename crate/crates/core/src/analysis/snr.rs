use crate::error::AnalysisError;

/// Dark-subtracted SNR `(signal - dark) / dark`, normalised to 1 at `v_norm`.
///
/// `points` are `(v_over, signal_rate, dark_rate)`; `signal_rate` is the
/// illuminated reading including dark counts.
pub fn snr_curve(points: &[(f64, f64, f64)], v_norm: f64) -> Result<Vec<(f64, f64)>, AnalysisError> {
    if let Some(p) = points.iter().find(|p| p.2 <= 0.0) {
        return Err(AnalysisError::ZeroDark(p.0));
    }
    let raw: Vec<(f64, f64)> = points.iter().map(|&(v, s, d)| (v, (s - d) / d)).collect();
    let norm = raw
        .iter()
        .find(|p| (p.0 - v_norm).abs() < 1e-9)
        .ok_or_else(|| AnalysisError::Domain(format!("no point at normalisation voltage {v_norm} V")))?
        .1;
    if norm == 0.0 {
        return Err(AnalysisError::Domain(format!("snr vanishes at normalisation voltage {v_norm} V")));
    }
    Ok(raw.into_iter().map(|(v, s)| (v, s / norm)).collect())
}

/// Location of the curve maximum, refined by a least-squares parabola over
/// the grid maximum and up to `half_width` neighbours on each side.
///
/// Returns `None` if the grid maximum sits on either end of the curve.
pub fn snr_peak(curve: &[(f64, f64)], half_width: usize) -> Option<f64> {
    let (k, _) = curve
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))?;
    if k == 0 || k + 1 == curve.len() {
        return None;
    }
    let lo = k.saturating_sub(half_width.max(1));
    let hi = (k + half_width.max(1)).min(curve.len() - 1);
    let win = &curve[lo..=hi];
    let vk = curve[k].0;
    if win.len() < 3 {
        return Some(vk);
    }
    // quadratic y = a + b dv + c dv^2 via normal equations in dv = v - vk
    let mut m = nalgebra::Matrix3::<f64>::zeros();
    let mut r = nalgebra::Vector3::<f64>::zeros();
    for &(v, y) in win {
        let row = nalgebra::Vector3::new(1.0, v - vk, (v - vk).powi(2));
        m += row * row.transpose();
        r += row * y;
    }
    let vertex = match m.lu().solve(&r) {
        Some(c) if c[2] < 0.0 => vk - c[1] / (2.0 * c[2]),
        _ => vk,
    };
    Some(vertex.clamp(win[0].0, win[win.len() - 1].0))
}
