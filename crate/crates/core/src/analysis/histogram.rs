use crate::error::AnalysisError;
use crate::Ps;

/// Fixed-width histogram with half-open bins `[lo + k w, lo + (k+1) w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bin_width: f64) -> Result<Self, AnalysisError> {
        if !(bin_width > 0.0 && hi > lo && bin_width.is_finite()) {
            return Err(AnalysisError::Domain(format!(
                "histogram needs bin_width > 0 and hi > lo, got [{lo}, {hi}) / {bin_width}"
            )));
        }
        let n = ((hi - lo) / bin_width).ceil() as usize;
        Ok(Self {
            lo,
            bin_width,
            counts: vec![0; n],
            underflow: 0,
            overflow: 0,
        })
    }

    pub fn fill(&mut self, x: f64) {
        if x < self.lo {
            self.underflow += 1;
            return;
        }
        let k = ((x - self.lo) / self.bin_width).floor() as usize;
        match self.counts.get_mut(k) {
            Some(c) => *c += 1,
            None => self.overflow += 1,
        }
    }

    pub fn bin_start(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.bin_width
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }
}

/// Histogram of successive pulse gaps with the exact minimum gap.
#[derive(Debug, Clone, PartialEq)]
pub struct InterarrivalHistogram {
    pub hist: Histogram,
    /// `None` when fewer than two pulses were supplied.
    pub min_gap: Option<Ps>,
    pub n_gaps: u64,
}

/// Bins the gaps between consecutive pulses in `[0, t_max)`.
///
/// Binning is done in integer picoseconds so that a gap equal to a bin edge
/// always lands in the upper bin.
pub fn interarrival_histogram(pulses: &[Ps], bin_width: f64, t_max: f64) -> Result<InterarrivalHistogram, AnalysisError> {
    let mut hist = Histogram::new(0.0, t_max, bin_width)?;
    let width_ps = (bin_width * 1e12).round() as u64;
    if width_ps == 0 {
        return Err(AnalysisError::Domain("bin width below 1 ps".into()));
    }
    let mut min_gap = None;
    let mut n_gaps = 0;
    for w in pulses.windows(2) {
        let gap = w[1].saturating_sub(w[0]);
        n_gaps += 1;
        min_gap = Some(min_gap.map_or(gap, |m: Ps| m.min(gap)));
        match hist.counts.get_mut((gap / width_ps) as usize) {
            Some(c) => *c += 1,
            None => hist.overflow += 1,
        }
    }
    Ok(InterarrivalHistogram { hist, min_gap, n_gaps })
}
