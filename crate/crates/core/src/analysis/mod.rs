//! Counting statistics and curve fitting shared by all scenarios.

mod fit;
mod histogram;
mod rates;
mod search;
mod snr;

pub use fit::{fit_exp_decay, fit_exponential, fit_linear, fit_polynomial_loglog, ExpDecayFit, FitResult};
pub use histogram::{interarrival_histogram, Histogram, InterarrivalHistogram};
pub use rates::{dead_time_correct, estimate_rate, predicted_measured_rate, RateEstimate};
pub use search::{golden_section_max, max_rate_search, MaxRateResult};
pub use snr::{snr_curve, snr_peak};
