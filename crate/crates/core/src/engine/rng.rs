//! Seeded random substreams.
//!
//! Each stream is a ChaCha8 generator keyed by the run seed and selected by a
//! fixed stream id, so consumption in one stream never shifts another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Ps;

const PHOTON_STREAM: u64 = 0x5048_4f54; // "PHOT"
const DARK_STREAM: u64 = 0x4441_524b; // "DARK"
const THINNING_STREAM: u64 = 0x5448_494e; // "THIN"
const AFTERPULSE_STREAM: u64 = 0x4146_5452; // "AFTR"

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Independent generators for the four stochastic inputs of a run.
#[derive(Debug, Clone)]
pub struct RngStreams {
    pub photon: ChaCha8Rng,
    pub dark: ChaCha8Rng,
    pub thinning: ChaCha8Rng,
    pub afterpulse: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            photon: stream(seed, PHOTON_STREAM),
            dark: stream(seed, DARK_STREAM),
            thinning: stream(seed, THINNING_STREAM),
            afterpulse: stream(seed, AFTERPULSE_STREAM),
        }
    }
}

/// Exponential inter-arrival gap for a Poisson stream of `rate` Hz, rounded
/// to whole picoseconds and never shorter than 1 ps.
///
/// `rate` must be positive; a stream with zero rate is suspended by the
/// caller instead of sampled.
pub fn next_poisson_gap<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> Ps {
    debug_assert!(rate > 0.0);
    let u: f64 = rng.random();
    let secs = -(-u).ln_1p() / rate;
    let ps = (secs * 1e12).round();
    if ps < 1.0 {
        1
    } else if ps >= u64::MAX as f64 {
        u64::MAX
    } else {
        ps as Ps
    }
}

/// Mixes a base seed with a sweep-point index (splitmix64 finaliser) so that
/// every point of a sweep gets its own, worker-count independent seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(rng: &mut ChaCha8Rng, n: usize) -> Vec<u64> {
        (0..n).map(|_| rng.random::<u64>()).collect()
    }

    #[test]
    fn same_seed_same_streams() {
        let mut a = RngStreams::new(7);
        let mut b = RngStreams::new(7);
        assert_eq!(draws(&mut a.photon, 32), draws(&mut b.photon, 32));
        assert_eq!(draws(&mut a.dark, 32), draws(&mut b.dark, 32));
        assert_eq!(draws(&mut a.thinning, 32), draws(&mut b.thinning, 32));
        assert_eq!(draws(&mut a.afterpulse, 32), draws(&mut b.afterpulse, 32));
    }

    #[test]
    fn different_seeds_differ_early() {
        let mut a = RngStreams::new(1);
        let mut b = RngStreams::new(2);
        let da = draws(&mut a.photon, 16);
        let db = draws(&mut b.photon, 16);
        assert!(da.iter().zip(&db).any(|(x, y)| x != y));
    }

    #[test]
    fn streams_are_independent() {
        let mut a = RngStreams::new(99);
        let mut b = RngStreams::new(99);
        for _ in 0..1_000_000 {
            let _: f64 = a.thinning.random();
        }
        assert_eq!(draws(&mut a.dark, 64), draws(&mut b.dark, 64));
        assert_ne!(draws(&mut a.photon, 4), draws(&mut a.dark, 4));
    }

    #[test]
    fn gap_floor_is_one_picosecond() {
        // A generator whose first f64 draw is 0.0.
        struct Zero;
        impl rand::RngCore for Zero {
            fn next_u32(&mut self) -> u32 {
                0
            }
            fn next_u64(&mut self) -> u64 {
                0
            }
            fn fill_bytes(&mut self, dst: &mut [u8]) {
                dst.fill(0)
            }
        }
        assert_eq!(next_poisson_gap(&mut Zero, 1e6), 1);
    }

    #[test]
    fn gap_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let gaps: Vec<f64> = (0..n).map(|_| next_poisson_gap(&mut rng, 1e6) as f64).collect();
        let mean = gaps.iter().sum::<f64>() / n as f64;
        let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean / 1e6 - 1.0).abs() < 0.003, "mean {mean}");
        let ratio = var / (mean * mean);
        assert!((0.99..=1.01).contains(&ratio), "var/mean^2 {ratio}");
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(derive_seed(42, 3), derive_seed(42, 3));
    }
}
