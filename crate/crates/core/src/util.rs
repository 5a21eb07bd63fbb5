//! Deterministic RNG substreams, portable samplers, and small statistics
//! helpers shared across the pipeline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Purpose tags for deriving independent substreams from one master seed.
/// Keeping every consumer on its own stream makes results independent of
/// evaluation order and worker count.
pub mod stream {
    pub const BOOTSTRAP_COLUMN: u64 = 1;
    pub const PROB_SAMPLING: u64 = 2;
    pub const SPLIT_JITTER: u64 = 3;
    pub const ARMA_NOISE: u64 = 4;
    pub const ANOMALY_MIX: u64 = 5;
}

/// Deterministic substream keyed by (seed, purpose, a, b). Same key, same
/// stream; distinct keys, statistically independent streams.
pub fn component_rng(seed: u64, purpose: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 56) | ((a & 0x00ff_ffff) << 32) | (b & 0xffff_ffff));
    rng
}

/// Standard normal draw via Box-Muller. Hand-rolled so results do not depend
/// on platform- or version-specific library samplers.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // gen::<f64>() is in [0, 1); flip to (0, 1] to keep the log finite.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Poisson draw by inversion with sequential search: exact, portable, and
/// fast for moderate rates. Larger rates split in half recursively so the
/// partial sums stay well conditioned.
pub fn poisson<R: Rng>(rng: &mut R, lambda: f64) -> u64 {
    debug_assert!(lambda.is_finite() && lambda >= 0.0);
    if lambda <= 0.0 {
        return 0;
    }
    if lambda > 30.0 {
        let half = lambda / 2.0;
        return poisson(rng, half) + poisson(rng, half);
    }
    let u: f64 = rng.gen();
    let mut k: u64 = 0;
    let mut pmf = (-lambda).exp();
    let mut cdf = pmf;
    // cdf -> 1 well before this bound; it only guards the u ~ 1 edge.
    let cap = (lambda + 10.0 * lambda.sqrt() + 50.0) as u64;
    while u > cdf && k < cap {
        k += 1;
        pmf *= lambda / k as f64;
        cdf += pmf;
    }
    k
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divides by N, not N-1).
pub fn population_variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Linear-interpolation percentile of already-sorted data, q in [0, 1].
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Integer ceiling of `alpha * n` that tolerates float dust just above an
/// exact integer (0.8 * 500 must give 400, not 401).
pub fn ceil_frac(alpha: f64, n: usize) -> usize {
    let t = alpha * n as f64;
    ((t - 1e-9).ceil().max(1.0)) as usize
}
