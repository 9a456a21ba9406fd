//! Poisson subsampling and scalar clipping.

use crate::rng::Rng;

/// Includes each index in `0..n` independently with probability `p`.
///
/// One stream word is consumed per index, in ascending order, so the result
/// is sorted and the stream position after the call is always `n`. The
/// batch may be empty.
pub fn poisson_sample(n: usize, p: f64, rng: &mut Rng) -> Vec<usize> {
    let p = p.clamp(0.0, 1.0);
    let mut batch = Vec::with_capacity(((n as f64) * p * 1.2) as usize + 4);
    for i in 0..n {
        if rng.unit() < p {
            batch.push(i);
        }
    }
    batch
}

/// Clamps `v` into `[-c, c]`. An infinite `c` disables clipping.
#[inline]
pub fn clip_scalar(v: f64, c: f64) -> f64 {
    debug_assert!(c > 0.0);
    v.clamp(-c, c)
}
