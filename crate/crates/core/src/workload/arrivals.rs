//! Seeded Poisson arrival process.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::WorkloadError;
use crate::time::{TimePoint, MICROS_PER_SEC};

/// `count` arrival times whose gaps are i.i.d. exponential with mean `1/rate`
/// seconds. Timestamps are strictly increasing.
pub fn poisson_arrivals(rate: f64, count: usize, seed: u64) -> Result<Vec<TimePoint>, WorkloadError> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(WorkloadError::InvalidRate(rate));
    }
    let gaps = Exp::new(rate).map_err(|_| WorkloadError::InvalidRate(rate))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clock = 0.0f64;
    let mut last: Option<u64> = None;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        clock += gaps.sample(&mut rng);
        let mut us = (clock * MICROS_PER_SEC as f64 + 0.5).floor() as u64;
        if let Some(prev) = last {
            us = us.max(prev + 1);
        }
        last = Some(us);
        out.push(TimePoint(us));
    }
    Ok(out)
}
