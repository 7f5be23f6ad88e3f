//! Deterministic parallel helpers.
//!
//! Reductions split the index range into fixed-size chunks and add the
//! partial sums in chunk order, so results do not depend on the number of
//! worker threads.

use std::ops::Range;

use rayon::prelude::*;

pub(crate) const CHUNK: usize = 1 << 14;

/// Sums `f(range)` over fixed chunks of `0..len`.
pub(crate) fn chunked_sum<T, F>(len: usize, f: F) -> T
where
    T: Send + Copy + std::iter::Sum<T> + std::ops::Add<Output = T> + Default,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let chunks = len.div_ceil(CHUNK);
    let partials: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(len)))
        .collect();
    partials.into_iter().fold(T::default(), |a, b| a + b)
}

/// Configures the global worker pool from `PEKARLAB_THREADS` (0 or unset = automatic).
///
/// Returns the thread count in use. Calling it more than once is harmless.
pub fn configure_threads_from_env() -> usize {
    let requested = std::env::var("PEKARLAB_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .unwrap_or(0);
    if requested > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(requested)
            .build_global();
    }
    rayon::current_num_threads()
}
