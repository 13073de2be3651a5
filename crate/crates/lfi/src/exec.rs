//! Data-parallel execution with a sequential fallback.
//!
//! All fan-out in the crate (replicates, calibration pools, inner
//! simulation batches, quadratic distance kernels) goes through
//! [`par_map_indexed`]. With the `parallel` feature enabled the closure runs
//! on the rayon thread pool; without it the loop is sequential. Results are
//! collected in index order either way, so output is identical in both
//! builds whenever the closure is a pure function of its index.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to every index in `0..n` and returns the results in index
/// order.
pub fn par_map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential variant of [`par_map_indexed`], kept available in all builds
/// so benchmarks can compare the two execution paths directly.
pub fn seq_map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
