//! Deterministic work partitioning over sample indices.
//!
//! Samples are grouped into fixed-size chunks independent of the number of
//! worker threads, so per-chunk reductions (and therefore every result)
//! are identical whatever the pool size.

/// Samples per chunk; the unit of deterministic reduction.
pub const CHUNK: usize = 32;

/// Applies `f` to every chunk `[start, end)` of `0..n` and returns the
/// results in chunk order.
pub fn map_chunks<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync + Send,
{
    let chunks: Vec<(usize, usize)> = (0..n)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(n)))
        .collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        chunks.into_par_iter().map(|(s, e)| f(s, e)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        chunks.into_iter().map(|(s, e)| f(s, e)).collect()
    }
}

/// Runs `f` on a dedicated pool of `workers` threads (0 = library default).
#[cfg(feature = "parallel")]
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<R: Send>(_workers: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}
