//! Order-preserving parallel map over instance indices.

use crate::error::Result;

/// Evaluates `f(0..n)` and collects results in index order. `jobs = 1`
/// runs on the calling thread; `jobs = 0` uses every available core.
/// Without the `parallel` feature everything runs sequentially.
pub fn map<T, F>(jobs: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    #[cfg(feature = "parallel")]
    if jobs != 1 && n > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| crate::Error::InvalidArgument(format!("thread pool: {e}")))?;
        return pool.install(|| (0..n).into_par_iter().map(&f).collect());
    }
    let _ = jobs;
    (0..n).map(f).collect()
}
