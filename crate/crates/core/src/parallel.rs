use rayon::prelude::*;

use crate::error::{Error, Result};

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Run `f` inside a pool of `threads` workers so that nested
/// [`ordered_map`] calls share it instead of building their own.
pub fn with_threads<R, F>(threads: usize, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> Result<R> + Send,
{
    if threads <= 1 {
        return f();
    }
    pool(threads)?.install(f)
}

/// Evaluate `f(0..n)` on up to `threads` workers and return the results in
/// index order. The output does not depend on the thread count.
pub fn ordered_map<T, F>(threads: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if threads <= 1 {
        return (0..n).map(f).collect();
    }
    if rayon::current_thread_index().is_some() {
        return (0..n).into_par_iter().map(&f).collect();
    }
    pool(threads)?.install(|| (0..n).into_par_iter().map(&f).collect())
}
