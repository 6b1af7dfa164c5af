//! Bounded worker pools.
//!
//! Every parallel section in the crate writes results into index-ordered
//! slots, so the worker count never changes an output.

/// Runs `f` inside a pool of `jobs` workers. `jobs == 0` uses rayon's
/// global pool; `jobs == 1` runs on a single worker thread.
pub fn with_jobs<R, F>(jobs: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    if jobs == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("could not build a {jobs}-thread pool ({e}); using the global pool");
            f()
        }
    }
}
