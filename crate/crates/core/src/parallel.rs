//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) the indexed maps run on rayon.
//! Without it every call degrades to a plain iterator. Results are always
//! collected in index order, so any reduction done afterwards is independent
//! of the number of workers.

/// How a batch of independent jobs is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

/// Returns true when the crate was built with rayon support.
pub fn is_parallel_available() -> bool {
    cfg!(feature = "parallel")
}

/// Sequential indexed map.
pub fn map_indexed_seq<U, F>(count: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..count).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_indexed_par<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed_par<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    map_indexed_seq(count, f)
}

/// Indexed map dispatched on `mode`.
pub fn map_indexed<U, F>(mode: Execution, count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    match mode {
        Execution::Parallel => map_indexed_par(count, f),
        Execution::Sequential => map_indexed_seq(count, f),
    }
}

/// Runs `f` with at most `jobs` worker threads. `None` uses rayon's default
/// (all available cores).
#[cfg(feature = "parallel")]
pub fn with_jobs<R, F>(jobs: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match jobs {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_jobs<R, F>(_jobs: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    f()
}
