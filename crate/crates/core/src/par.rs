//! Data-parallel helpers.
//!
//! With the `parallel` feature the maps run on the rayon pool; without it they
//! are plain loops. Results are always collected in index order and every
//! reduction is done sequentially afterwards, so the output is bit-identical
//! in both modes.

use std::cell::Cell;

/// Smallest number of consecutive items handed to one worker.
#[cfg(feature = "parallel")]
const MIN_CHUNK: usize = 32;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with the parallel paths disabled on the current thread.
pub fn sequential<T>(f: impl FnOnce() -> T) -> T {
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|c| c.set(prev));
    out
}

/// True when calls from this thread would use the thread pool.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(|c| c.get())
}

/// `(0..n).map(f).collect()`, possibly in parallel, for cheap per-item work.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() && n > 1 {
            use rayon::prelude::*;
            return (0..n).into_par_iter().with_min_len(MIN_CHUNK).map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// `items.iter().map(f).collect()`, possibly in parallel. Meant for few,
/// expensive items, so every item may go to its own worker.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() && items.len() > 1 {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}
