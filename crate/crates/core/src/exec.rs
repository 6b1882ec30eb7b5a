//! Row-partitioned execution with an optional rayon backend.
//!
//! Every kernel in the crate computes each output row independently with a
//! fixed accumulation order, so the parallel and sequential paths produce
//! bitwise identical results. Without the `parallel` feature,
//! [`Exec::Parallel`] silently runs sequentially.

/// Execution strategy for row-partitioned kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when this strategy will actually fan out to worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Maps `f` over `0..n`, collecting results in index order.
pub(crate) fn map_range<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Maps `f` over contiguous chunks `[start, end)` of `0..n`. Each chunk gets a
/// fresh scratch value from `init`, which lets kernels reuse accumulators.
pub(crate) fn map_chunks<T, S, I, F>(exec: Exec, n: usize, chunk: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize, usize) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = n.div_ceil(chunk);
    map_range(exec, n_chunks, |c| {
        let start = c * chunk;
        let end = (start + chunk).min(n);
        let mut scratch = init();
        f(&mut scratch, start, end)
    })
}
