//! Execution-mode switch for the data-parallel loops.
//!
//! With the `parallel` feature the loops run on the rayon pool unless the
//! mode is set to [`ExecutionMode::Sequential`]; without it they always run
//! sequentially. Results are always collected in index order, so output does
//! not depend on the mode or the thread count.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecutionMode {
    Sequential,
    Parallel,
}

static MODE: AtomicU8 = AtomicU8::new(1);

pub fn set_execution_mode(mode: ExecutionMode) {
    MODE.store(matches!(mode, ExecutionMode::Parallel) as u8, Ordering::SeqCst);
}

/// Mode actually in effect (always sequential without the `parallel` feature).
pub fn execution_mode() -> ExecutionMode {
    if cfg!(feature = "parallel") && MODE.load(Ordering::SeqCst) == 1 {
        ExecutionMode::Parallel
    } else {
        ExecutionMode::Sequential
    }
}

/// Sizes the global worker pool. Must run before the first parallel loop;
/// without the `parallel` feature it only validates `threads`.
pub fn set_thread_count(threads: usize) -> crate::Result<()> {
    if threads == 0 {
        return Err(crate::Error::invalid("thread count must be >= 1"));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| crate::Error::invalid(format!("worker pool: {e}")))?;
    Ok(())
}

/// `(0..n).map(f)` collected in order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if execution_mode() == ExecutionMode::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Splits `0..total` into chunks of at most `chunk` items and maps each
/// `(start, len)` chunk, preserving order.
pub fn map_chunks<T, F>(total: u64, chunk: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = total.div_ceil(chunk) as usize;
    map_indexed(count, |i| {
        let start = i as u64 * chunk;
        f(start, chunk.min(total - start))
    })
}
