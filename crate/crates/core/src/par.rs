//! Data-parallel maps over independent work items (seeds, configurations).
//!
//! Results are collected in input order, and all randomness is seeded per
//! item, so output does not depend on the execution mode or thread count.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled, otherwise
    /// runs sequentially.
    #[default]
    Parallel,
}

impl Execution {
    /// True when this mode actually runs on a thread pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `items`, stopping at the first error (in input order).
pub fn try_map<I, T, F>(exec: Execution, items: &[I], f: F) -> Result<Vec<T>>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Caps the global pool at `threads` workers. Must run before the pool is
/// first used; a no-op without the `parallel` feature.
pub fn configure_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        return Err(Error::config("thread count must be >= 1"));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    Ok(())
}
