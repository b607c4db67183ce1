//! Data-parallel execution over independent work items.
//!
//! Work is always split into the same items regardless of mode, and results
//! come back in item order, so sequential and parallel runs reduce in the
//! same order and agree bit for bit.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    Sequential,
    /// Rayon work stealing; identical to `Sequential` when the `parallel`
    /// feature is disabled.
    #[default]
    Parallel,
}

impl ExecMode {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }

    /// Maps `f` over `0..n`, returning results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Maps `f` over mutable items, returning results in item order.
    pub fn map_mut<I, T, F>(self, items: &mut [I], f: F) -> Vec<T>
    where
        I: Send,
        T: Send,
        F: Fn(usize, &mut I) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items
                .par_iter_mut()
                .enumerate()
                .map(|(i, item)| f(i, item))
                .collect();
        }
        items.iter_mut().enumerate().map(|(i, item)| f(i, item)).collect()
    }
}

/// Sizes the global rayon pool. Returns false if it was already initialised
/// or parallelism is compiled out.
pub fn set_global_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}
