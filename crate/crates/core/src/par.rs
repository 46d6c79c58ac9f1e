//! Execution-mode switch between data-parallel and sequential processing.
//!
//! The `parallel` cargo feature compiles the rayon-backed paths; this module
//! picks between them at runtime. Deterministic pipelines run sequentially
//! even when the feature is enabled, because reproducible node logs and
//! byte-identical reports require a fixed processing order. Builds without
//! the feature always run sequentially and carry no rayon dependency.

/// How batched work (node evaluation, enumeration, experiment legs) runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    /// Fixed-order, single-threaded processing. Required for deterministic
    /// runs; the only mode available without the `parallel` feature.
    Sequential,
    /// Rayon work-stealing execution. Results are reduced order-independently
    /// where used, but processing order (and e.g. branch-and-bound tree
    /// shape) may vary between runs.
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

impl ExecMode {
    /// Whether this mode actually executes in parallel in this build (the
    /// `Parallel` mode silently degrades to sequential when the feature is
    /// compiled out).
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Map `f` over `items`, parallel or sequential per `mode`. Output order
/// matches input order in both modes.
pub fn map_vec<T, U, F>(mode: ExecMode, items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode.is_parallel() {
            use rayon::prelude::*;
            return items.into_par_iter().map(f).collect();
        }
    }
    let _ = mode;
    items.into_iter().map(f).collect()
}

/// Map `f` over indices `0..n`, parallel or sequential per `mode`. Output
/// order matches index order in both modes.
pub fn map_range<U, F>(mode: ExecMode, n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = mode;
    (0..n).map(f).collect()
}
