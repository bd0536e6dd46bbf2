//! Data-parallel map with a sequential fallback.
//!
//! With the default `parallel` feature, [`map`] fans out across the rayon
//! thread pool; built with `--no-default-features` it degrades to a plain
//! loop with the same signature. Results always come back in input order,
//! so callers that reduce sequentially afterwards (the batch-gradient sum,
//! the evaluation accumulators) get bit-identical answers regardless of the
//! feature or the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Order-preserving map, sequential. Always available: the benches use it
/// as the baseline against [`map`].
pub fn map_seq<T: Sync, U: Send, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Order-preserving map over `items`, parallel when the `parallel` feature
/// is enabled.
#[cfg(feature = "parallel")]
pub fn map<T: Sync, U: Send, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Order-preserving map over `items`, parallel when the `parallel` feature
/// is enabled.
#[cfg(not(feature = "parallel"))]
pub fn map<T: Sync, U: Send, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U + Sync + Send,
{
    map_seq(items, f)
}
