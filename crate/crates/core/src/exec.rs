//! Data-parallel inner loops with a sequential fallback.
//!
//! Every helper is deterministic: results do not depend on thread count or
//! scheduling. Parallel reductions resolve ties by smallest index, and
//! "first hit" searches return the hit with the smallest index, exactly as
//! the sequential fallback does. Built with `--no-default-features` the
//! same code runs on plain iterators.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluate `f` on `0..count` and return `(index, value)` minimizing the
/// value, ties broken by smallest index. `None` if `count == 0`.
pub(crate) fn min_indexed<F>(count: usize, f: F) -> Option<(usize, f64)>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let better = |a: &(usize, f64), b: &(usize, f64)| -> bool {
        a.1 < b.1 || (a.1 == b.1 && a.0 < b.0)
    };
    #[cfg(feature = "parallel")]
    {
        (0..count)
            .into_par_iter()
            .map(|i| (i, f(i)))
            .reduce_with(|a, b| if better(&a, &b) { a } else { b })
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count)
            .map(|i| (i, f(i)))
            .reduce(|a, b| if better(&a, &b) { a } else { b })
    }
}

/// Return the smallest index in `0..count` for which `probe` yields a value,
/// together with that value.
pub(crate) fn first_some<T, F>(count: usize, probe: F) -> Option<(usize, T)>
where
    T: Send,
    F: Fn(usize) -> Option<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..count)
            .into_par_iter()
            .find_map_first(|i| probe(i).map(|t| (i, t)))
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).find_map(|i| probe(i).map(|t| (i, t)))
    }
}

/// Map `f` over `0..count`, preserving index order in the output.
pub(crate) fn map_collect<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}
