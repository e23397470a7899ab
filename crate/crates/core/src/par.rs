//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these run on the rayon pool; without
//! it they fall back to plain iterators. Results are always collected in index
//! order, so the output never depends on the number of workers.

use crate::error::Result;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, in parallel when the feature is enabled.
#[cfg(feature = "parallel")]
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_range_seq(n, f)
}

/// Sequential reference for [`map_range`].
pub fn map_range_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Fallible [`map_range`]; the first error in index order is returned.
pub fn try_map_range<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    map_range(n, f).into_iter().collect()
}

/// Maps `f` over a slice, preserving order.
#[cfg(feature = "parallel")]
pub fn map_slice<A, T, F>(items: &[A], f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(usize, &A) -> T + Sync + Send,
{
    items.par_iter().enumerate().map(|(i, a)| f(i, a)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_slice<A, T, F>(items: &[A], f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(usize, &A) -> T + Sync + Send,
{
    items.iter().enumerate().map(|(i, a)| f(i, a)).collect()
}

pub fn try_map_slice<A, T, F>(items: &[A], f: F) -> Result<Vec<T>>
where
    A: Sync,
    T: Send,
    F: Fn(usize, &A) -> Result<T> + Sync + Send,
{
    map_slice(items, f).into_iter().collect()
}

/// Sums in index order after a (possibly parallel) map, so floating-point
/// results are reproducible.
pub fn ordered_sum(values: &[f64]) -> f64 {
    values.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_matches_sequential() {
        let f = |i: usize| (i as f64).sqrt() * 3.0;
        assert_eq!(map_range(1000, f), map_range_seq(1000, f));
    }

    #[test]
    fn try_map_reports_first_error() {
        let r: Result<Vec<usize>> = try_map_range(10, |i| {
            if i >= 3 {
                Err(crate::Error::Empty("item"))
            } else {
                Ok(i)
            }
        });
        assert!(r.is_err());
    }
}
