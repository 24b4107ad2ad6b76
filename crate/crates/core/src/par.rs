//! Data-parallel execution helpers.
//!
//! With the `parallel` feature (default) [`map`] and friends fan out over
//! rayon; without it they fall back to the sequential twins. The `_seq`
//! variants are always available so benchmarks can compare both paths in
//! one build. Order of results always matches input order, so downstream
//! artifacts are byte-identical regardless of thread count.

use std::ops::Range;

/// Sequential twin of [`map`].
pub fn map_seq<T, U>(items: &[T], f: impl Fn(&T) -> U) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Sequential twin of [`try_map`].
pub fn try_map_seq<T, U, E>(items: &[T], f: impl Fn(&T) -> Result<U, E>) -> Result<Vec<U>, E> {
    items.iter().map(f).collect()
}

/// Sequential twin of [`map_range`].
pub fn map_range_seq<U>(range: Range<usize>, f: impl Fn(usize) -> U) -> Vec<U> {
    range.map(f).collect()
}

/// Sequential twin of [`try_map_range`].
pub fn try_map_range_seq<U, E>(
    range: Range<usize>,
    f: impl Fn(usize) -> Result<U, E>,
) -> Result<Vec<U>, E> {
    range.map(f).collect()
}

#[cfg(feature = "parallel")]
mod imp {
    use rayon::prelude::*;
    use std::ops::Range;

    pub fn map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
        items.par_iter().map(f).collect()
    }

    pub fn try_map<T: Sync, U: Send, E: Send>(
        items: &[T],
        f: impl Fn(&T) -> Result<U, E> + Sync + Send,
    ) -> Result<Vec<U>, E> {
        items.par_iter().map(f).collect()
    }

    pub fn map_range<U: Send>(range: Range<usize>, f: impl Fn(usize) -> U + Sync + Send) -> Vec<U> {
        range.into_par_iter().map(f).collect()
    }

    pub fn try_map_range<U: Send, E: Send>(
        range: Range<usize>,
        f: impl Fn(usize) -> Result<U, E> + Sync + Send,
    ) -> Result<Vec<U>, E> {
        range.into_par_iter().map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    use std::ops::Range;

    pub fn map<T, U>(items: &[T], f: impl Fn(&T) -> U) -> Vec<U> {
        super::map_seq(items, f)
    }

    pub fn try_map<T, U, E>(items: &[T], f: impl Fn(&T) -> Result<U, E>) -> Result<Vec<U>, E> {
        super::try_map_seq(items, f)
    }

    pub fn map_range<U>(range: Range<usize>, f: impl Fn(usize) -> U) -> Vec<U> {
        super::map_range_seq(range, f)
    }

    pub fn try_map_range<U, E>(
        range: Range<usize>,
        f: impl Fn(usize) -> Result<U, E>,
    ) -> Result<Vec<U>, E> {
        super::try_map_range_seq(range, f)
    }
}

pub use imp::{map, map_range, try_map, try_map_range};
