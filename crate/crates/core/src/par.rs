//! Deterministic data-parallel helpers.
//!
//! Every helper returns results in input order, and callers fold partial
//! results sequentially over fixed chunk boundaries. Outputs are therefore
//! bit-identical whether the `parallel` feature is enabled or not, and do
//! not depend on how rayon schedules the work.
//!
//! The `_seq` variants always run sequentially regardless of features; the
//! bench suite uses them as the baseline against the parallel path.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used for full-dataset reductions.
pub const DEFAULT_CHUNK: usize = 1024;

/// Applies `f` to every index in `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Applies `f` to every index in `0..n`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Sequential twin of [`map_indices`].
pub fn map_indices_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Splits `0..n` into consecutive ranges of at most `chunk` items.
pub fn chunk_ranges(n: usize, chunk: usize) -> Vec<Range<usize>> {
    assert!(chunk > 0, "chunk length must be positive");
    let mut out = Vec::with_capacity(n.div_ceil(chunk));
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        out.push(start..end);
        start = end;
    }
    out
}

/// Applies `f` to fixed chunks of `0..n` and returns per-chunk results in
/// chunk order. Fold the partials sequentially to keep floating-point
/// reductions stable under any schedule.
#[cfg(feature = "parallel")]
pub fn map_chunks<U, F>(n: usize, chunk: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(Range<usize>) -> U + Sync + Send,
{
    chunk_ranges(n, chunk).into_par_iter().map(f).collect()
}

/// Applies `f` to fixed chunks of `0..n` and returns per-chunk results in
/// chunk order.
#[cfg(not(feature = "parallel"))]
pub fn map_chunks<U, F>(n: usize, chunk: usize, f: F) -> Vec<U>
where
    F: Fn(Range<usize>) -> U,
{
    chunk_ranges(n, chunk).into_iter().map(f).collect()
}

/// Sequential twin of [`map_chunks`].
pub fn map_chunks_seq<U, F>(n: usize, chunk: usize, f: F) -> Vec<U>
where
    F: Fn(Range<usize>) -> U,
{
    chunk_ranges(n, chunk).into_iter().map(f).collect()
}
