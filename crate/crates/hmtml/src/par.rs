//! Thin dispatch layer between rayon and plain iterators.
//!
//! All reductions in this crate are computed as "map fixed chunks, then fold
//! the chunk results in index order". The chunk boundaries depend only on the
//! input length, so results are bit-identical whether or not the `parallel`
//! feature is enabled, and for any thread count.

use std::ops::Range;

/// Chunk length for range-splitting reductions.
pub(crate) const CHUNK: usize = 1024;

pub(crate) fn chunk_ranges(n: usize, chunk: usize) -> Vec<Range<usize>> {
    assert!(chunk > 0);
    let mut out = Vec::with_capacity(n / chunk + 1);
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        out.push(start..end);
        start = end;
    }
    out
}

/// Maps `f` over fixed chunks of `0..n`, returning the chunk results in order.
#[cfg(feature = "parallel")]
pub(crate) fn map_ranges<R, F>(n: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Range<usize>) -> R + Sync + Send,
{
    use rayon::prelude::*;
    chunk_ranges(n, chunk).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_ranges<R, F>(n: usize, chunk: usize, f: F) -> Vec<R>
where
    F: Fn(Range<usize>) -> R,
{
    chunk_ranges(n, chunk).into_iter().map(f).collect()
}

/// Sequential twin of [`map_ranges`]; the benches compare the two.
pub(crate) fn map_ranges_seq<R, F>(n: usize, chunk: usize, f: F) -> Vec<R>
where
    F: Fn(Range<usize>) -> R,
{
    chunk_ranges(n, chunk).into_iter().map(f).collect()
}

/// Maps `f` over `0..n`, one item per index, preserving order.
#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}
