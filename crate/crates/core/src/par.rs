//! Ordered map helpers. With the `parallel` feature work is spread over the
//! current rayon pool; results always come back in index order, so callers
//! that reduce them sequentially get identical bits for any thread count.

use alloc::vec::Vec;

/// Rows per work unit; fixed so reductions never depend on thread count.
pub const CHUNK_ROWS: usize = 64;

#[cfg(feature = "parallel")]
pub fn map_ordered<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Number of `CHUNK_ROWS`-sized chunks covering `rows`.
#[inline]
pub fn chunk_count(rows: usize) -> usize {
    rows.div_ceil(CHUNK_ROWS)
}

#[inline]
pub fn chunk_range(chunk: usize, rows: usize) -> core::ops::Range<usize> {
    let start = chunk * CHUNK_ROWS;
    start..(start + CHUNK_ROWS).min(rows)
}
