//! Row-partitioned loops that run on rayon when the `parallel` feature is
//! enabled and sequentially otherwise.
//!
//! Every helper hands a closure exactly one output row, so the arithmetic
//! inside a row is identical in both modes and results are bitwise equal.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Calls `f(row_index, row)` for every `cols`-wide row of `out`.
pub(crate) fn for_each_row<F>(out: &mut [f64], cols: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if cols == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(cols)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.chunks_mut(cols).enumerate().for_each(|(i, row)| f(i, row));
    }
}

/// Maps every index in `0..n` to a value, preserving order.
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Whether kernels in this build dispatch to a thread pool.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
