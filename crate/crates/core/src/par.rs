//! Row-parallel helpers that compile to plain loops without `std`.

use alloc::vec::Vec;

/// Fills `out` in chunks of `width`, calling `f(row, chunk)` for each row.
pub(crate) fn for_each_row<T, F>(out: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "std")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(width).enumerate().for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "std"))]
    {
        for (i, c) in out.chunks_mut(width).enumerate() {
            f(i, c);
        }
    }
}

/// Like [`for_each_row`] but threads a per-worker scratch value through `f`.
pub(crate) fn for_each_row_with<T, S, F, I>(out: &mut [T], width: usize, init: I, f: F)
where
    T: Send,
    S: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize, &mut [T]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "std")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(width)
            .enumerate()
            .for_each_init(&init, |s, (i, c)| f(s, i, c));
    }
    #[cfg(not(feature = "std"))]
    {
        let mut s = init();
        for (i, c) in out.chunks_mut(width).enumerate() {
            f(&mut s, i, c);
        }
    }
}

/// Maps `0..n` to a vector, in order.
pub(crate) fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "std")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "std"))]
    {
        (0..n).map(f).collect()
    }
}
