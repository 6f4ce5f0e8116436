//! Ordered chunk mapping. Results are concatenated in chunk order, so output
//! never depends on the number of worker threads.

use alloc::vec::Vec;

#[cfg(feature = "std")]
pub(crate) fn map_chunks<T, U, F>(items: &[T], chunk: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &[T]) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items
        .par_chunks(chunk.max(1))
        .enumerate()
        .map(|(i, c)| f(i * chunk.max(1), c))
        .collect()
}

#[cfg(not(feature = "std"))]
pub(crate) fn map_chunks<T, U, F>(items: &[T], chunk: usize, f: F) -> Vec<U>
where
    F: Fn(usize, &[T]) -> U,
{
    items
        .chunks(chunk.max(1))
        .enumerate()
        .map(|(i, c)| f(i * chunk.max(1), c))
        .collect()
}
