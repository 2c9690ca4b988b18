//! Row-partitioned execution. With the `parallel` feature the row loops of
//! the warp, threshold and morphology stages run on the rayon pool; without
//! it (or with [`Exec::Sequential`]) they run on the calling thread. Each
//! output row is written by exactly one worker, so both modes produce
//! identical bytes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    pub(crate) fn for_each_row<T, F>(self, data: &mut [T], width: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => data
                .par_chunks_mut(width)
                .enumerate()
                .for_each(|(y, row)| f(y, row)),
            _ => data
                .chunks_mut(width)
                .enumerate()
                .for_each(|(y, row)| f(y, row)),
        }
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<I, O, F>(self, items: &[I], f: F) -> Vec<O>
    where
        I: Sync,
        O: Send,
        F: Fn(&I) -> O + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }
}
