//! Data-parallel helpers. With the `parallel` feature (default) the loops
//! run on the rayon pool; without it everything runs sequentially and
//! produces bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a batch of independent work items is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Execution {
    /// Runs `f` under this scheduling mode. `Sequential` confines every
    /// nested parallel loop to a single worker thread.
    pub fn run<R: Send>(self, f: impl FnOnce() -> R + Send) -> R {
        match self {
            Execution::Parallel => f(),
            Execution::Sequential => {
                #[cfg(feature = "parallel")]
                {
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(1)
                        .build()
                        .expect("single-thread pool")
                        .install(f)
                }
                #[cfg(not(feature = "parallel"))]
                f()
            }
        }
    }
}

/// Calls `f(row_index, row)` for each `row_len`-sized chunk of `data`.
pub(crate) fn for_each_row<F>(data: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(row_len)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(row_len)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// `(0..n).map(f).collect()`, evaluated in parallel when enabled. Output
/// order is always index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
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
