//! Order-preserving map over replicate indices.
//!
//! Results always come back in index order, so reductions over them are
//! independent of the thread count.

/// Maps `f` over `0..len`. With the `parallel` feature and `threads != Some(1)`
/// the work is spread over a rayon pool.
pub fn map_indexed<T, F>(len: usize, threads: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match threads {
            Some(1) => (0..len).map(f).collect(),
            Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
                Ok(pool) => pool.install(|| (0..len).into_par_iter().map(&f).collect()),
                Err(_) => (0..len).map(f).collect(),
            },
            None => (0..len).into_par_iter().map(f).collect(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        (0..len).map(f).collect()
    }
}
