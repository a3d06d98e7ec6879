//! Worker pool for independent tasks.
//!
//! Results come back in task order whatever the worker count, so callers
//! that reduce them in order stay bit-reproducible.

/// Runs `f` over `0..len` on up to `workers` threads and returns the results
/// in index order. `workers <= 1` runs on the calling thread.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(len: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if workers <= 1 || len <= 1 {
        return (0..len).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..len).into_par_iter().map(&f).collect()),
        Err(_) => (0..len).map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(len: usize, _workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..len).map(f).collect()
}

/// Whether the crate was built with the thread pool.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_workers() {
        let a = map_indexed(50, 1, |i| i * i);
        let b = map_indexed(50, 4, |i| i * i);
        assert_eq!(a, b);
        assert_eq!(a[7], 49);
    }
}
