//! Order-preserving data-parallel map.
//!
//! With the `parallel` feature (default) work runs on a rayon pool; without
//! it, or with `jobs == 1`, it runs on the calling thread. Results always come
//! back in input order, so callers never observe scheduling.

/// Execution strategy for [`map_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    /// Rayon with the given thread count; 0 uses the global pool.
    Parallel(usize),
}

impl Mode {
    pub fn from_jobs(jobs: usize) -> Self {
        if jobs == 1 || !cfg!(feature = "parallel") {
            Mode::Sequential
        } else {
            Mode::Parallel(jobs)
        }
    }
}

/// `items.iter().map(f).collect()`, possibly on several threads.
pub fn map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_with(Mode::from_jobs(jobs), items, f)
}

pub fn map_with<T, R, F>(mode: Mode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        Mode::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Mode::Parallel(threads) => {
            use rayon::prelude::*;
            if threads == 0 {
                return items.par_iter().map(f).collect();
            }
            match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                Ok(pool) => pool.install(|| items.par_iter().map(f).collect()),
                Err(e) => {
                    log::warn!("falling back to sequential execution: {e}");
                    items.iter().map(f).collect()
                }
            }
        }
        #[cfg(not(feature = "parallel"))]
        Mode::Parallel(_) => items.iter().map(f).collect(),
    }
}

/// Parallel count of items satisfying `pred` over `0..n`.
pub fn count_range<F>(mode: Mode, n: usize, pred: F) -> usize
where
    F: Fn(usize) -> bool + Sync + Send,
{
    match mode {
        Mode::Sequential => (0..n).filter(|&i| pred(i)).count(),
        #[cfg(feature = "parallel")]
        Mode::Parallel(_) => {
            use rayon::prelude::*;
            (0..n).into_par_iter().filter(|&i| pred(i)).count()
        }
        #[cfg(not(feature = "parallel"))]
        Mode::Parallel(_) => (0..n).filter(|&i| pred(i)).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_preserves_order() {
        let v: Vec<u64> = (0..1000).collect();
        let seq = map_with(Mode::Sequential, &v, |x| x * x);
        let par = map_with(Mode::Parallel(4), &v, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(count_range(Mode::Parallel(0), 100, |i| i % 3 == 0), 34);
    }
}
