//! Replicate-level data parallelism.
//!
//! With the `parallel` feature (default) independent replicates are spread
//! over the rayon pool; without it they run in order on the calling thread.
//! Results are always returned in index order.

/// How a batch of replicates is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProcessingMode {
    Sequential,
    #[default]
    Parallel,
}

pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indices_with(ProcessingMode::default(), n, f)
}

pub fn map_indices_with<T, F>(mode: ProcessingMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        ProcessingMode::Sequential => (0..n).map(f).collect(),
        ProcessingMode::Parallel => par_map(n, f),
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Configure the global worker pool. Ignored without the `parallel` feature.
pub fn set_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let a = map_indices_with(ProcessingMode::Sequential, 100, |i| i * i);
        let b = map_indices_with(ProcessingMode::Parallel, 100, |i| i * i);
        assert_eq!(a, b);
    }
}
