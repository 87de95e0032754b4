use rayon::prelude::*;

/// Maps `f` over `items` on `jobs` worker threads, keeping input order.
/// `jobs <= 1` runs inline on the calling thread.
pub(crate) fn ordered_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    if jobs <= 1 || items.len() < 2 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| {
            items
                .par_iter()
                .enumerate()
                .map(|(i, t)| f(i, t))
                .collect()
        }),
        // Thread creation can fail under tight rlimits; fall back to serial.
        Err(_) => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
    }
}
