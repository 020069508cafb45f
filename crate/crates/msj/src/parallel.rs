//! Deterministic fork/join over grid indices. Sweep rows are independent, so
//! they may run on any number of threads; results always come back in grid
//! order. `MSJ_THREADS` overrides the thread count.

pub(crate) fn thread_count(rows: usize) -> usize {
    let configured = std::env::var("MSJ_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|p| p.get())
                .unwrap_or(1)
        });
    configured.min(rows).max(1)
}

/// Applies `f` to every index in `0..count`, in parallel, returning results
/// in index order.
pub(crate) fn par_map<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if count == 0 {
        return Vec::new();
    }
    let threads = thread_count(count);
    if threads == 1 {
        return (0..count).map(f).collect();
    }
    let chunk = count.div_ceil(threads);
    let mut chunks: Vec<Vec<T>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let f = &f;
                let lo = t * chunk;
                let hi = ((t + 1) * chunk).min(count);
                scope.spawn(move || (lo..hi).map(f).collect::<Vec<T>>())
            })
            .collect();
        for handle in handles {
            chunks.push(handle.join().expect("sweep worker panicked"));
        }
    });
    chunks.into_iter().flatten().collect()
}
