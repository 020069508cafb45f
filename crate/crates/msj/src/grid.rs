//! Evenly spaced evaluation grids for parameter sweeps.

/// `count` points from `lo` to `hi` inclusive, linearly spaced.
pub fn linear(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// `count` points from `lo` to `hi` inclusive, log-spaced. Requires positive
/// endpoints.
pub fn logarithmic(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > 0.0, "log grid needs positive endpoints");
    linear(lo.ln(), hi.ln(), count)
        .into_iter()
        .map(f64::exp)
        .collect()
}
