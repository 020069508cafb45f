//! Stability region of the non-saturated system and the wastage analyses
//! built on it: the exact threshold equals the saturated throughput, the
//! naive bound ignores packing losses, and the gap between them is the
//! expected number of idle servers at the edge of stability.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{mean_server_seconds, MsjParams};
use crate::parallel::par_map;
use crate::saturated::{ctmc_steady_state, saturated_wastage};

/// Largest tolerated disagreement between the two wastage routes
/// (state-space expectation vs. `(lambda_naive - lambda_star) * E[S]`).
const WASTAGE_IDENTITY_TOL: f64 = 1e-9;

/// Everything one needs to know about the stability boundary of a system.
///
/// Behavior exactly at `lambda = lambda_star` is a boundary case and is
/// reported as undetermined throughout this crate.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub params: MsjParams,
    /// Exact stability threshold (jobs/time).
    pub lambda_star: f64,
    /// Perfect-packing bound `n / E[S]`.
    pub lambda_naive: f64,
    /// Mean server-seconds demanded per job.
    pub mean_server_seconds: f64,
    /// Expected idle servers at the edge of stability.
    pub limiting_wastage: f64,
    /// Busy fraction of servers at the edge of stability.
    pub utilization: f64,
}

/// The exact stability threshold: the throughput of the saturated system.
pub fn lambda_star(params: &MsjParams) -> Result<f64> {
    let (_, throughput) = ctmc_steady_state(params)?;
    Ok(throughput)
}

/// The perfect-packing estimate `n / E[S]`, an upper bound on the threshold.
pub fn lambda_naive(params: &MsjParams) -> f64 {
    params.n as f64 / mean_server_seconds(params)
}

/// Assembles a [`StabilityReport`], computing the limiting wastage by both
/// routes and insisting they agree.
pub fn report(params: &MsjParams) -> Result<StabilityReport> {
    params.validate()?;
    let threshold = lambda_star(params)?;
    let naive = lambda_naive(params);
    let server_seconds = mean_server_seconds(params);
    let wastage = saturated_wastage(params)?;
    let wastage_from_gap = (naive - threshold) * server_seconds;
    if (wastage - wastage_from_gap).abs() > WASTAGE_IDENTITY_TOL {
        return Err(Error::Inconsistent(format!(
            "wastage routes disagree: state expectation {wastage} vs rate gap {wastage_from_gap}"
        )));
    }
    Ok(StabilityReport {
        params: *params,
        lambda_star: threshold,
        lambda_naive: naive,
        mean_server_seconds: server_seconds,
        limiting_wastage: wastage,
        utilization: 1.0 - wastage / params.n as f64,
    })
}

/// One row of a class-mix sweep.
#[derive(Debug, Clone, Serialize)]
pub struct MixSweepRow {
    pub p2: f64,
    /// Class-1 share of the threshold, `p1 * lambda_star`.
    pub lambda1_star: f64,
    /// Class-2 share of the threshold, `p2 * lambda_star`.
    pub lambda2_star: f64,
    pub wastage: f64,
    pub utilization: f64,
    /// Class shares of the perfect-packing frontier
    /// `lambda1 * n1/mu1 + lambda2 * n2/mu2 = n`.
    pub naive_lambda1: f64,
    pub naive_lambda2: f64,
}

/// Sweeps the class mix: for each `p2` in the grid, recomputes the report
/// with `p1 = 1 - p2` while keeping the rest of `base` fixed.
pub fn sweep_mix(base: &MsjParams, p2_grid: &[f64]) -> Result<Vec<MixSweepRow>> {
    base.validate()?;
    if let Some(&bad) = p2_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidParams(format!(
            "p2 grid value {bad} outside [0, 1]"
        )));
    }
    let rows = par_map(p2_grid.len(), |i| {
        let p2 = p2_grid[i];
        let params = MsjParams {
            p1: 1.0 - p2,
            ..*base
        };
        report(&params).map(|r| MixSweepRow {
            p2,
            lambda1_star: params.p1 * r.lambda_star,
            lambda2_star: p2 * r.lambda_star,
            wastage: r.limiting_wastage,
            utilization: r.utilization,
            naive_lambda1: params.p1 * r.lambda_naive,
            naive_lambda2: p2 * r.lambda_naive,
        })
    });
    rows.into_iter().collect()
}

/// One row of a service-rate-ratio sweep.
#[derive(Debug, Clone, Serialize)]
pub struct RatioSweepRow {
    /// Service rate ratio `mu2 / mu1`.
    pub ratio: f64,
    pub wastage: f64,
}

/// Sweeps the service-rate ratio `mu2/mu1`. Wastage depends on the rates
/// only through their ratio, so each row pins `mu1 = 1` and `mu2 = ratio`.
pub fn sweep_ratio(base: &MsjParams, ratios: &[f64]) -> Result<Vec<RatioSweepRow>> {
    base.validate()?;
    if let Some(&bad) = ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(Error::InvalidParams(format!(
            "rate ratio {bad} must be positive"
        )));
    }
    let rows = par_map(ratios.len(), |i| {
        let params = MsjParams {
            mu1: 1.0,
            mu2: ratios[i],
            ..*base
        };
        saturated_wastage(&params).map(|wastage| RatioSweepRow {
            ratio: ratios[i],
            wastage,
        })
    });
    rows.into_iter().collect()
}

/// Limiting regime of the service-rate ratio `mu2/mu1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RatioLimit {
    /// `mu2/mu1 -> 0`: class-2 jobs become infinitely long.
    ZeroRatio,
    /// `mu2/mu1 -> inf`: class-1 jobs become infinitely long.
    InfiniteRatio,
}

/// Asymptotic wastage in the two ratio limits. The zero-ratio limit
/// `n mod n2` is exact; the infinite-ratio value `n2 - n1/p2` is an
/// approximation that is good when `n2 >> n1`.
pub fn asymptotic_wastage(params: &MsjParams, limit: RatioLimit) -> Result<f64> {
    params.validate()?;
    match limit {
        RatioLimit::ZeroRatio => Ok((params.n % params.n2) as f64),
        RatioLimit::InfiniteRatio => {
            if params.p2() <= 0.0 {
                return Err(Error::InvalidParams(
                    "infinite-ratio limit needs p2 > 0".into(),
                ));
            }
            Ok(params.n2 as f64 - params.n1 as f64 / params.p2())
        }
    }
}

/// Indices of strict local maxima of a grid-sampled curve. Interior points
/// must beat both neighbors; an endpoint counts when it beats its single
/// neighbor, which is how a curve that keeps climbing into an asymptote at
/// the edge of the grid shows up as a peak.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    let mut peaks = Vec::new();
    for i in 0..n {
        let above_left = i == 0 || values[i] > values[i - 1];
        let above_right = i + 1 == n || values[i] > values[i + 1];
        if n > 1 && above_left && above_right {
            peaks.push(i);
        }
    }
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid;

    fn small() -> MsjParams {
        MsjParams::new(1, 2, 2, 1.0, 1.0, 0.5).unwrap()
    }

    #[test]
    fn lambda_star_small_system() {
        assert!((lambda_star(&small()).unwrap() - 8.0 / 7.0).abs() < 1e-12);
        let packed = MsjParams::new(2, 5, 10, 3.0, 1.0, 1.0).unwrap();
        assert!((lambda_star(&packed).unwrap() - 15.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_naive_values() {
        assert!((lambda_naive(&small()) - 4.0 / 3.0).abs() < 1e-12);
        let blue = MsjParams::new(1, 10, 10, 16.2, 8.1, 0.2).unwrap();
        assert!((lambda_naive(&blue) - 10.0).abs() < 1e-9);
        let single = MsjParams::new(1, 2, 5, 1.0, 1.0, 1.0).unwrap();
        assert!((lambda_naive(&single) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn report_small_system() {
        let r = report(&small()).unwrap();
        assert!((r.limiting_wastage - 2.0 / 7.0).abs() < 1e-12);
        assert!((r.utilization - (1.0 - 1.0 / 7.0)).abs() < 1e-12);
        assert!(r.lambda_star <= r.lambda_naive);
    }

    #[test]
    fn report_perfect_packing() {
        let p = MsjParams::new(3, 10, 30, 1.0, 1.0, 0.0).unwrap();
        let r = report(&p).unwrap();
        assert!(r.limiting_wastage.abs() < 1e-12);
        assert!((r.utilization - 1.0).abs() < 1e-12);
        assert!((r.lambda_star - r.lambda_naive).abs() < 1e-9);
    }

    #[test]
    fn mix_sweep_endpoints_pack_perfectly() {
        let base = MsjParams::new(1, 100, 200, 2.0, 1.0, 0.5).unwrap();
        let rows = sweep_mix(&base, &[0.0, 1.0]).unwrap();
        assert!(rows[0].wastage.abs() < 1e-9);
        assert!(rows[1].wastage.abs() < 1e-9);
        // The naive frontier endpoints mark perfect single-class packing.
        assert!((rows[0].naive_lambda1 - 400.0).abs() < 1e-9);
        assert!((rows[1].naive_lambda2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_sweep_matches_direct_wastage() {
        let base = MsjParams::new(1, 10, 30, 1.0, 1.0, 0.5).unwrap();
        let rows = sweep_ratio(&base, &[0.25, 1.0, 4.0]).unwrap();
        for row in &rows {
            let direct = MsjParams::new(1, 10, 30, 1.0, row.ratio, 0.5).unwrap();
            let expected = saturated_wastage(&direct).unwrap();
            assert!((row.wastage - expected).abs() < 1e-12);
        }
        // Rates with the same ratio give the same wastage.
        let scaled = MsjParams::new(1, 10, 30, 10.0, 40.0, 0.5).unwrap();
        assert!((rows[2].wastage - saturated_wastage(&scaled).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn asymptotic_limits() {
        let p = MsjParams::new(1, 10, 30, 1.0, 1.0, 0.5).unwrap();
        assert_eq!(asymptotic_wastage(&p, RatioLimit::ZeroRatio).unwrap(), 0.0);
        assert!((asymptotic_wastage(&p, RatioLimit::InfiniteRatio).unwrap() - 8.0).abs() < 1e-12);
        let q = MsjParams::new(1, 100, 250, 1.0, 1.0, 0.5).unwrap();
        assert_eq!(asymptotic_wastage(&q, RatioLimit::ZeroRatio).unwrap(), 50.0);
        let single = MsjParams::new(1, 10, 30, 1.0, 1.0, 1.0).unwrap();
        assert!(asymptotic_wastage(&single, RatioLimit::InfiniteRatio).is_err());
    }

    #[test]
    fn wastage_identity_randomized() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let n = rng.gen_range(2..=50u32);
            let n2 = rng.gen_range(2..=n);
            let n1 = rng.gen_range(1..n2);
            let mu1 = 10f64.powf(rng.gen_range(-1.0..1.0));
            let mu2 = 10f64.powf(rng.gen_range(-1.0..1.0));
            let p1 = rng.gen_range(0.0..=1.0);
            let params = MsjParams::new(n1, n2, n, mu1, mu2, p1).unwrap();
            // report() itself enforces the identity at 1e-9.
            let r = report(&params).unwrap();
            assert!(r.lambda_star <= r.lambda_naive + 1e-12 * r.lambda_naive);
            assert!(r.limiting_wastage >= -1e-9);
        }
    }

    #[test]
    fn zero_ratio_convergence() {
        for (n1, n2, n, p1) in [(3, 8, 30, 0.5), (1, 10, 25, 0.3), (2, 7, 23, 0.7)] {
            let base = MsjParams::new(n1, n2, n, 1.0, 1.0, p1).unwrap();
            let rows = sweep_ratio(&base, &[1e-5]).unwrap();
            let limit = asymptotic_wastage(&base, RatioLimit::ZeroRatio).unwrap();
            assert!(
                (rows[0].wastage - limit).abs() < 1e-3,
                "{n1}-{n2}-{n}: wastage {} vs limit {limit}",
                rows[0].wastage
            );
        }
    }

    #[test]
    fn local_maxima_detection() {
        assert_eq!(local_maxima(&[0.0, 1.0, 0.0, 2.0, 1.0]), vec![1, 3]);
        // Rising tail counts as a boundary peak; plateaus never do.
        assert_eq!(local_maxima(&[0.0, 1.0, 0.5, 1.5]), vec![1, 3]);
        assert_eq!(local_maxima(&[1.0, 1.0, 1.0]), Vec::<usize>::new());
        assert_eq!(local_maxima(&[2.0, 1.0]), vec![0]);
        assert_eq!(local_maxima(&[1.0]), Vec::<usize>::new());
    }

    #[test]
    fn monotone_regime_has_single_edge_peak() {
        let base = MsjParams::new(3, 10, 30, 1.0, 1.0, 0.5).unwrap();
        let ratios = grid::logarithmic(1e-3, 1e3, 60);
        let rows = sweep_ratio(&base, &ratios).unwrap();
        let w: Vec<f64> = rows.iter().map(|r| r.wastage).collect();
        assert!(w.windows(2).all(|p| p[1] >= p[0] - 1e-12));
        assert_eq!(local_maxima(&w), vec![w.len() - 1]);
    }
}
