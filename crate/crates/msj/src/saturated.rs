//! Steady-state analysis of the saturated system: the product-form stationary
//! distribution of the embedded (post-departure) DTMC, the exact transition
//! matrix, a brute-force linear-solve oracle, the continuous-time steady state
//! with its throughput, and the expected number of idle servers.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{completion_fractions, s2, MsjParams, StateSpace};

/// Which chain a distribution describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChainKind {
    /// Sampled just after each departure.
    EmbeddedDtmc,
    /// The continuous-time chain itself.
    Ctmc,
}

/// A probability vector aligned with [`StateSpace`] order.
#[derive(Debug, Clone, Serialize)]
pub struct Distribution {
    pub probs: Vec<f64>,
    pub kind: ChainKind,
}

impl Distribution {
    /// Verifies non-negativity and normalization to within 1e-12.
    pub fn check(&self) -> Result<()> {
        if self.probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Inconsistent(
                "distribution has negative or non-finite entries".into(),
            ));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Inconsistent(format!(
                "distribution sums to {total}, not 1"
            )));
        }
        Ok(())
    }
}

/// Transition probabilities of the embedded DTMC, split by the class of the
/// completing job. Row = source state, column = destination.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    class1: DMatrix<f64>,
    class2: DMatrix<f64>,
    full: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        self.full.nrows()
    }

    /// Full matrix `P = P1 + P2`.
    pub fn full(&self) -> &DMatrix<f64> {
        &self.full
    }

    /// Transitions driven by a class-1 completion.
    pub fn class1(&self) -> &DMatrix<f64> {
        &self.class1
    }

    /// Transitions driven by a class-2 completion.
    pub fn class2(&self) -> &DMatrix<f64> {
        &self.class2
    }

    /// Largest deviation of any row sum from 1.
    pub fn row_sum_error(&self) -> f64 {
        (0..self.dim())
            .map(|i| (self.full.row(i).sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn count_times_log(count: u32, log_p: f64) -> f64 {
    // 0 * ln(0) would be NaN; an absent factor contributes nothing.
    if count == 0 {
        0.0
    } else {
        count as f64 * log_p
    }
}

/// Log-weights of the product-form stationary distribution, before
/// normalization. The weight of the state with `a` class-1 and `b` class-2
/// jobs in service is
///
/// ```text
///   p1^a * p2^(b + blocked) * prod_{i=1..a} 1/f1(s1(i)) * prod_{j=1..b} 1/f2(s2(j))
/// ```
///
/// evaluated in log space because the reciprocal products overflow doubles
/// for large state spaces. States ruled out by `p1` in {0, 1} get `-inf`.
fn log_state_weights(space: &StateSpace) -> Result<Vec<f64>> {
    let params = space.params();
    let log_p1 = params.p1.ln();
    let log_p2 = params.p2().ln();

    let mut log_f1_prefix = vec![0.0; space.len()];
    for a in 1..space.len() {
        let (f1, _) = completion_fractions(&space[a], params)?;
        log_f1_prefix[a] = log_f1_prefix[a - 1] + f1.ln();
    }
    let max_class2 = params.max_class2() as usize;
    let mut log_f2_prefix = vec![0.0; max_class2 + 1];
    for b in 1..=max_class2 {
        let (_, f2) = completion_fractions(&s2(b as u32, params)?, params)?;
        log_f2_prefix[b] = log_f2_prefix[b - 1] + f2.ln();
    }

    Ok(space
        .iter()
        .map(|state| {
            count_times_log(state.class1, log_p1)
                + count_times_log(state.class2 + state.blocked as u32, log_p2)
                - log_f1_prefix[state.class1 as usize]
                - log_f2_prefix[state.class2 as usize]
        })
        .collect())
}

fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    let shift = log_weights
        .iter()
        .copied()
        .filter(|w| w.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::Inconsistent("all state weights vanished".into()));
    }
    let weights: Vec<f64> = log_weights
        .iter()
        .map(|&w| {
            if w.is_finite() {
                (w - shift).exp()
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Stationary distribution of the embedded DTMC, from the closed-form
/// product expression.
pub fn embedded_steady_state(params: &MsjParams) -> Result<Distribution> {
    let space = StateSpace::enumerate(params)?;
    let probs = normalize_log_weights(&log_state_weights(&space)?)?;
    let dist = Distribution {
        probs,
        kind: ChainKind::EmbeddedDtmc,
    };
    dist.check()?;
    Ok(dist)
}

/// Builds the embedded-DTMC transition matrix by enumerating the eight
/// possible transition shapes.
///
/// Every transition is a completion of class `i` followed by `j` class-1 jobs
/// and at most one class-2 job entering from the queue, with probability
/// `f_i(s) * p1^j * p2^k`. From a non-blocked state `[0, a, b]`:
///
/// * class-1 completion, class-1 refill: self-loop, `f1 * p1`;
/// * class-1 completion, class-2 head: lands in `s1(a-1)` (in service or
///   blocking), `f1 * p2`;
/// * class-2 completion, class-2 refill: self-loop, `f2 * p2`;
/// * class-2 completion, class-1 jobs fill the servers: lands in `s2(b-1)`,
///   `f2 * p1^j`;
/// * class-2 completion, class-1 jobs then a blocking class-2 head: lands in
///   `[1, a', b-1]` for each `a'` strictly between `a` and the class-1 count
///   of `s2(b-1)`, `f2 * p1^(a'-a) * p2`.
///
/// From a blocked state `[1, a, b]`:
///
/// * class-1 completion: the blocking job enters service or keeps blocking,
///   either way `s1(a-1)` with probability `f1` (no new job is sampled);
/// * class-2 completion, blocking job enters, class-1 jobs fill the servers:
///   lands in `s2(b)`, `f2 * p1^j`;
/// * class-2 completion, blocking job enters, class-1 jobs then a new
///   blocking head: lands in `[1, a', b]` for `a' >= a` below the class-1
///   count of `s2(b)`, `f2 * p1^(a'-a) * p2` (self-loop at `a' = a`).
pub fn transition_matrix(params: &MsjParams) -> Result<TransitionMatrix> {
    let space = StateSpace::enumerate(params)?;
    let dim = space.len();
    let p1 = params.p1;
    let p2 = params.p2();
    let mut m1 = DMatrix::zeros(dim, dim);
    let mut m2 = DMatrix::zeros(dim, dim);

    for (row, state) in space.iter().enumerate() {
        let (f1, f2) = completion_fractions(state, params)?;
        let a = state.class1;
        let b = state.class2;
        if !state.blocked {
            if a > 0 {
                m1[(row, row)] += f1 * p1;
                m1[(row, a as usize - 1)] += f1 * p2;
            }
            if b > 0 {
                m2[(row, row)] += f2 * p2;
                let full = s2(b - 1, params)?.class1;
                m2[(row, full as usize)] += f2 * p1.powi((full - a) as i32);
                for target in a + 1..full {
                    m2[(row, target as usize)] += f2 * p1.powi((target - a) as i32) * p2;
                }
            }
        } else {
            if a > 0 {
                m1[(row, a as usize - 1)] += f1;
            }
            if b > 0 {
                let full = s2(b, params)?.class1;
                m2[(row, full as usize)] += f2 * p1.powi((full - a) as i32);
                for target in a..full {
                    m2[(row, target as usize)] += f2 * p1.powi((target - a) as i32) * p2;
                }
            }
        }
    }

    let full = &m1 + &m2;
    Ok(TransitionMatrix {
        class1: m1,
        class2: m2,
        full,
    })
}

/// Brute-force stationary distribution of the embedded DTMC: solves
/// `pi = pi P` with one balance equation replaced by normalization. Falls
/// back to power iteration when the direct solve fails (possible for the
/// reducible chains at `p1` in {0, 1}).
pub fn solve_dtmc_oracle(tm: &TransitionMatrix) -> Result<Distribution> {
    let dim = tm.dim();
    if dim == 0 {
        return Err(Error::SolveFailed("empty transition matrix".into()));
    }

    let mut system = tm.full().transpose() - DMatrix::<f64>::identity(dim, dim);
    for col in 0..dim {
        system[(dim - 1, col)] = 1.0;
    }
    let mut rhs = DVector::zeros(dim);
    rhs[dim - 1] = 1.0;

    let solved = system.lu().solve(&rhs).and_then(|pi| {
        let ok = pi.iter().all(|&x| x.is_finite() && x > -1e-9);
        ok.then(|| pi.map(|x| x.max(0.0)))
    });
    let pi = match solved {
        Some(pi) => pi,
        None => power_iteration(tm.full())?,
    };

    let total: f64 = pi.iter().sum();
    let dist = Distribution {
        probs: pi.iter().map(|&x| x / total).collect(),
        kind: ChainKind::EmbeddedDtmc,
    };
    dist.check()?;
    Ok(dist)
}

fn power_iteration(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let dim = p.nrows();
    let mut pi = DVector::from_element(dim, 1.0 / dim as f64);
    for _ in 0..200_000 {
        let next = p.tr_mul(&pi);
        let residual = (&next - &pi).amax();
        pi = next;
        if residual < 1e-15 {
            return Ok(pi);
        }
    }
    Err(Error::SolveFailed(
        "power iteration did not converge".into(),
    ))
}

/// Steady state of the continuous-time saturated system and its throughput.
///
/// Each CTMC probability is the embedded probability divided by the state's
/// departure rate; the normalizing constant is the throughput, the
/// reciprocal of the mean time between departures.
pub fn ctmc_steady_state(params: &MsjParams) -> Result<(Distribution, f64)> {
    let space = StateSpace::enumerate(params)?;
    let embedded = embedded_steady_state(params)?;
    let weighted: Vec<f64> = space
        .iter()
        .zip(&embedded.probs)
        .map(|(state, &pi)| pi / state.completion_rate(params))
        .collect();
    let mean_interdeparture: f64 = weighted.iter().sum();
    let throughput = 1.0 / mean_interdeparture;
    let dist = Distribution {
        probs: weighted.iter().map(|&w| w * throughput).collect(),
        kind: ChainKind::Ctmc,
    };
    dist.check()?;
    Ok((dist, throughput))
}

/// Expected number of idle servers in the saturated system in steady state.
pub fn saturated_wastage(params: &MsjParams) -> Result<f64> {
    let space = StateSpace::enumerate(params)?;
    let (ctmc, _) = ctmc_steady_state(params)?;
    Ok(space
        .iter()
        .zip(&ctmc.probs)
        .map(|(state, &p)| p * state.free_servers(params) as f64)
        .sum())
}

/// Residuals of the stationary equations under the product-form distribution.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BalanceReport {
    /// Max-abs residual of the full stationary equation at any state.
    pub max_residual_full: f64,
    /// Max-abs residual of the class-1 decomposed equation.
    pub max_residual_class1: f64,
    /// Max-abs residual of the class-2 decomposed equation.
    pub max_residual_class2: f64,
    pub tol: f64,
}

impl BalanceReport {
    pub fn max_residual(&self) -> f64 {
        self.max_residual_full
            .max(self.max_residual_class1)
            .max(self.max_residual_class2)
    }

    pub fn passed(&self) -> bool {
        self.max_residual() < self.tol
    }
}

fn max_stationarity_residual(target: &[f64], pi: &[f64], p: &DMatrix<f64>) -> f64 {
    let dim = pi.len();
    (0..dim)
        .map(|s| {
            let inflow: f64 = (0..dim).map(|src| pi[src] * p[(src, s)]).sum();
            (target[s] - inflow).abs()
        })
        .fold(0.0, f64::max)
}

/// Evaluates the full stationary equation and both class-decomposed
/// stationary equations at every state, using the product-form distribution
/// and the enumerated transition matrix. Residuals above `tol` indicate an
/// implementation bug.
pub fn verify_balance(params: &MsjParams, tol: f64) -> Result<BalanceReport> {
    let pi = embedded_steady_state(params)?;
    let tm = transition_matrix(params)?;
    let scaled1: Vec<f64> = pi.probs.iter().map(|&x| params.p1 * x).collect();
    let scaled2: Vec<f64> = pi.probs.iter().map(|&x| params.p2() * x).collect();
    Ok(BalanceReport {
        max_residual_full: max_stationarity_residual(&pi.probs, &pi.probs, tm.full()),
        max_residual_class1: max_stationarity_residual(&scaled1, &pi.probs, tm.class1()),
        max_residual_class2: max_stationarity_residual(&scaled2, &pi.probs, tm.class2()),
        tol,
    })
}

/// Max-abs residual of the continuous-time balance equation
/// `p_s nu_s = sum_s' p_s' nu_s' P(s', s)` under the CTMC steady state.
pub fn ctmc_balance_residual(params: &MsjParams) -> Result<f64> {
    let space = StateSpace::enumerate(params)?;
    let (ctmc, _) = ctmc_steady_state(params)?;
    let tm = transition_matrix(params)?;
    let rate_weighted: Vec<f64> = space
        .iter()
        .zip(&ctmc.probs)
        .map(|(state, &p)| p * state.completion_rate(params))
        .collect();
    Ok(max_stationarity_residual(
        &rate_weighted,
        &rate_weighted,
        tm.full(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> MsjParams {
        MsjParams::new(1, 2, 2, 1.0, 1.0, 0.5).unwrap()
    }

    #[test]
    fn embedded_pi_three_state_system() {
        // Independent of the service rates: the only reciprocal factors are
        // f1([1,1,0]) = f2([0,0,1]) = 1.
        for (mu1, mu2) in [(1.0, 1.0), (3.0, 0.2), (0.01, 50.0)] {
            let p = MsjParams::new(1, 2, 2, mu1, mu2, 0.5).unwrap();
            let pi = embedded_steady_state(&p).unwrap();
            assert!((pi.probs[0] - 0.5).abs() < 1e-15);
            assert!((pi.probs[1] - 0.25).abs() < 1e-15);
            assert!((pi.probs[2] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn embedded_pi_degenerate_mixes() {
        let p = MsjParams::new(3, 10, 30, 1.0, 1.0, 0.0).unwrap();
        let pi = embedded_steady_state(&p).unwrap();
        assert!((pi.probs[0] - 1.0).abs() < 1e-15, "concentrates on s1(0)");
        assert!(pi.probs[1..].iter().all(|&x| x == 0.0));

        let p = MsjParams::new(3, 10, 30, 1.0, 1.0, 1.0).unwrap();
        let pi = embedded_steady_state(&p).unwrap();
        assert!((pi.probs.last().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn transition_rows_sum_to_one() {
        for (n1, n2, n, p1) in [(3, 10, 30, 0.5), (1, 4, 7, 0.2), (2, 9, 40, 0.91)] {
            let p = MsjParams::new(n1, n2, n, 2.0, 1.0, p1).unwrap();
            let tm = transition_matrix(&p).unwrap();
            assert!(tm.row_sum_error() < 1e-12, "{n1}-{n2}-{n}");
        }
    }

    #[test]
    fn known_transition_probabilities() {
        let p = MsjParams::new(3, 10, 30, 2.0, 1.0, 0.4).unwrap();
        let space = StateSpace::enumerate(&p).unwrap();
        let tm = transition_matrix(&p).unwrap();
        let idx = |h: bool, a: u32, b: u32| {
            space
                .index_of(&crate::model::SaturatedState::new(h, a, b))
                .unwrap()
        };

        // Blocked state, class-2 completion, two class-1 refills fill the servers.
        let (_, f2_141) = completion_fractions(&space[4], &p).unwrap();
        let expected = f2_141 * p.p1 * p.p1;
        assert!((tm.full()[(idx(true, 4, 1), idx(false, 6, 1))] - expected).abs() < 1e-15);

        // Full-pack state: self-loop p1, drop to s1(9) with p2 (f1 = 1).
        let row = idx(false, 10, 0);
        assert!((tm.full()[(row, row)] - p.p1).abs() < 1e-15);
        assert!((tm.full()[(row, idx(true, 9, 0))] - p.p2()).abs() < 1e-15);
        assert!((tm.full().row(row).sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn oracle_matches_hand_solution() {
        let tm = transition_matrix(&small()).unwrap();
        let pi = solve_dtmc_oracle(&tm).unwrap();
        assert!((pi.probs[0] - 0.5).abs() < 1e-12);
        assert!((pi.probs[1] - 0.25).abs() < 1e-12);
        assert!((pi.probs[2] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn oracle_single_state_chain() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let tm = TransitionMatrix {
            class1: one.clone(),
            class2: DMatrix::zeros(1, 1),
            full: one,
        };
        let pi = solve_dtmc_oracle(&tm).unwrap();
        assert_eq!(pi.probs, vec![1.0]);
    }

    #[test]
    fn oracle_handles_single_recurrent_state() {
        // p1 = 1 makes every state except the full class-1 pack transient.
        let p = MsjParams::new(1, 2, 2, 1.0, 1.0, 1.0).unwrap();
        let tm = transition_matrix(&p).unwrap();
        let pi = solve_dtmc_oracle(&tm).unwrap();
        assert!((pi.probs[2] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn oracle_agrees_with_product_form() {
        let cases = [
            (3, 10, 30, 0.5, 1.0, 1.0),
            (3, 10, 30, 0.5, 2.0, 1.0),
            (1, 4, 7, 0.3, 0.7, 2.3),
            (2, 9, 40, 0.8, 5.0, 0.04),
            (1, 10, 10, 0.2, 16.2, 8.1),
        ];
        for (n1, n2, n, p1, mu1, mu2) in cases {
            let p = MsjParams::new(n1, n2, n, mu1, mu2, p1).unwrap();
            let product = embedded_steady_state(&p).unwrap();
            let oracle = solve_dtmc_oracle(&transition_matrix(&p).unwrap()).unwrap();
            let diff = product
                .probs
                .iter()
                .zip(&oracle.probs)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-10, "{n1}-{n2}-{n}: max diff {diff}");
        }
    }

    #[test]
    fn ctmc_throughput_small_system() {
        let (dist, x) = ctmc_steady_state(&small()).unwrap();
        assert!((x - 8.0 / 7.0).abs() < 1e-12);
        assert!((dist.probs[0] - 4.0 / 7.0).abs() < 1e-12);
        assert!((dist.probs[1] - 2.0 / 7.0).abs() < 1e-12);
        assert!((dist.probs[2] - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn ctmc_throughput_degenerate_single_class() {
        // All servers packed with class-1 jobs forever.
        let p = MsjParams::new(2, 5, 10, 3.0, 1.0, 1.0).unwrap();
        let (_, x) = ctmc_steady_state(&p).unwrap();
        assert!((x - 5.0 * 3.0).abs() < 1e-12);
    }

    #[test]
    fn throughput_scales_with_rates() {
        for c in [1e-3, 1.0, 1e3] {
            let base = MsjParams::new(3, 10, 30, 2.0, 1.0, 0.5).unwrap();
            let scaled = MsjParams::new(3, 10, 30, 2.0 * c, c, 0.5).unwrap();
            let (_, x) = ctmc_steady_state(&base).unwrap();
            let (_, xc) = ctmc_steady_state(&scaled).unwrap();
            assert!((xc / x - c).abs() / c < 1e-12);
        }
    }

    #[test]
    fn wastage_small_and_degenerate() {
        assert!((saturated_wastage(&small()).unwrap() - 2.0 / 7.0).abs() < 1e-12);

        // Pure class-2 traffic packs perfectly when n2 divides n.
        let p = MsjParams::new(3, 10, 30, 1.0, 1.0, 0.0).unwrap();
        assert!(saturated_wastage(&p).unwrap().abs() < 1e-12);

        // Otherwise n mod n2 servers idle.
        let p = MsjParams::new(3, 8, 30, 1.0, 1.0, 0.0).unwrap();
        assert!((saturated_wastage(&p).unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn balance_residuals_small() {
        let report = verify_balance(&small(), 1e-14).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn balance_residuals_3_10_30() {
        let p = MsjParams::new(3, 10, 30, 2.0, 1.0, 0.5).unwrap();
        let report = verify_balance(&p, 1e-10).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn balance_detects_corruption() {
        let p = MsjParams::new(3, 10, 30, 2.0, 1.0, 0.5).unwrap();
        let mut pi = embedded_steady_state(&p).unwrap();
        pi.probs[4] += 1e-3;
        let tm = transition_matrix(&p).unwrap();
        let residual = max_stationarity_residual(&pi.probs, &pi.probs, tm.full());
        assert!(residual > 1e-4, "perturbation went unnoticed: {residual}");
    }

    #[test]
    fn ctmc_balance_residual_small() {
        let p = MsjParams::new(3, 10, 30, 2.0, 1.0, 0.5).unwrap();
        assert!(ctmc_balance_residual(&p).unwrap() < 1e-12);
    }

    #[test]
    fn steady_state_stable_under_rate_scaling() {
        let base = MsjParams::new(3, 10, 30, 2.0, 1.0, 0.37).unwrap();
        let pi = embedded_steady_state(&base).unwrap();
        let w = saturated_wastage(&base).unwrap();
        for c in [1e-3, 1e3] {
            let scaled = MsjParams::new(3, 10, 30, 2.0 * c, c, 0.37).unwrap();
            let pi_c = embedded_steady_state(&scaled).unwrap();
            for (a, b) in pi.probs.iter().zip(&pi_c.probs) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((saturated_wastage(&scaled).unwrap() - w).abs() < 1e-10);
        }
    }
}
