//! Multiclass single-service-rate model: every job needs `k` servers with
//! probability `p_k` and completes at a common exponential rate. The
//! saturated state is the phase vector of the `n` oldest jobs' demands, the
//! stationary distribution is the plain product of class probabilities, and
//! the saturated throughput doubles as the stability threshold.

use serde::Serialize;

use crate::error::{Error, Result};

const ENUMERATION_LIMIT: u128 = 10_000_000;

/// One demand class: a server count and its probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RmClass {
    pub servers: u32,
    pub prob: f64,
}

/// Parameters of the single-service-rate multiclass system.
///
/// Classes with zero probability are pruned at construction so that the
/// phase-space size `K^n` counts only demands that can occur.
#[derive(Debug, Clone, Serialize)]
pub struct RmParams {
    n: u32,
    mu: f64,
    classes: Vec<RmClass>,
}

impl RmParams {
    /// Builds from sparse `(servers, probability)` pairs.
    pub fn new(n: u32, mu: f64, demands: &[(u32, f64)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("n must be positive".into()));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "mu must be a positive finite rate (got {mu})"
            )));
        }
        let mut seen = std::collections::BTreeMap::new();
        for &(servers, prob) in demands {
            if !(prob >= 0.0 && prob.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "class probability must be non-negative (got {prob})"
                )));
            }
            if prob == 0.0 {
                continue;
            }
            if servers == 0 || servers > n {
                return Err(Error::InvalidParams(format!(
                    "class demand {servers} outside 1..={n}"
                )));
            }
            if seen.insert(servers, prob).is_some() {
                return Err(Error::InvalidParams(format!(
                    "duplicate class demand {servers}"
                )));
            }
        }
        let total: f64 = seen.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "class probabilities sum to {total}, not 1"
            )));
        }
        if seen.is_empty() {
            return Err(Error::InvalidParams(
                "no class has positive probability".into(),
            ));
        }
        Ok(Self {
            n,
            mu,
            classes: seen
                .into_iter()
                .map(|(servers, prob)| RmClass { servers, prob })
                .collect(),
        })
    }

    /// Builds from a dense vector where `probs[k-1]` is the probability of
    /// demanding `k` servers.
    pub fn from_probs(n: u32, mu: f64, probs: &[f64]) -> Result<Self> {
        let demands: Vec<(u32, f64)> = probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (i as u32 + 1, p))
            .collect();
        Self::new(n, mu, &demands)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn classes(&self) -> &[RmClass] {
        &self.classes
    }

    /// Number of distinct phase vectors, `K^n`.
    pub fn phase_space_size(&self) -> u128 {
        (self.classes.len() as u128).saturating_pow(self.n)
    }
}

/// Served-job count of a demand vector under strict FCFS: the longest prefix
/// whose demands fit in `n` servers. Jobs behind the first one that does not
/// fit are never considered.
pub fn sigma(demands: &[u32], n: u32) -> Result<u32> {
    let mut occupied: u64 = 0;
    let mut served = 0;
    for (i, &demand) in demands.iter().enumerate() {
        if demand == 0 {
            return Err(Error::InvalidParams(format!(
                "phase vector position {i} demands 0 servers"
            )));
        }
        if occupied + demand as u64 <= n as u64 {
            occupied += demand as u64;
            served += 1;
        } else {
            break;
        }
    }
    if served == 0 {
        // Only possible when the head job can never run at all.
        return Err(Error::InvalidParams(format!(
            "head job demands {} servers, more than n = {n}",
            demands[0]
        )));
    }
    Ok(served)
}

/// A full phase vector together with its served count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseVector {
    demands: Vec<u32>,
    served: u32,
}

impl PhaseVector {
    pub fn new(demands: Vec<u32>, n: u32) -> Result<Self> {
        let served = sigma(&demands, n)?;
        Ok(Self { demands, served })
    }

    pub fn demands(&self) -> &[u32] {
        &self.demands
    }

    pub fn served(&self) -> u32 {
        self.served
    }
}

/// Saturated throughput by exact summation over every phase vector:
/// `X = (sum_m prod_j p_{m_j} / (mu * sigma(m)))^-1`.
///
/// Deliberately brute-force; it is the oracle for [`rm_throughput_dp`].
pub fn rm_throughput_enumerate(params: &RmParams) -> Result<f64> {
    let size = params.phase_space_size();
    if size > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            size,
            limit: ENUMERATION_LIMIT,
        });
    }
    let k = params.classes.len();
    let n = params.n as usize;
    let mut digits = vec![0usize; n];
    let mut demands = vec![0u32; n];
    let mut total = 0.0;
    loop {
        let mut prob = 1.0;
        for (slot, &digit) in demands.iter_mut().zip(digits.iter()) {
            let class = params.classes[digit];
            *slot = class.servers;
            prob *= class.prob;
        }
        let served = sigma(&demands, params.n)?;
        total += prob / (params.mu * served as f64);

        // Odometer increment over the K^n vectors.
        let mut pos = 0;
        loop {
            if pos == n {
                return Ok(1.0 / total);
            }
            digits[pos] += 1;
            if digits[pos] < k {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// Saturated throughput via dynamic programming over prefix sums.
///
/// Tracks the probability that the first `j` jobs all entered service with a
/// given total demand; whenever the next job fails to fit, the served count
/// is settled at `j` and the remaining positions integrate out to 1.
pub fn rm_throughput_dp(params: &RmParams) -> f64 {
    let n = params.n as usize;
    let mut fitting = vec![0.0f64; n + 1];
    fitting[0] = 1.0;
    let mut mean_reciprocal = 0.0;
    for position in 1..=n {
        let mut next = vec![0.0f64; n + 1];
        let mut stopped = 0.0;
        for (sum, &mass) in fitting.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for class in &params.classes {
                let grown = sum + class.servers as usize;
                if grown <= n {
                    next[grown] += mass * class.prob;
                } else {
                    stopped += mass * class.prob;
                }
            }
        }
        if position >= 2 {
            mean_reciprocal += stopped / (position - 1) as f64;
        }
        fitting = next;
    }
    mean_reciprocal += fitting.iter().sum::<f64>() / n as f64;
    params.mu / mean_reciprocal
}

/// Stability verdict for a given arrival rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StabilityVerdict {
    Stable,
    Unstable,
    /// The arrival rate equals the threshold to within 1e-12 relative;
    /// behavior at exact equality is not determined.
    Boundary,
}

impl std::fmt::Display for StabilityVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StabilityVerdict::Stable => "stable",
            StabilityVerdict::Unstable => "unstable",
            StabilityVerdict::Boundary => "boundary",
        };
        f.write_str(s)
    }
}

/// Classifies an arrival rate against the saturated throughput.
pub fn rm_is_stable(params: &RmParams, lambda: f64) -> StabilityVerdict {
    let threshold = rm_throughput_dp(params);
    if (lambda - threshold).abs() <= 1e-12 * threshold {
        StabilityVerdict::Boundary
    } else if lambda < threshold {
        StabilityVerdict::Stable
    } else {
        StabilityVerdict::Unstable
    }
}
