//! Two-class multiserver-job system model: parameters, the saturated state
//! space, the canonical states with a given per-class count in service, and
//! per-state completion fractions.
//!
//! Jobs of class 1 occupy `n1` servers for an exponential duration with rate
//! `mu1`; class 2 jobs occupy `n2 > n1` servers at rate `mu2`. The system has
//! `n >= n2` servers and serves an infinite FCFS queue whose job classes are
//! i.i.d. (class 1 with probability `p1`). A saturated state records only the
//! jobs in service plus whether a class-2 job is blocking the head of the
//! queue; there is exactly one such state for each possible number of class-1
//! jobs in service.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the two-class multiserver-job system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsjParams {
    /// Servers held by one class-1 job.
    pub n1: u32,
    /// Servers held by one class-2 job.
    pub n2: u32,
    /// Total servers.
    pub n: u32,
    /// Class-1 completion rate (1/time).
    pub mu1: f64,
    /// Class-2 completion rate (1/time).
    pub mu2: f64,
    /// Probability that a job is class 1.
    pub p1: f64,
}

impl MsjParams {
    pub fn new(n1: u32, n2: u32, n: u32, mu1: f64, mu2: f64, p1: f64) -> Result<Self> {
        let params = Self {
            n1,
            n2,
            n,
            mu1,
            mu2,
            p1,
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks every structural invariant: `n1 < n2 <= n`, positive rates,
    /// `p1` in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 {
            return Err(Error::InvalidParams("n1 must be positive".into()));
        }
        if self.n1 >= self.n2 {
            return Err(Error::InvalidParams(format!(
                "n1 must be < n2 (got n1={}, n2={})",
                self.n1, self.n2
            )));
        }
        if self.n2 > self.n {
            return Err(Error::InvalidParams(format!(
                "n2 must be <= n (got n2={}, n={})",
                self.n2, self.n
            )));
        }
        if !(self.mu1 > 0.0 && self.mu1.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "mu1 must be a positive finite rate (got {})",
                self.mu1
            )));
        }
        if !(self.mu2 > 0.0 && self.mu2.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "mu2 must be a positive finite rate (got {})",
                self.mu2
            )));
        }
        if !(0.0..=1.0).contains(&self.p1) {
            return Err(Error::InvalidParams(format!(
                "p1 must lie in [0, 1] (got {})",
                self.p1
            )));
        }
        Ok(())
    }

    /// Probability that a job is class 2.
    pub fn p2(&self) -> f64 {
        1.0 - self.p1
    }

    /// Largest possible number of class-1 jobs in service.
    pub fn max_class1(&self) -> u32 {
        self.n / self.n1
    }

    /// Largest possible number of class-2 jobs in service.
    pub fn max_class2(&self) -> u32 {
        self.n / self.n2
    }
}

/// Validates parameters; see [`MsjParams::validate`].
pub fn validate(params: &MsjParams) -> Result<()> {
    params.validate()
}

/// A state of the saturated system: the per-class counts in service and
/// whether a class-2 job is blocking the head of the queue.
///
/// Writing `free = n - class1*n1 - class2*n2`, a valid state has either
/// `free < n1` (servers full: nothing fits, not blocked) or
/// `n1 <= free < n2` (a class-1 job would fit but the class-2 job at the
/// head of the queue does not, so it blocks).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SaturatedState {
    /// Whether a class-2 job blocks the head of the queue.
    pub blocked: bool,
    /// Class-1 jobs in service.
    pub class1: u32,
    /// Class-2 jobs in service.
    pub class2: u32,
}

impl SaturatedState {
    pub fn new(blocked: bool, class1: u32, class2: u32) -> Self {
        Self {
            blocked,
            class1,
            class2,
        }
    }

    /// Unoccupied servers, `n - class1*n1 - class2*n2`. Signed so that
    /// invariant checks can detect overcommitted states.
    pub fn free_servers(&self, params: &MsjParams) -> i64 {
        params.n as i64
            - self.class1 as i64 * params.n1 as i64
            - self.class2 as i64 * params.n2 as i64
    }

    /// Total completion rate in this state.
    pub fn completion_rate(&self, params: &MsjParams) -> f64 {
        self.class1 as f64 * params.mu1 + self.class2 as f64 * params.mu2
    }

    pub fn check_invariants(&self, params: &MsjParams) -> Result<()> {
        let free = self.free_servers(params);
        if free < 0 {
            return Err(Error::InvalidParams(format!(
                "state {self} overcommits servers (free = {free})"
            )));
        }
        let (lo, hi) = if self.blocked {
            (params.n1 as i64, params.n2 as i64)
        } else {
            (0, params.n1 as i64)
        };
        if free < lo || free >= hi {
            return Err(Error::InvalidParams(format!(
                "state {self} has {free} free servers, outside [{lo}, {hi})"
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for SaturatedState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}, {}, {}]",
            self.blocked as u8, self.class1, self.class2
        )
    }
}

/// The unique saturated state with exactly `class1` class-1 jobs in service.
///
/// Closed form for the greedy rule "add class-2 jobs until the servers are
/// full or the queue is blocked": with `r = n - class1*n1` servers left,
/// `class2 = r / n2` class-2 jobs fit, and the remainder decides blocking.
pub fn s1(class1: u32, params: &MsjParams) -> Result<SaturatedState> {
    if class1 > params.max_class1() {
        return Err(Error::OutOfRange {
            what: "class-1 count",
            value: class1 as u64,
            max: params.max_class1() as u64,
        });
    }
    let remaining = params.n - class1 * params.n1;
    let class2 = remaining / params.n2;
    let rem = remaining % params.n2;
    Ok(SaturatedState {
        blocked: rem >= params.n1,
        class1,
        class2,
    })
}

/// The unique non-blocked saturated state with exactly `class2` class-2 jobs
/// in service: class-1 jobs fill all remaining room.
pub fn s2(class2: u32, params: &MsjParams) -> Result<SaturatedState> {
    if class2 > params.max_class2() {
        return Err(Error::OutOfRange {
            what: "class-2 count",
            value: class2 as u64,
            max: params.max_class2() as u64,
        });
    }
    Ok(SaturatedState {
        blocked: false,
        class1: (params.n - class2 * params.n2) / params.n1,
        class2,
    })
}

/// The full saturated state space, ordered by class-1 count so that the
/// state with `a` class-1 jobs in service sits at index `a`.
#[derive(Debug, Clone)]
pub struct StateSpace {
    params: MsjParams,
    states: Vec<SaturatedState>,
}

impl StateSpace {
    pub fn enumerate(params: &MsjParams) -> Result<Self> {
        params.validate()?;
        let states = (0..=params.max_class1())
            .map(|a| s1(a, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            params: *params,
            states,
        })
    }

    pub fn params(&self) -> &MsjParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[SaturatedState] {
        &self.states
    }

    /// Position of a state, exploiting uniqueness per class-1 count.
    /// Returns `None` for triples that are not part of the space.
    pub fn index_of(&self, state: &SaturatedState) -> Option<usize> {
        let idx = state.class1 as usize;
        (self.states.get(idx) == Some(state)).then_some(idx)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SaturatedState> {
        self.states.iter()
    }
}

impl std::ops::Index<usize> for StateSpace {
    type Output = SaturatedState;
    fn index(&self, i: usize) -> &SaturatedState {
        &self.states[i]
    }
}

/// Enumerates the saturated state space `[s1(0), s1(1), ..., s1(a_max)]`.
pub fn enumerate_states(params: &MsjParams) -> Result<StateSpace> {
    StateSpace::enumerate(params)
}

/// Probabilities that the next completion is class 1 resp. class 2:
/// `f1 = a*mu1 / (a*mu1 + b*mu2)` and `f2 = 1 - f1`.
pub fn completion_fractions(state: &SaturatedState, params: &MsjParams) -> Result<(f64, f64)> {
    if state.class1 == 0 && state.class2 == 0 {
        return Err(Error::EmptyService);
    }
    let r1 = state.class1 as f64 * params.mu1;
    let r2 = state.class2 as f64 * params.mu2;
    Ok((r1 / (r1 + r2), r2 / (r1 + r2)))
}

/// Mean server-seconds demanded per job: `p1*n1/mu1 + p2*n2/mu2`.
pub fn mean_server_seconds(params: &MsjParams) -> f64 {
    params.p1 * params.n1 as f64 / params.mu1 + params.p2() * params.n2 as f64 / params.mu2
}
