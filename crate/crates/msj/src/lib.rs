//! Exact stability analysis of two-class FCFS multiserver-job systems.
//!
//! Jobs of class 1 hold `n1` servers and jobs of class 2 hold `n2 > n1`
//! servers, each for an exponential duration with its own rate, out of `n`
//! servers serving a FCFS queue. Head-of-line blocking makes such systems
//! non-work-conserving: servers idle while jobs wait, and the stability
//! region shrinks accordingly.
//!
//! The crate computes, exactly:
//!
//! * the saturated system's stationary distribution in closed product form
//!   ([`saturated::embedded_steady_state`]), cross-checked by a brute-force
//!   linear solve ([`saturated::solve_dtmc_oracle`]);
//! * its throughput, which is precisely the stability threshold of the open
//!   system ([`stability::lambda_star`]);
//! * the expected number of wasted (idle) servers at the edge of stability
//!   and the sweeps that expose its nonmonotonic behavior
//!   ([`stability::sweep_mix`], [`stability::sweep_ratio`]);
//! * the stability threshold of the multiclass single-service-rate model
//!   ([`rm::rm_throughput_dp`]), which doubles as an independent cross-check
//!   of the two-class solution when the rates coincide.
//!
//! A discrete-event simulator ([`sim::simulate`]) provides the empirical
//! counterpart for both the saturated and open systems.

pub mod error;
pub mod grid;
pub mod model;
mod parallel;
pub mod rm;
pub mod saturated;
pub mod sim;
pub mod stability;

pub use error::{Error, Result};
pub use model::{
    completion_fractions, enumerate_states, mean_server_seconds, s1, s2, validate, MsjParams,
    SaturatedState, StateSpace,
};
pub use saturated::{
    ctmc_steady_state, embedded_steady_state, saturated_wastage, solve_dtmc_oracle,
    transition_matrix, verify_balance, BalanceReport, ChainKind, Distribution, TransitionMatrix,
};
pub use stability::{lambda_naive, lambda_star, report, sweep_mix, sweep_ratio, StabilityReport};
