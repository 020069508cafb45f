//! Event-driven simulation of the two-class FCFS multiserver-job system, in
//! both the saturated variant (inexhaustible queue, job classes sampled
//! lazily when they first matter) and the open variant (Poisson arrivals).
//! The simulator is the empirical cross-check for the analytical throughput
//! and stability threshold.

use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as RandDistribution, Exp};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{MsjParams, SaturatedState, StateSpace};
use crate::stability::lambda_naive;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JobClass {
    One,
    Two,
}

/// Saturated mode runs against an infinite queue; open mode feeds the system
/// a Poisson arrival stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SimMode {
    Saturated,
    Open { lambda: f64 },
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimConfig {
    pub params: MsjParams,
    pub mode: SimMode,
    /// Fully determines the run: identical configs give identical stats.
    pub seed: u64,
    /// Simulated time discarded before statistics start.
    pub warmup: f64,
    /// Total simulated time.
    pub horizon: f64,
    /// Batch count for batch-means standard errors.
    pub batches: usize,
}

impl SimConfig {
    /// Saturated-mode config with the conventional defaults: 10% warmup,
    /// 20 batches.
    pub fn saturated(params: MsjParams, seed: u64, horizon: f64) -> Self {
        Self {
            params,
            mode: SimMode::Saturated,
            seed,
            warmup: 0.1 * horizon,
            horizon,
            batches: 20,
        }
    }

    /// Open-mode config with the same defaults.
    pub fn open(params: MsjParams, lambda: f64, seed: u64, horizon: f64) -> Self {
        Self {
            params,
            mode: SimMode::Open { lambda },
            seed,
            warmup: 0.1 * horizon,
            horizon,
            batches: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.warmup >= 0.0 && self.horizon > self.warmup) {
            return Err(Error::InvalidParams(format!(
                "need horizon > warmup >= 0 (got warmup={}, horizon={})",
                self.warmup, self.horizon
            )));
        }
        if self.batches < 2 {
            return Err(Error::InvalidParams("need at least 2 batches".into()));
        }
        if let SimMode::Open { lambda } = self.mode {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "open mode needs a positive arrival rate (got {lambda})"
                )));
            }
        }
        Ok(())
    }
}

/// A point estimate with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    /// Completions per unit time over the measurement window.
    pub throughput: Estimate,
    /// Mean time from arrival to departure (open mode only).
    pub mean_response_time: Option<Estimate>,
    /// Time-average number of waiting jobs, blocking job included
    /// (open mode only; the saturated queue is infinite).
    pub mean_queue_length: Option<f64>,
    /// Time-average idle servers (saturated mode only).
    pub time_avg_wastage_saturated: Option<f64>,
    /// Time-average idle servers while the queue is nonempty
    /// (open mode only).
    pub time_avg_wastage_conditional: Option<f64>,
    pub completions_class1: u64,
    pub completions_class2: u64,
    /// Time fraction spent in each saturated state, aligned with the
    /// enumerated state space (saturated mode only).
    pub state_occupancy: Option<Vec<f64>>,
    /// Waiting jobs at the end of the run, blocking job included.
    pub final_queue_length: u64,
    /// Events processed (completions, plus arrivals in open mode).
    pub events: u64,
    /// Length of the measurement window, `horizon - warmup`.
    pub measured_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    Arrival,
    Completion { class: JobClass, arrival_time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    /// Schedule order, the deterministic tie-breaker for equal times.
    seq: u64,
    kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed so the max-heap pops the earliest event; times are finite.
        other
            .time
            .partial_cmp(&self.time)
            .expect("event times are finite")
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy)]
struct QueuedJob {
    class: JobClass,
    arrival_time: f64,
}

struct Engine<'a> {
    config: &'a SimConfig,
    space: StateSpace,
    rng: ChaCha8Rng,
    events: BinaryHeap<Event>,
    next_seq: u64,
    now: f64,
    in_service1: u32,
    in_service2: u32,
    free: u32,
    /// Open-mode FCFS queue; unused in saturated mode.
    queue: VecDeque<QueuedJob>,
    /// Saturated mode: whether a (lazily sampled) class-2 job blocks the
    /// head of the infinite queue.
    blocked: bool,
    // accumulators over the measurement window
    area_queue: f64,
    area_idle: f64,
    area_idle_queue_nonempty: f64,
    time_queue_nonempty: f64,
    state_time: Vec<f64>,
    completions1: u64,
    completions2: u64,
    batch_completions: Vec<u64>,
    batch_response_sum: Vec<f64>,
    batch_response_count: Vec<u64>,
    response_sum: f64,
    events_processed: u64,
}

impl<'a> Engine<'a> {
    fn new(config: &'a SimConfig) -> Result<Self> {
        config.validate()?;
        let space = StateSpace::enumerate(&config.params)?;
        let state_count = space.len();
        Ok(Self {
            config,
            space,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            events: BinaryHeap::new(),
            next_seq: 0,
            now: 0.0,
            in_service1: 0,
            in_service2: 0,
            free: config.params.n,
            queue: VecDeque::new(),
            blocked: false,
            area_queue: 0.0,
            area_idle: 0.0,
            area_idle_queue_nonempty: 0.0,
            time_queue_nonempty: 0.0,
            state_time: vec![0.0; state_count],
            completions1: 0,
            completions2: 0,
            batch_completions: vec![0; config.batches],
            batch_response_sum: vec![0.0; config.batches],
            batch_response_count: vec![0; config.batches],
            response_sum: 0.0,
            events_processed: 0,
        })
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.events.push(Event { time, seq, kind });
    }

    fn sample_exp(&mut self, rate: f64) -> f64 {
        Exp::new(rate).expect("positive rate").sample(&mut self.rng)
    }

    fn sample_class(&mut self) -> JobClass {
        if self.rng.gen::<f64>() < self.config.params.p1 {
            JobClass::One
        } else {
            JobClass::Two
        }
    }

    fn demand(&self, class: JobClass) -> u32 {
        match class {
            JobClass::One => self.config.params.n1,
            JobClass::Two => self.config.params.n2,
        }
    }

    fn admit(&mut self, class: JobClass, arrival_time: f64) {
        self.free -= self.demand(class);
        match class {
            JobClass::One => self.in_service1 += 1,
            JobClass::Two => self.in_service2 += 1,
        }
        let rate = match class {
            JobClass::One => self.config.params.mu1,
            JobClass::Two => self.config.params.mu2,
        };
        let duration = self.sample_exp(rate);
        self.schedule(
            self.now + duration,
            EventKind::Completion {
                class,
                arrival_time,
            },
        );
    }

    /// Saturated refill: admit from the infinite queue while something fits,
    /// sampling each job's class only at the moment it could matter. A
    /// sampled class-2 job that fits in at least `n1` but fewer than `n2`
    /// servers stays at the head as the blocking job.
    fn admit_saturated(&mut self) {
        let params = self.config.params;
        loop {
            if self.blocked {
                if self.free >= params.n2 {
                    self.blocked = false;
                    self.admit(JobClass::Two, self.now);
                } else {
                    return;
                }
            } else if self.free >= params.n1 {
                match self.sample_class() {
                    JobClass::One => self.admit(JobClass::One, self.now),
                    JobClass::Two => {
                        if self.free >= params.n2 {
                            self.admit(JobClass::Two, self.now);
                        } else {
                            self.blocked = true;
                            return;
                        }
                    }
                }
            } else {
                return;
            }
        }
    }

    /// Open-mode refill: strict FCFS, so admission stops at the first queued
    /// job that does not fit, even if a later one would.
    fn admit_open(&mut self) {
        while let Some(job) = self.queue.front().copied() {
            if self.free >= self.demand(job.class) {
                self.queue.pop_front();
                self.admit(job.class, job.arrival_time);
            } else {
                return;
            }
        }
    }

    fn queue_length(&self) -> u64 {
        match self.config.mode {
            SimMode::Saturated => self.blocked as u64,
            SimMode::Open { .. } => self.queue.len() as u64,
        }
    }

    /// Accumulates time-weighted statistics for the settled state occupying
    /// `[self.now, until]`, clipped to the measurement window.
    fn accumulate(&mut self, until: f64) -> Result<()> {
        let lo = self.now.max(self.config.warmup);
        let hi = until.min(self.config.horizon);
        if hi <= lo {
            return Ok(());
        }
        let dt = hi - lo;
        self.area_queue += dt * self.queue_length() as f64;
        self.area_idle += dt * self.free as f64;
        let queue_nonempty = match self.config.mode {
            SimMode::Saturated => true,
            SimMode::Open { .. } => !self.queue.is_empty(),
        };
        if queue_nonempty {
            self.time_queue_nonempty += dt;
            self.area_idle_queue_nonempty += dt * self.free as f64;
        }
        if matches!(self.config.mode, SimMode::Saturated) {
            let state = SaturatedState::new(self.blocked, self.in_service1, self.in_service2);
            let idx = self.space.index_of(&state).ok_or_else(|| {
                Error::Inconsistent(format!("simulator visited off-list state {state}"))
            })?;
            self.state_time[idx] += dt;
        }
        Ok(())
    }

    fn batch_index(&self, time: f64) -> usize {
        let window = self.config.horizon - self.config.warmup;
        let batch_len = window / self.config.batches as f64;
        (((time - self.config.warmup) / batch_len) as usize).min(self.config.batches - 1)
    }

    fn record_completion(&mut self, class: JobClass, arrival_time: f64) {
        if self.now <= self.config.warmup || self.now > self.config.horizon {
            return;
        }
        let batch = self.batch_index(self.now);
        self.batch_completions[batch] += 1;
        match class {
            JobClass::One => self.completions1 += 1,
            JobClass::Two => self.completions2 += 1,
        }
        if matches!(self.config.mode, SimMode::Open { .. }) {
            let response = self.now - arrival_time;
            self.response_sum += response;
            self.batch_response_sum[batch] += response;
            self.batch_response_count[batch] += 1;
        }
    }

    fn run(mut self) -> Result<SimStats> {
        match self.config.mode {
            SimMode::Saturated => self.admit_saturated(),
            SimMode::Open { lambda } => {
                let first = self.sample_exp(lambda);
                self.schedule(first, EventKind::Arrival);
            }
        }

        while let Some(event) = self.events.pop() {
            if event.time > self.config.horizon {
                self.accumulate(self.config.horizon)?;
                self.now = self.config.horizon;
                break;
            }
            self.accumulate(event.time)?;
            self.now = event.time;
            self.events_processed += 1;
            match event.kind {
                EventKind::Arrival => {
                    let SimMode::Open { lambda } = self.config.mode else {
                        return Err(Error::Inconsistent(
                            "arrival event in saturated mode".into(),
                        ));
                    };
                    let class = self.sample_class();
                    self.queue.push_back(QueuedJob {
                        class,
                        arrival_time: self.now,
                    });
                    self.admit_open();
                    let next = self.now + self.sample_exp(lambda);
                    self.schedule(next, EventKind::Arrival);
                }
                EventKind::Completion {
                    class,
                    arrival_time,
                } => {
                    match class {
                        JobClass::One => self.in_service1 -= 1,
                        JobClass::Two => self.in_service2 -= 1,
                    }
                    self.free += self.demand(class);
                    self.record_completion(class, arrival_time);
                    match self.config.mode {
                        SimMode::Saturated => self.admit_saturated(),
                        SimMode::Open { .. } => self.admit_open(),
                    }
                }
            }
        }

        Ok(self.finish())
    }

    fn finish(self) -> SimStats {
        let measured = self.config.horizon - self.config.warmup;
        let batch_len = measured / self.config.batches as f64;
        let total_completions = self.completions1 + self.completions2;

        let throughput_value = total_completions as f64 / measured;
        let batch_rates: Vec<f64> = self
            .batch_completions
            .iter()
            .map(|&c| c as f64 / batch_len)
            .collect();
        let throughput = Estimate {
            value: throughput_value,
            std_err: std_err_of_means(&batch_rates),
        };

        let open = matches!(self.config.mode, SimMode::Open { .. });
        let mean_response_time = if open {
            let total_count: u64 = self.batch_response_count.iter().sum();
            let batch_means: Vec<f64> = self
                .batch_response_sum
                .iter()
                .zip(&self.batch_response_count)
                .filter(|&(_, &c)| c > 0)
                .map(|(&s, &c)| s / c as f64)
                .collect();
            Some(Estimate {
                value: if total_count > 0 {
                    self.response_sum / total_count as f64
                } else {
                    0.0
                },
                std_err: std_err_of_means(&batch_means),
            })
        } else {
            None
        };

        SimStats {
            throughput,
            mean_response_time,
            mean_queue_length: open.then(|| self.area_queue / measured),
            time_avg_wastage_saturated: (!open).then(|| self.area_idle / measured),
            time_avg_wastage_conditional: open.then(|| {
                if self.time_queue_nonempty > 0.0 {
                    self.area_idle_queue_nonempty / self.time_queue_nonempty
                } else {
                    0.0
                }
            }),
            completions_class1: self.completions1,
            completions_class2: self.completions2,
            state_occupancy: (!open)
                .then(|| self.state_time.iter().map(|&t| t / measured).collect()),
            final_queue_length: self.queue_length(),
            events: self.events_processed,
            measured_time: measured,
        }
    }
}

fn std_err_of_means(batch_means: &[f64]) -> f64 {
    let b = batch_means.len();
    if b < 2 {
        return 0.0;
    }
    let mean = batch_means.iter().sum::<f64>() / b as f64;
    let var = batch_means
        .iter()
        .map(|&x| (x - mean) * (x - mean))
        .sum::<f64>()
        / (b - 1) as f64;
    (var / b as f64).sqrt()
}

/// Runs one simulation. Identical configs produce bit-identical statistics.
pub fn simulate(config: &SimConfig) -> Result<SimStats> {
    Engine::new(config)?.run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

/// Events to aim for in each stability probe run.
const PROBE_ARRIVALS: f64 = 250_000.0;

/// Classifies an arrival rate by running the open system at horizons `T` and
/// `2T` with the same seed (the longer run replays the shorter one exactly)
/// and looking for queue growth. Verdicts are deliberately conservative:
/// anything ambiguous is inconclusive.
fn stability_verdict(params: &MsjParams, lambda: f64, seed: u64) -> Result<Verdict> {
    let horizon = PROBE_ARRIVALS / lambda;
    let short = simulate(&SimConfig::open(*params, lambda, seed, horizon))?;
    let long = simulate(&SimConfig::open(*params, lambda, seed, 2.0 * horizon))?;

    let f_short = short.final_queue_length as f64;
    let f_long = long.final_queue_length as f64;
    let q_short = short.mean_queue_length.unwrap_or(0.0);
    let q_long = long.mean_queue_length.unwrap_or(0.0);

    // An unstable rate drifts by (lambda - threshold) * horizon jobs, which
    // dwarfs these bars for any rate the bisection actually probes; a stable
    // queue excursion this large is vanishingly rare.
    let growing = f_long > 400.0 && f_long > 1.6 * f_short && q_long > 1.5 * q_short;
    let bounded = f_long < 100.0 && q_long < 1.3 * q_short + 5.0;
    Ok(match (growing, bounded) {
        (true, false) => Verdict::Unstable,
        (false, true) => Verdict::Stable,
        _ => Verdict::Inconclusive,
    })
}

/// Brackets the stability threshold by bisecting between empirically
/// stable and unstable arrival rates. The returned interval always contains
/// the true threshold as long as each verdict is correct; when a probe is
/// inconclusive the current (wider) bracket is returned rather than
/// guessing.
pub fn estimate_lambda_star_empirical(
    params: &MsjParams,
    tolerance: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    params.validate()?;
    if tolerance <= 0.0 || tolerance.is_nan() {
        return Err(Error::InvalidParams("tolerance must be positive".into()));
    }
    // The naive rate bounds the threshold from above, so this bracket is
    // guaranteed to contain it.
    let mut lo = 0.0;
    let mut hi = lambda_naive(params) * 1.02;
    let mut step = 0u64;
    while hi - lo > tolerance && step < 40 {
        let mid = 0.5 * (lo + hi);
        match stability_verdict(params, mid, seed.wrapping_add(step))? {
            Verdict::Stable => lo = mid,
            Verdict::Unstable => hi = mid,
            Verdict::Inconclusive => break,
        }
        step += 1;
    }
    Ok((lo, hi))
}
