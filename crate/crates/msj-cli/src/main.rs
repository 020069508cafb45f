//! Command-line front end: analyze a system, sweep the class mix or the
//! service-rate ratio, solve the multiclass single-rate model, run the
//! simulator, or run the verification suite.
//!
//! Output is deterministic: identical flags (including seeds) produce
//! byte-identical bytes. Exit codes: 0 success, 1 model/invariant error,
//! 2 invalid flags, 3 verification residual over tolerance.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use msj::grid;
use msj::model::MsjParams;
use msj::rm::{rm_is_stable, rm_throughput_dp, rm_throughput_enumerate, RmParams};
use msj::saturated::{
    ctmc_balance_residual, embedded_steady_state, solve_dtmc_oracle, transition_matrix,
    verify_balance, BalanceReport,
};
use msj::sim::{simulate, SimConfig, SimMode};
use msj::stability::{report, sweep_mix, sweep_ratio};
use msj::Error;

#[derive(Parser)]
#[command(
    name = "msj",
    version,
    about = "Stability and wastage of two-class FCFS multiserver-job systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact stability report for one system.
    Analyze {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Sweep the class mix p2, reporting the stability frontier per mix.
    SweepMix {
        #[command(flatten)]
        system: SystemArgsNoP1,
        /// Grid of p2 values, as lo:hi:lin|log:count.
        #[arg(long, default_value = "0:1:lin:512", value_parser = parse_range)]
        p2s: Grid,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Sweep the service-rate ratio mu2/mu1 (mu1 pinned to 1), reporting
    /// saturated wastage per ratio.
    SweepRatio {
        #[command(flatten)]
        system: SystemArgsNoRates,
        /// Grid of rate ratios, as lo:hi:lin|log:count.
        #[arg(long, default_value = "1e-3:1e3:log:400", value_parser = parse_range)]
        ratios: Grid,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Throughput and stability of the multiclass single-service-rate model.
    Rm {
        /// Total servers.
        #[arg(long)]
        n: u32,
        /// Common completion rate.
        #[arg(long)]
        mu: f64,
        /// Class as servers:probability; repeat per class.
        #[arg(long = "class", value_parser = parse_class, required = true)]
        classes: Vec<(u32, f64)>,
        /// Arrival rate to classify (optional).
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Run the discrete-event simulator.
    Simulate {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, value_enum, default_value_t = Mode::Saturated)]
        mode: Mode,
        /// Arrival rate (open mode only).
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Simulated time to run for.
        #[arg(long)]
        horizon: f64,
        /// Simulated time to discard; defaults to 10% of the horizon.
        #[arg(long)]
        warmup: Option<f64>,
        #[arg(long, default_value_t = 20)]
        batches: usize,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Verify the product form against the brute-force oracle and the
    /// stationary equations. Exits 3 if any residual exceeds tolerance.
    Verify {
        #[command(flatten)]
        system: SystemArgs,
        /// Balance-residual tolerance.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Oracle max-abs-difference tolerance.
        #[arg(long, default_value_t = 1e-9)]
        oracle_tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Args)]
struct SystemArgs {
    /// Servers per class-1 job.
    #[arg(long)]
    n1: u32,
    /// Servers per class-2 job.
    #[arg(long)]
    n2: u32,
    /// Total servers.
    #[arg(long)]
    n: u32,
    /// Class-1 completion rate.
    #[arg(long)]
    mu1: f64,
    /// Class-2 completion rate.
    #[arg(long)]
    mu2: f64,
    /// Probability that a job is class 1.
    #[arg(long)]
    p1: f64,
}

impl SystemArgs {
    fn params(&self) -> Result<MsjParams, Error> {
        MsjParams::new(self.n1, self.n2, self.n, self.mu1, self.mu2, self.p1)
    }
}

#[derive(Args)]
struct SystemArgsNoP1 {
    #[arg(long)]
    n1: u32,
    #[arg(long)]
    n2: u32,
    #[arg(long)]
    n: u32,
    #[arg(long)]
    mu1: f64,
    #[arg(long)]
    mu2: f64,
}

#[derive(Args)]
struct SystemArgsNoRates {
    #[arg(long)]
    n1: u32,
    #[arg(long)]
    n2: u32,
    #[arg(long)]
    n: u32,
    /// Probability that a job is class 1.
    #[arg(long)]
    p1: f64,
}

#[derive(Args)]
struct OutputArgs {
    /// Write here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Saturated,
    Open,
}

/// An evaluation grid parsed from the range grammar.
#[derive(Clone)]
struct Grid(Vec<f64>);

/// Parses the range grammar lo:hi:lin|log:count.
fn parse_range(spec: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, scale, count] = parts.as_slice() else {
        return Err(format!("expected lo:hi:lin|log:count, got {spec:?}"));
    };
    let lo: f64 = lo.parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: f64 = hi.parse().map_err(|e| format!("bad upper bound: {e}"))?;
    let count: usize = count.parse().map_err(|e| format!("bad count: {e}"))?;
    if count == 0 {
        return Err("count must be positive".into());
    }
    match *scale {
        "lin" => Ok(Grid(grid::linear(lo, hi, count))),
        "log" => {
            if lo <= 0.0 || hi <= 0.0 {
                return Err("log range needs positive endpoints".into());
            }
            Ok(Grid(grid::logarithmic(lo, hi, count)))
        }
        other => Err(format!("scale must be lin or log, got {other:?}")),
    }
}

/// Parses a servers:probability class spec.
fn parse_class(spec: &str) -> Result<(u32, f64), String> {
    let (servers, prob) = spec
        .split_once(':')
        .ok_or_else(|| format!("expected servers:probability, got {spec:?}"))?;
    let servers: u32 = servers
        .parse()
        .map_err(|e| format!("bad server count: {e}"))?;
    let prob: f64 = prob.parse().map_err(|e| format!("bad probability: {e}"))?;
    Ok((servers, prob))
}

/// 17 significant digits, enough to round-trip a double exactly.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn emit(out: &OutputArgs, content: &str) -> std::io::Result<()> {
    match &out.output {
        Some(path) => std::fs::write(path, content),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn csv_rows(header: &str, rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut out = String::new();
    out.push_str(header);
    out.push_str("\r\n");
    for row in rows {
        let mut first = true;
        for value in row {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "{}", fmt_f64(value));
        }
        out.push_str("\r\n");
    }
    out
}

#[derive(Serialize)]
struct MixSweepOutput {
    n1: u32,
    n2: u32,
    n: u32,
    mu1: f64,
    mu2: f64,
    rows: Vec<msj::stability::MixSweepRow>,
}

#[derive(Serialize)]
struct RatioSweepOutput {
    n1: u32,
    n2: u32,
    n: u32,
    p1: f64,
    rows: Vec<msj::stability::RatioSweepRow>,
}

#[derive(Serialize)]
struct RmOutput {
    params: RmParams,
    throughput: f64,
    /// Exact enumeration, when the phase space is small enough to sum.
    throughput_enumerated: Option<f64>,
    lambda: Option<f64>,
    verdict: Option<String>,
}

#[derive(Serialize)]
struct SimOutput {
    config: SimConfig,
    stats: msj::sim::SimStats,
}

#[derive(Serialize)]
struct VerifyOutput {
    params: MsjParams,
    balance: BalanceReport,
    ctmc_balance_residual: f64,
    oracle_max_abs_diff: f64,
    oracle_tol: f64,
    passed: bool,
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Analyze {
            system,
            format,
            out,
        } => {
            let params = system.params()?;
            let rep = report(&params)?;
            let content = match format {
                Format::Json => to_json(&rep),
                Format::Csv => csv_rows(
                    "n1,n2,n,mu1,mu2,p1,lambda_star,lambda_naive,mean_server_seconds,limiting_wastage,utilization",
                    std::iter::once(vec![
                        params.n1 as f64,
                        params.n2 as f64,
                        params.n as f64,
                        params.mu1,
                        params.mu2,
                        params.p1,
                        rep.lambda_star,
                        rep.lambda_naive,
                        rep.mean_server_seconds,
                        rep.limiting_wastage,
                        rep.utilization,
                    ]),
                ),
            };
            emit(&out, &content).map_err(io_error)?;
            Ok(0)
        }
        Command::SweepMix {
            system,
            p2s,
            format,
            out,
        } => {
            let base = MsjParams::new(system.n1, system.n2, system.n, system.mu1, system.mu2, 0.5)?;
            let rows = sweep_mix(&base, &p2s.0)?;
            let content = match format {
                Format::Json => to_json(&MixSweepOutput {
                    n1: system.n1,
                    n2: system.n2,
                    n: system.n,
                    mu1: system.mu1,
                    mu2: system.mu2,
                    rows,
                }),
                Format::Csv => csv_rows(
                    "p2,lambda1_star,lambda2_star,wastage,utilization,naive_lambda1,naive_lambda2",
                    rows.iter().map(|r| {
                        vec![
                            r.p2,
                            r.lambda1_star,
                            r.lambda2_star,
                            r.wastage,
                            r.utilization,
                            r.naive_lambda1,
                            r.naive_lambda2,
                        ]
                    }),
                ),
            };
            emit(&out, &content).map_err(io_error)?;
            Ok(0)
        }
        Command::SweepRatio {
            system,
            ratios,
            format,
            out,
        } => {
            let base = MsjParams::new(system.n1, system.n2, system.n, 1.0, 1.0, system.p1)?;
            let rows = sweep_ratio(&base, &ratios.0)?;
            let content = match format {
                Format::Json => to_json(&RatioSweepOutput {
                    n1: system.n1,
                    n2: system.n2,
                    n: system.n,
                    p1: system.p1,
                    rows,
                }),
                Format::Csv => csv_rows(
                    "ratio,wastage",
                    rows.iter().map(|r| vec![r.ratio, r.wastage]),
                ),
            };
            emit(&out, &content).map_err(io_error)?;
            Ok(0)
        }
        Command::Rm {
            n,
            mu,
            classes,
            lambda,
            out,
        } => {
            let params = RmParams::new(n, mu, &classes)?;
            let throughput = rm_throughput_dp(&params);
            let throughput_enumerated = match rm_throughput_enumerate(&params) {
                Ok(x) => Some(x),
                Err(Error::EnumerationTooLarge { .. }) => None,
                Err(e) => return Err(e),
            };
            let verdict = lambda.map(|l| rm_is_stable(&params, l).to_string());
            let content = to_json(&RmOutput {
                params,
                throughput,
                throughput_enumerated,
                lambda,
                verdict,
            });
            emit(&out, &content).map_err(io_error)?;
            Ok(0)
        }
        Command::Simulate {
            system,
            mode,
            lambda,
            seed,
            horizon,
            warmup,
            batches,
            out,
        } => {
            let params = system.params()?;
            let mode = match (mode, lambda) {
                (Mode::Saturated, None) => SimMode::Saturated,
                (Mode::Saturated, Some(_)) => {
                    return Err(Error::InvalidParams(
                        "--lambda only applies to open mode".into(),
                    ))
                }
                (Mode::Open, Some(lambda)) => SimMode::Open { lambda },
                (Mode::Open, None) => {
                    return Err(Error::InvalidParams("open mode needs --lambda".into()))
                }
            };
            let config = SimConfig {
                params,
                mode,
                seed,
                warmup: warmup.unwrap_or(0.1 * horizon),
                horizon,
                batches,
            };
            let stats = simulate(&config)?;
            emit(&out, &to_json(&SimOutput { config, stats })).map_err(io_error)?;
            Ok(0)
        }
        Command::Verify {
            system,
            tol,
            oracle_tol,
            out,
        } => {
            let params = system.params()?;
            let balance = verify_balance(&params, tol)?;
            let ctmc_residual = ctmc_balance_residual(&params)?;
            let product = embedded_steady_state(&params)?;
            let oracle = solve_dtmc_oracle(&transition_matrix(&params)?)?;
            let oracle_diff = product
                .probs
                .iter()
                .zip(&oracle.probs)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let passed = balance.passed() && ctmc_residual < tol && oracle_diff < oracle_tol;
            let content = to_json(&VerifyOutput {
                params,
                balance,
                ctmc_balance_residual: ctmc_residual,
                oracle_max_abs_diff: oracle_diff,
                oracle_tol,
                passed,
            });
            emit(&out, &content).map_err(io_error)?;
            Ok(if passed { 0 } else { 3 })
        }
    }
}

fn io_error(e: std::io::Error) -> Error {
    Error::SolveFailed(format!("writing output failed: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
            ExitCode::from(1)
        }
    }
}
