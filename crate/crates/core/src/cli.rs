//! Command-line front end.
//!
//! Structured results are printed as JSON, curves as CSV with headers.
//! Exit codes: 0 success, 1 failure, 2 usage error, 3 infeasible budget.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::advisor::{boundary_rows, Advisor};
use crate::constrained::{relay_curve, solve_constrained, ConstrainedSolution};
use crate::error::{Error, Result};
use crate::heuristic::{compare, distance_set};
use crate::model::{CostParams, Instance};
use crate::osla::{grid_scan, solve_unconstrained};
use crate::placement::PlacementSet;
use crate::renewal::eval_cost;
use crate::sim::{episode_rng, monte_carlo, run_episode, EpisodeResult, McEstimate, Policy};
use crate::verify::{default_matrix, verify_instance, InstanceReport};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "relay-placement", version, about = "Optimal as-you-go relay placement on a random lattice path")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Hop cost `d(r) = pm + gamma r^eta`.
#[derive(Debug, Clone, Args)]
pub struct CostArgs {
    #[arg(long, default_value_t = CostParams::DEFAULT_P_M)]
    pub pm: f64,
    #[arg(long, default_value_t = CostParams::DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, default_value_t = CostParams::DEFAULT_ETA)]
    pub eta: f64,
}

#[derive(Debug, Clone, Args)]
pub struct InstanceArgs {
    /// Probability that the path ends at each step.
    #[arg(long)]
    pub p: f64,
    /// Probability that a step goes East.
    #[arg(long)]
    pub q: f64,
    /// Price of one relay.
    #[arg(long)]
    pub lambda: f64,
    #[command(flatten)]
    pub cost: CostArgs,
}

impl InstanceArgs {
    fn instance(&self) -> Result<Instance> {
        Instance::power(self.p, self.q, self.lambda, self.cost.pm, self.cost.gamma, self.cost.eta)
    }
}

#[derive(Debug, Clone, Args)]
pub struct PathArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub q: f64,
    #[command(flatten)]
    pub cost: CostArgs,
}

impl PathArgs {
    fn instance(&self, lambda: f64) -> Result<Instance> {
        Instance::power(self.p, self.q, lambda, self.cost.pm, self.cost.gamma, self.cost.eta)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the relay-priced problem and print the result record.
    Solve {
        #[command(flatten)]
        inst: InstanceArgs,
        /// Also write the record to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample g(h) on a grid (CSV: h,g_h).
    ScanG {
        #[command(flatten)]
        inst: InstanceArgs,
        /// Upper end of the grid; defaults to 2 g* + 1.
        #[arg(long)]
        h_max: Option<f64>,
        /// Number of grid intervals.
        #[arg(long, default_value_t = 400)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relay count, hop cost and total cost against the relay price
    /// (CSV: lambda,en,ec,j).
    SweepLambda {
        #[command(flatten)]
        path: PathArgs,
        #[arg(long, default_value_t = 0.0)]
        lambda_min: f64,
        #[arg(long, default_value_t = 100.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal cost against the East probability (CSV: q,j).
    SweepQ {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        lambda: f64,
        #[command(flatten)]
        cost: CostArgs,
        /// Number of grid intervals on [0, 1].
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal boundaries for several exponents (CSV: eta,n,m_star).
    Boundaries {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = CostParams::DEFAULT_P_M)]
        pm: f64,
        #[arg(long, default_value_t = CostParams::DEFAULT_GAMMA)]
        gamma: f64,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        etas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimize cost subject to an expected relay budget.
    Constrained {
        #[command(flatten)]
        path: PathArgs,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal against constant-distance constrained cost
    /// (CSV: rho,cost_opt,cost_heur).
    Heuristic {
        #[command(flatten)]
        path: PathArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,3,4,5,6,8,10")]
        rhos: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimate of a policy.
    Simulate {
        #[command(flatten)]
        inst: InstanceArgs,
        /// optimal | heuristic:<r_th> | constrained:<rho> | file:<path>
        #[arg(long, default_value = "optimal")]
        policy: String,
        #[arg(long, default_value_t = 100_000)]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite on one instance, or on the default matrix
    /// when no instance is given.
    Verify {
        #[arg(long, requires_all = ["q", "lambda"])]
        p: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        cost: CostArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the advisor HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Directory of static assets served at every other path.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Append-only session log, replayed on start.
        #[arg(long)]
        event_log: Option<PathBuf>,
    },
}

/// Result record of `solve`; also accepted by `simulate --policy file:`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveRecord {
    pub p: f64,
    pub q: f64,
    pub lambda: f64,
    pub eta: f64,
    pub p_m: f64,
    pub gamma: f64,
    pub g_star: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
    pub expected_relays: f64,
    pub expected_cost: f64,
    pub boundary: Vec<(u64, u64)>,
    pub set: PlacementSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateRecord {
    pub policy: String,
    /// Renewal values of a deterministic policy, for comparison.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_relays: Option<f64>,
    pub estimate: McEstimate,
    /// Episode 0 of the run, in full.
    pub first_episode: EpisodeResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyRecord {
    pub passed: bool,
    pub instances: Vec<InstanceReport>,
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(out: &Option<PathBuf>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    ignore_broken_pipe(writeln!(io::stdout().lock(), "{text}"))?;
    if let Some(path) = out {
        std::fs::write(path, format!("{text}\n"))?;
    }
    Ok(())
}

/// A closed downstream pipe (`| head`) is not a failure.
fn ignore_broken_pipe(r: io::Result<()>) -> io::Result<()> {
    match r {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => other,
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Io(io::Error::other(format!("{other:?}"))),
    }
}

fn write_csv<R: Serialize>(out: &Option<PathBuf>, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink(out)?);
    w.write_record(header).map_err(csv_error)?;
    let written = rows.into_iter().try_for_each(|row| w.serialize(row).map_err(csv_error));
    match written {
        Err(Error::Io(e)) => ignore_broken_pipe(Err(e))?,
        other => other?,
    }
    ignore_broken_pipe(w.flush())?;
    Ok(())
}

fn linspace(lo: f64, hi: f64, intervals: usize) -> Vec<f64> {
    let n = intervals.max(1);
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

/// Reads a policy from a `solve` record, a constrained solution, a policy
/// record or a bare placement set.
pub fn read_policy_file(path: &std::path::Path) -> Result<Policy> {
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if value.get("set_under").is_some() {
        let sol: ConstrainedSolution = serde_json::from_value(value)?;
        return Ok(Policy::from(&sol));
    }
    if value.get("kind").is_some() {
        return Ok(serde_json::from_value(value)?);
    }
    if let Some(set) = value.get("set") {
        return Ok(Policy::from(serde_json::from_value::<PlacementSet>(set.clone())?));
    }
    Ok(Policy::from(serde_json::from_value::<PlacementSet>(value)?))
}

fn resolve_policy_arg(arg: &str, inst: &Instance) -> Result<Policy> {
    let bad = || Error::param("policy", format!("expected optimal, heuristic:<r>, constrained:<rho> or file:<path>, got `{arg}`"));
    let number = |s: &str| s.parse::<f64>().map_err(|_| bad());
    match arg.split_once(':') {
        None if arg == "optimal" => Ok(Policy::from(solve_unconstrained(inst)?.optimal_set)),
        Some(("heuristic", r)) => Ok(Policy::from(distance_set(number(r)?)?)),
        Some(("constrained", rho)) => Ok(Policy::from(&solve_constrained(inst, number(rho)?)?)),
        Some(("file", path)) => read_policy_file(path.as_ref()),
        _ => Err(bad()),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { inst, out } => {
            let i = inst.instance()?;
            let sol = solve_unconstrained(&i)?;
            let ev = *sol.evaluation();
            write_json(
                &out,
                &SolveRecord {
                    p: inst.p,
                    q: inst.q,
                    lambda: inst.lambda,
                    eta: inst.cost.eta,
                    p_m: inst.cost.pm,
                    gamma: inst.cost.gamma,
                    g_star: sol.g_star,
                    iterations: sol.iterations,
                    trace: sol.trace,
                    expected_relays: ev.expected_relays,
                    expected_cost: ev.expected_cost,
                    boundary: boundary_rows(&sol.optimal_set),
                    set: sol.optimal_set,
                },
            )
        }
        Command::ScanG { inst, h_max, points, out } => {
            let i = inst.instance()?;
            let h_max = match h_max {
                Some(h) => h,
                None => 2.0 * solve_unconstrained(&i)?.g_star + 1.0,
            };
            let scan = grid_scan(&i, h_max, h_max / points.max(1) as f64)?;
            write_csv(&out, &["h", "g_h"], scan.points)
        }
        Command::SweepLambda {
            path,
            lambda_min,
            lambda_max,
            points,
            out,
        } => {
            let curve = relay_curve(&path.instance(0.0)?, &linspace(lambda_min, lambda_max, points))?;
            write_csv(
                &out,
                &["lambda", "en", "ec", "j"],
                curve.iter().map(|c| (c.lambda, c.expected_relays, c.expected_cost, c.total_cost)),
            )
        }
        Command::SweepQ {
            p,
            lambda,
            cost,
            points,
            out,
        } => {
            let rows = linspace(0.0, 1.0, points)
                .into_par_iter()
                .map(|q| {
                    let i = Instance::power(p, q, lambda, cost.pm, cost.gamma, cost.eta)?;
                    Ok((q, solve_unconstrained(&i)?.g_star))
                })
                .collect::<Result<Vec<_>>>()?;
            write_csv(&out, &["q", "j"], rows)
        }
        Command::Boundaries {
            p,
            q,
            lambda,
            pm,
            gamma,
            etas,
            out,
        } => {
            let mut rows = Vec::new();
            for eta in etas {
                let set = solve_unconstrained(&Instance::power(p, q, lambda, pm, gamma, eta)?)?.optimal_set;
                rows.extend(boundary_rows(&set).into_iter().map(|(n, m)| (eta, n, m)));
            }
            write_csv(&out, &["eta", "n", "m_star"], rows)
        }
        Command::Constrained { path, rho, out } => {
            let sol = solve_constrained(&path.instance(0.0)?, rho)?;
            write_json(&out, &sol)
        }
        Command::Heuristic { path, rhos, out } => {
            let rows = compare(&path.instance(0.0)?, &rhos)?;
            write_csv(
                &out,
                &["rho", "cost_opt", "cost_heur"],
                rows.iter().map(|r| (r.rho, r.cost_optimal, r.cost_heuristic)),
            )
        }
        Command::Simulate {
            inst,
            policy,
            episodes,
            seed,
            out,
        } => {
            let i = inst.instance()?;
            let resolved = resolve_policy_arg(&policy, &i)?;
            let (analytic_g, analytic_relays) = match &resolved {
                Policy::Deterministic { set } => {
                    let ev = eval_cost(set, &i)?;
                    (Some(ev.g), Some(ev.expected_relays))
                }
                Policy::Mixed { .. } => (None, None),
            };
            let estimate = monte_carlo(&resolved, &i, episodes, seed)?;
            let first_episode = run_episode(&resolved, &i.path, &i.cost, &mut episode_rng(seed, 0));
            write_json(
                &out,
                &SimulateRecord {
                    policy,
                    analytic_g,
                    analytic_relays,
                    estimate,
                    first_episode,
                },
            )
        }
        Command::Verify {
            p,
            q,
            lambda,
            cost,
            out,
        } => {
            let instances = match (p, q, lambda) {
                (Some(p), Some(q), Some(lambda)) => vec![Instance::power(p, q, lambda, cost.pm, cost.gamma, cost.eta)?],
                _ => default_matrix(),
            };
            let reports = instances
                .par_iter()
                .map(verify_instance)
                .collect::<Result<Vec<_>>>()?;
            for r in &reports {
                for c in &r.checks {
                    eprintln!(
                        "{} p={} q={} lambda={} eta={} {}: {}",
                        if c.passed { "PASS" } else { "FAIL" },
                        r.p,
                        r.q,
                        r.lambda,
                        r.eta,
                        c.name,
                        c.detail
                    );
                }
            }
            let passed = reports.iter().all(InstanceReport::passed);
            write_json(
                &out,
                &VerifyRecord {
                    passed,
                    instances: reports,
                },
            )?;
            if passed {
                Ok(())
            } else {
                Err(Error::Inconsistent("invariant suite failed".into()))
            }
        }
        Command::Serve {
            host,
            port,
            static_dir,
            event_log,
        } => {
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| Error::param("host", format!("{e}")))?;
            let advisor = match event_log {
                Some(path) => Advisor::with_log(path)?,
                None => Advisor::new(),
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::service::serve(addr, Arc::new(advisor), static_dir))
        }
    }
}

/// Parses `args`, runs the command and maps errors to exit codes.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Infeasible { .. } => EXIT_INFEASIBLE,
                Error::InvalidParameter { .. } => EXIT_USAGE,
                _ => EXIT_FAILURE,
            })
        }
    }
}
