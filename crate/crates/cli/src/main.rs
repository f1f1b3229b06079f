//! `shuttlesim` command-line front end.
//!
//! Exit codes: 0 success, 2 bad flags, 3 invalid input, 4 scenario fault.

use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shuttlesim_core::demand::{generate_requests, write_requests};
use shuttlesim_core::engine::bundle::REQUESTS_FILE;
use shuttlesim_core::engine::figures::{figure, COVERAGE_FILE};
use shuttlesim_core::engine::{expand_grid, run_sweep, write_bundle, GridSpec, SweepOptions};
use shuttlesim_core::planner::{coverage_matrix, load_parcels, plan_stops};
use shuttlesim_core::{load_network, run_scenario, Error, NodeId, OdMatrix, ScenarioConfig, StopPlan};

const STOPS_FILE: &str = "stops.json";

#[derive(Parser)]
#[command(name = "shuttlesim", version, about = "On-demand electric shuttle simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutDir {
    /// Output directory.
    #[arg(long, env = "SHUTTLESIM_OUT")]
    out: PathBuf,
    /// Write into a non-empty output directory, replacing same-named files.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Coverage matrix over k and walk time, plus the stop plan for the
    /// smallest k meeting the coverage target.
    PlanStops {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        parcels: PathBuf,
        /// Transit stop node ids.
        #[arg(long, value_delimiter = ',', required = true)]
        transit: Vec<u32>,
        #[arg(long, default_value_t = 8)]
        k_min: usize,
        #[arg(long, default_value_t = 24)]
        k_max: usize,
        /// Walk-time thresholds in minutes.
        #[arg(long, value_delimiter = ',', default_value = "3,4,5,6,7")]
        walk: Vec<f64>,
        /// Walk time the plan must cover, in minutes.
        #[arg(long, default_value_t = 6.0)]
        max_walk: f64,
        #[arg(long, default_value_t = 0.9)]
        target: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Timestamped requests from an OD matrix.
    GenDemand {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        stops: PathBuf,
        #[arg(long)]
        od: PathBuf,
        /// Fraction of boundary-crossing trips that use transit.
        #[arg(long, default_value_t = 0.01)]
        share: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: OutDir,
    },
    /// One scenario; writes its result bundle.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Every scenario of a grid, one bundle per run plus aggregate CSVs.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        /// Use seeds 1..=N instead of the grid's seed list.
        #[arg(long)]
        seeds: Option<u64>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        out: OutDir,
    },
    /// A scenario with and without its shuttles in background traffic.
    Impact {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the scenario's background demand multiplier.
        #[arg(long)]
        scale: Option<f64>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Plot-ready CSV series for one figure.
    EmitFigures {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        fig: u32,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Fault(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 3,
            Failure::Fault(_) => 4,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_scenario_fault() {
            Failure::Fault(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

type Outcome = Result<(), Failure>;

fn prepare_dir(out: &OutDir) -> Outcome {
    let dir = &out.out;
    if dir.is_file() {
        return Err(Failure::Input(format!("output path {} is a file", dir.display())));
    }
    let occupied = fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(false);
    if occupied && !out.force {
        return Err(Failure::Input(format!(
            "output directory {} is not empty; pass --force to overwrite",
            dir.display()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::PlanStops {
            network,
            parcels,
            transit,
            k_min,
            k_max,
            walk,
            max_walk,
            target,
            seed,
            out,
        } => {
            if k_min == 0 || k_min > k_max {
                return Err(Failure::Input(format!("invalid k range {k_min}..={k_max}")));
            }
            if !walk.contains(&max_walk) {
                return Err(Failure::Input(format!("--max-walk {max_walk} is not among --walk {walk:?}")));
            }
            let net = load_network(&network)?;
            let parcels = load_parcels(&parcels)?;
            let ks: Vec<usize> = (k_min..=k_max).collect();
            let matrix = coverage_matrix(&net, &parcels, &ks, &walk, seed)?;
            let k = matrix.select_k(max_walk, target).ok_or_else(|| {
                Failure::Input(format!("no k in {k_min}..={k_max} covers {target} of parcels within {max_walk} min"))
            })?;
            let transit = transit.into_iter().map(NodeId).collect();
            let plan = plan_stops(&net, &parcels, k, transit, max_walk, seed)?;
            prepare_dir(&out)?;
            matrix.save(out.out.join(COVERAGE_FILE))?;
            plan.save(out.out.join(STOPS_FILE))?;
            println!(
                "k = {k}, coverage {:.3} within {max_walk} min, depot node {}",
                matrix.get(k, max_walk).unwrap_or(0.0),
                plan.depot.0
            );
            Ok(())
        }
        Command::GenDemand {
            network,
            stops,
            od,
            share,
            seed,
            out,
        } => {
            let net = load_network(&network)?;
            let plan = StopPlan::load(&stops)?;
            let od = OdMatrix::load(&od)?;
            let reqs = generate_requests(&od, &plan, &net, share, seed)?;
            prepare_dir(&out)?;
            write_requests(out.out.join(REQUESTS_FILE), &reqs)?;
            let fm = reqs.iter().filter(|r| r.kind == shuttlesim_core::TripKind::FM).count();
            println!("{fm} FM and {} LM requests", reqs.len() - fm);
            Ok(())
        }
        Command::Run { config, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            simulate(&cfg, &out)
        }
        Command::Impact { config, scale, out } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            cfg.background_traffic = true;
            if let Some(s) = scale {
                cfg.background_scale = s;
            }
            cfg.validate()?;
            simulate(&cfg, &out)
        }
        Command::Sweep { grid, seeds, jobs, out } => {
            let grid = GridSpec::load(&grid)?;
            let seeds: Vec<u64> = seeds.map(|n| (1..=n).collect()).unwrap_or_default();
            let configs = expand_grid(&grid, &seeds)?;
            prepare_dir(&out)?;
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let outcome = run_sweep(
                &configs,
                &SweepOptions {
                    jobs,
                    out: Some(out.out.clone()),
                },
            )?;
            let failed: Vec<String> = outcome
                .runs
                .iter()
                .filter_map(|r| r.error.as_ref().map(|e| format!("{}: {e}", r.name)))
                .collect();
            println!(
                "{} runs, {} cells, {} failed",
                outcome.runs.len(),
                outcome.aggregate.len(),
                failed.len()
            );
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Fault(failed.join("\n")))
            }
        }
        Command::EmitFigures { input, fig, out, force } => {
            let series = figure(fig, &input)?;
            match out {
                None => series.write_csv(io::stdout().lock())?,
                Some(path) => {
                    if path.exists() && !force {
                        return Err(Failure::Input(format!(
                            "{} exists; pass --force to overwrite",
                            path.display()
                        )));
                    }
                    let file = fs::File::create(&path)
                        .map_err(|e| Failure::Input(format!("cannot create {}: {e}", path.display())))?;
                    series.write_csv(io::BufWriter::new(file))?;
                }
            }
            Ok(())
        }
    }
}

fn simulate(cfg: &ScenarioConfig, out: &OutDir) -> Outcome {
    let result = run_scenario(cfg)?;
    prepare_dir(out)?;
    write_bundle(&out.out, &result)?;
    let m = &result.metrics;
    println!(
        "accepted {}/{} ({:.3}), median wait {} min, distance {:.2} mi",
        m.rider.accepted,
        m.rider.total_requests,
        m.rider.accepted_ratio,
        m.rider.median_wait_min.map_or("n/a".into(), |w| format!("{w:.2}")),
        m.vehicle.total_distance_mi
    );
    if let Some(t) = &m.traffic {
        println!(
            "background speed reduction {:.4} mph, delay ratio increase {:.4}",
            t.speed_reduction_mph, t.delay_ratio_increase
        );
    }
    if result.invariants.is_clean() {
        Ok(())
    } else {
        Err(Failure::Fault(format!(
            "invariant violations in {}: {}",
            out.out.display(),
            result.invariants.violations.join("; ")
        )))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Input(msg) => eprintln!("error: {msg}"),
                Failure::Fault(msg) => eprintln!("scenario fault: {msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}
