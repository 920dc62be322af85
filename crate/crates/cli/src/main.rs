//! Command-line front end: plan a scenario file, or sweep its payload mass.
//!
//! Log verbosity comes from `RUST_LOG` (e.g. `RUST_LOG=debug`).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use contact_planner::bench::{export_run, load_scenario, run_scenario, RunOptions, Scenario};

const EXIT_PLAN_FAILED: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "contact-planner", version, about = "Contact-aware motion planning for planar arms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan one scenario and print its report as JSON.
    Plan {
        scenario: PathBuf,
        /// Directory for the trajectory, torque and report files.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: Flags,
    },
    /// Re-plan a scenario with increasing payload masses, in parallel.
    Sweep {
        scenario: PathBuf,
        /// Number of payload masses to try.
        #[arg(long, default_value_t = 5)]
        steps: usize,
        /// Payload mass added per step, kg.
        #[arg(long, default_value_t = 0.5)]
        increment: f64,
        /// First payload mass, kg; defaults to the scenario's.
        #[arg(long)]
        start_mass: Option<f64>,
        /// One sub-directory of exports per payload mass.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Args)]
struct Flags {
    /// Evaluate every edge eagerly.
    #[arg(long)]
    no_lazy: bool,
    /// Skip the RRT-Connect seed path.
    #[arg(long)]
    no_seed: bool,
    /// Discard optimizations that miss their target cell.
    #[arg(long)]
    no_reuse: bool,
    /// Remove every contact pair (free-space baseline).
    #[arg(long)]
    no_contact: bool,
    /// Override the scenario's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Wall-clock budget for the search, seconds.
    #[arg(long)]
    time_budget: Option<f64>,
}

impl Flags {
    fn options(&self) -> RunOptions {
        RunOptions {
            no_lazy: self.no_lazy,
            no_seed: self.no_seed,
            no_reuse: self.no_reuse,
            no_contact: self.no_contact,
            seed: self.seed,
            time_budget: self.time_budget,
        }
    }
}

fn load(path: &PathBuf) -> Result<Scenario, ExitCode> {
    load_scenario(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })
}

fn plan(path: PathBuf, out: Option<PathBuf>, flags: Flags) -> ExitCode {
    let scenario = match load(&path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if let Some(t) = flags.time_budget {
        if !(t > 0.0) {
            eprintln!("error: --time-budget must be positive");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let run = run_scenario(&scenario, &flags.options());
    println!("{}", serde_json::to_string_pretty(&run.report).expect("report serializes"));
    if let Some(dir) = out {
        if let Err(e) = export_run(&run, &dir) {
            eprintln!("error: writing {}: {e}", dir.display());
            return ExitCode::FAILURE;
        }
    }
    if run.report.success {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_PLAN_FAILED)
    }
}

fn sweep(path: PathBuf, steps: usize, increment: f64, start_mass: Option<f64>, out: Option<PathBuf>, flags: Flags) -> ExitCode {
    let base = match load(&path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let first = start_mass.unwrap_or(base.arm.payload_mass);
    if !(first >= 0.0 && increment >= 0.0) {
        eprintln!("error: payload masses must be non-negative");
        return ExitCode::from(EXIT_CONFIG);
    }
    let options = flags.options();
    let runs: Vec<_> = (0..steps)
        .into_par_iter()
        .map(|i| {
            let mass = first + increment * i as f64;
            let mut s = base.clone();
            s.arm.payload_mass = mass;
            s.name = format!("{}@{mass}kg", base.name);
            (mass, run_scenario(&s, &options))
        })
        .collect();

    println!("payload_kg,success,wall_time_s,expansions,trr,max_abs_tau,torque_violation");
    let mut all_ok = true;
    for (mass, run) in &runs {
        let r = &run.report;
        let trr = r.trr.map(|t| t.to_string()).unwrap_or_default();
        println!("{mass},{},{:.3},{},{trr},{},{}", r.success, r.wall_time, r.stats.expansions, r.max_abs_tau, r.violations.torque);
        all_ok &= r.success;
        if let Some(dir) = &out {
            let sub = dir.join(format!("payload_{mass}"));
            if let Err(e) = export_run(run, &sub) {
                eprintln!("error: writing {}: {e}", sub.display());
                return ExitCode::FAILURE;
            }
        }
    }
    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_PLAN_FAILED)
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Plan { scenario, out, flags } => plan(scenario, out, flags),
        Command::Sweep { scenario, steps, increment, start_mass, out, flags } => sweep(scenario, steps, increment, start_mass, out, flags),
    }
}
