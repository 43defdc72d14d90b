use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use cfn_cli::{export_figures, run_scenario, summarize, RunOptions, Scenario};
use cfn_core::embedding::validate;
use cfn_core::{
    build_model, evaluate_power, solve, ExportFormat, Formulation, MilpOptions, PhysicalGraph, Placement,
    PowerBreakdown, SolveOptions, Vsr,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cfn", version, about = "Power-minimizing placement of video service requests in a cloud-fog network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print its power breakdown.
    Solve {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        time_limit: Option<f64>,
        /// Search threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Directory for placement.toml, vsrs.toml and power.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario sweep and write result, summary and figure tables.
    Sweep {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds replacing the scenario's.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Seconds per point, replacing the scenario's limits.
        #[arg(long)]
        time_limit: Option<f64>,
        /// Points solved in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        no_cdc: bool,
    },
    /// Write the placement model of one instance as LP or MPS text.
    ExportModel {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value = "lp")]
        format: ExportFormat,
        /// Restrict flows to the fixed routes between processing nodes.
        #[arg(long)]
        paths: bool,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a placement file against an instance and print its power.
    Validate {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        placement: PathBuf,
    },
    /// Rebuild summary and figure tables from an existing sweep directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct InstanceArgs {
    /// Scenario file; the built-in single-source scenario when absent.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    no_cdc: bool,
    /// Request file; generated from --seed and --n when absent.
    #[arg(long)]
    vsrs: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    n: usize,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

const INVALID: u8 = 1;
const INFEASIBLE: u8 = 2;
const INTERNAL: u8 = 3;

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        use cfn_core::Error as E;
        let code = match error.chain().find_map(|e| e.downcast_ref::<E>()) {
            Some(E::IncompletePlacement(_) | E::CapacityViolation(_) | E::Assignment(..)) => INFEASIBLE,
            Some(E::ModelBuild(_) | E::NonIntegral(_) | E::EnumerationCap { .. } | E::NoPath { .. }) => INTERNAL,
            _ => INVALID,
        };
        Failure { code, error }
    }
}

impl From<cfn_core::Error> for Failure {
    fn from(error: cfn_core::Error) -> Self {
        anyhow::Error::from(error).into()
    }
}

fn fail(code: u8, error: anyhow::Error) -> Failure {
    Failure { code, error }
}

type Outcome = Result<(), Failure>;

fn load_scenario(path: Option<&Path>, no_cdc: bool) -> anyhow::Result<Scenario> {
    let s = match path {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    Ok(if no_cdc { s.without_cdc() } else { s })
}

fn instance(a: &InstanceArgs) -> anyhow::Result<(Scenario, PhysicalGraph, Vec<Vsr>)> {
    let s = load_scenario(a.scenario.as_deref(), a.no_cdc)?;
    let g = s.graph()?;
    let v = match &a.vsrs {
        Some(p) => cfn_core::vsr::load(p)?,
        None => s.vsrs(&g, a.seed, a.n)?,
    };
    Ok((s, g, v))
}

fn print_power(p: &PowerBreakdown) {
    println!("{:<10} {:>14} {:>14} {:>14}", "layer", "network W", "processing W", "GFLOPS");
    for (layer, l) in &p.layers {
        println!("{:<10} {:>14.6} {:>14.6} {:>14.3}", layer.as_str(), l.network, l.processing, l.workload);
    }
    println!("total {:.6} W (network {:.6} W, processing {:.6} W)", p.total, p.network, p.processing);
}

fn cmd_solve(a: &InstanceArgs, time_limit: Option<f64>, jobs: usize, out: Option<&Path>) -> Outcome {
    let (s, g, v) = instance(a)?;
    let opts = SolveOptions {
        time_limit: time_limit.or(s.time_limit_for(v.len())),
        worker_count: jobs.max(1),
        ..SolveOptions::default()
    };
    let r = solve(&g, &v, &opts)?;
    println!("status {} gap {:.3e} nodes {} time {:.3} s", r.status, r.gap, r.nodes_explored, r.wall_time);
    if !r.status.has_solution() {
        return Err(fail(INFEASIBLE, anyhow!("no feasible placement for {} requests", v.len())));
    }
    print_power(&r.power);
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        r.placement.save(dir.join("placement.toml"))?;
        cfn_core::vsr::save(&v, dir.join("vsrs.toml"))?;
        fs::write(dir.join("power.csv"), r.power.to_csv()).context("writing power.csv")?;
    }
    Ok(())
}

fn write_reports(out: &Path) -> Outcome {
    let rows = cfn_cli::load_rows(out)?;
    let summary = summarize(&rows);
    fs::write(out.join("summary.txt"), summary.to_string()).context("writing summary.txt")?;
    print!("{summary}");
    export_figures(&rows, out).map_err(|e| fail(INTERNAL, e))?;
    Ok(())
}

fn cmd_sweep(
    scenario: Option<&Path>,
    out: &Path,
    seeds: Option<Vec<u64>>,
    time_limit: Option<f64>,
    jobs: usize,
    no_cdc: bool,
) -> Outcome {
    let mut s = load_scenario(scenario, no_cdc)?;
    if let Some(seeds) = seeds {
        s.seeds = seeds;
    }
    s.validate()?;
    let opts = RunOptions { jobs: jobs.max(1), out_dir: Some(out.to_path_buf()), time_limit, workers: 1 };
    let rows = run_scenario(&s, &opts).map_err(|e| fail(INTERNAL, e))?;
    let failed = rows.iter().filter(|r| r.status.starts_with("error")).count();
    if failed > 0 {
        log::warn!("{failed} rows recorded an error");
    }
    write_reports(out)
}

fn cmd_export(a: &InstanceArgs, format: ExportFormat, paths: bool, out: Option<&Path>) -> Outcome {
    let (_, g, v) = instance(a)?;
    let formulation = if paths { Formulation::Paths } else { Formulation::Full };
    let model = build_model(&g, &v, &MilpOptions { formulation }).map_err(|e| fail(INTERNAL, e.into()))?;
    let text = model.export(format);
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        // A closed pipe downstream is not a failure.
        None => {
            let _ = std::io::stdout().lock().write_all(text.as_bytes());
        }
    }
    Ok(())
}

fn cmd_validate(a: &InstanceArgs, placement: &Path) -> Outcome {
    let (_, g, v) = instance(a)?;
    let p = Placement::load(placement).with_context(|| format!("reading {}", placement.display()))?;
    let violations = validate(&p, &v, &g);
    if !violations.is_empty() {
        for x in &violations {
            println!("violation: {x}");
        }
        return Err(fail(INFEASIBLE, anyhow!("{} violations", violations.len())));
    }
    let power = evaluate_power(&p, &v, &g)?;
    println!("valid");
    print_power(&power);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { INVALID } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Solve { instance, time_limit, jobs, out } => cmd_solve(instance, *time_limit, *jobs, out.as_deref()),
        Command::Sweep { scenario, out, seeds, time_limit, jobs, no_cdc } => {
            cmd_sweep(scenario.as_deref(), out, seeds.clone(), *time_limit, *jobs, *no_cdc)
        }
        Command::ExportModel { instance, format, paths, out } => cmd_export(instance, *format, *paths, out.as_deref()),
        Command::Validate { instance, placement } => cmd_validate(instance, placement),
        Command::Report { out } => write_reports(out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
