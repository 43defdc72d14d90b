//! Sweep execution with resumable, order-independent CSV output.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{Context, Result};
use cfn_core::embedding::Layer;
use cfn_core::{baseline_cdc, solve, PhysicalGraph, SolveOptions, SolveResult};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;

pub const RESULTS_FILE: &str = "results.csv";
pub const TIMINGS_FILE: &str = "timings.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approach {
    Cfn,
    Baseline,
}

impl Approach {
    pub fn as_str(self) -> &'static str {
        match self {
            Approach::Cfn => "cfn",
            Approach::Baseline => "baseline",
        }
    }
}

/// One solved point. Power in watts, workload in GFLOPS; all NaN when the
/// point has no solution. `wall_time_s` and `nodes` go to the timings file
/// so that the results file depends on the inputs only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub cdc: bool,
    pub seed: u64,
    pub n_vsrs: usize,
    pub approach: Approach,
    pub status: String,
    pub total_w: f64,
    pub network_w: f64,
    pub processing_w: f64,
    pub net_access_w: f64,
    pub net_metro_w: f64,
    pub net_core_w: f64,
    pub pr_iot_w: f64,
    pub pr_af_w: f64,
    pub pr_mf_w: f64,
    pub pr_cdc_w: f64,
    pub iot_gflops: f64,
    pub af_gflops: f64,
    pub mf_gflops: f64,
    pub cdc_gflops: f64,
    /// Sum of every request's workload.
    pub demand_gflops: f64,
    pub gap: f64,
    #[serde(skip)]
    pub nodes: u64,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl ResultRow {
    pub fn solved(&self) -> bool {
        matches!(self.status.as_str(), "optimal" | "feasible-timeout" | "feasible")
    }

    fn key(&self) -> (String, u64, usize, Approach) {
        (self.scenario.clone(), self.seed, self.n_vsrs, self.approach)
    }

    fn empty(s: &Scenario, seed: u64, n: usize, approach: Approach, status: String, demand: f64) -> ResultRow {
        let nan = f64::NAN;
        ResultRow {
            scenario: s.name.clone(),
            cdc: s.cdc_present,
            seed,
            n_vsrs: n,
            approach,
            status,
            total_w: nan,
            network_w: nan,
            processing_w: nan,
            net_access_w: nan,
            net_metro_w: nan,
            net_core_w: nan,
            pr_iot_w: nan,
            pr_af_w: nan,
            pr_mf_w: nan,
            pr_cdc_w: nan,
            iot_gflops: nan,
            af_gflops: nan,
            mf_gflops: nan,
            cdc_gflops: nan,
            demand_gflops: demand,
            gap: nan,
            nodes: 0,
            wall_time_s: 0.0,
        }
    }

    fn from_result(s: &Scenario, seed: u64, n: usize, approach: Approach, r: &SolveResult, demand: f64) -> ResultRow {
        let mut row = ResultRow::empty(s, seed, n, approach, r.status.to_string(), demand);
        row.nodes = r.nodes_explored;
        row.wall_time_s = r.wall_time;
        if !r.status.has_solution() {
            return row;
        }
        let p = &r.power;
        let l = |layer: Layer| p.layer(layer);
        row.total_w = p.total;
        row.network_w = p.network;
        row.processing_w = p.processing;
        row.net_access_w = l(Layer::Access).network;
        row.net_metro_w = l(Layer::Metro).network;
        row.net_core_w = l(Layer::Core).network;
        row.pr_iot_w = l(Layer::Iot).processing;
        row.pr_af_w = l(Layer::AccessFog).processing;
        row.pr_mf_w = l(Layer::MetroFog).processing;
        row.pr_cdc_w = l(Layer::Cdc).processing;
        row.iot_gflops = l(Layer::Iot).workload;
        row.af_gflops = l(Layer::AccessFog).workload;
        row.mf_gflops = l(Layer::MetroFog).workload;
        row.cdc_gflops = l(Layer::Cdc).workload;
        row.gap = r.gap;
        row
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Points solved in parallel.
    pub jobs: usize,
    /// Where results and timings are kept; points already there are skipped.
    pub out_dir: Option<PathBuf>,
    /// Replaces the scenario's per-point limits.
    pub time_limit: Option<f64>,
    /// Search threads per point.
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { jobs: 1, out_dir: None, time_limit: None, workers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TimingRow {
    scenario: String,
    seed: u64,
    n_vsrs: usize,
    approach: Approach,
    nodes: u64,
    wall_time_s: f64,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize().collect::<std::result::Result<Vec<T>, _>>().with_context(|| format!("parsing {}", path.display()))
}

/// Rows previously written to `dir`.
pub fn load_rows(dir: &Path) -> Result<Vec<ResultRow>> {
    read_csv(&dir.join(RESULTS_FILE))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&tmp)?;
        w.write_record(header)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub const RESULT_COLUMNS: [&str; 22] = [
    "scenario",
    "cdc",
    "seed",
    "n_vsrs",
    "approach",
    "status",
    "total_w",
    "network_w",
    "processing_w",
    "net_access_w",
    "net_metro_w",
    "net_core_w",
    "pr_iot_w",
    "pr_af_w",
    "pr_mf_w",
    "pr_cdc_w",
    "iot_gflops",
    "af_gflops",
    "mf_gflops",
    "cdc_gflops",
    "demand_gflops",
    "gap",
];

const TIMING_COLUMNS: [&str; 6] = ["scenario", "seed", "n_vsrs", "approach", "nodes", "wall_time_s"];

/// Appends rows as points finish, so an interrupted sweep can resume.
struct Journal {
    results: csv::Writer<File>,
    timings: csv::Writer<File>,
}

impl Journal {
    fn open(dir: &Path) -> Result<Journal> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let open = |name: &str, header: &[&str]| -> Result<csv::Writer<File>> {
            let path = dir.join(name);
            let fresh = !path.exists() || fs::metadata(&path)?.len() == 0;
            let file = OpenOptions::new().create(true).append(true).open(&path)?;
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            if fresh {
                w.write_record(header)?;
                w.flush()?;
            }
            Ok(w)
        };
        Ok(Journal { results: open(RESULTS_FILE, &RESULT_COLUMNS)?, timings: open(TIMINGS_FILE, &TIMING_COLUMNS)? })
    }

    fn append(&mut self, rows: &[ResultRow]) -> Result<()> {
        for r in rows {
            self.results.serialize(r)?;
            self.timings.serialize(timing(r))?;
        }
        self.results.flush()?;
        self.timings.flush()?;
        Ok(())
    }
}

fn timing(r: &ResultRow) -> TimingRow {
    TimingRow {
        scenario: r.scenario.clone(),
        seed: r.seed,
        n_vsrs: r.n_vsrs,
        approach: r.approach,
        nodes: r.nodes,
        wall_time_s: r.wall_time_s,
    }
}

fn run_point(s: &Scenario, graph: &PhysicalGraph, seed: u64, n: usize, opts: &RunOptions) -> Vec<ResultRow> {
    let vsrs = match s.vsrs(graph, seed, n) {
        Ok(v) => v,
        Err(e) => return vec![ResultRow::empty(s, seed, n, Approach::Cfn, format!("error: {e}"), f64::NAN)],
    };
    let demand = cfn_core::units::stable_sum(vsrs.iter().map(|r| r.workload()));
    let solve_opts = SolveOptions {
        time_limit: opts.time_limit.or(s.time_limit_for(n)),
        worker_count: opts.workers.max(1),
        ..SolveOptions::default()
    };
    let start = Instant::now();
    let mut rows = vec![match solve(graph, &vsrs, &solve_opts) {
        Ok(r) => ResultRow::from_result(s, seed, n, Approach::Cfn, &r, demand),
        Err(e) => ResultRow::empty(s, seed, n, Approach::Cfn, format!("error: {e}"), demand),
    }];
    if s.cdc_present {
        rows.push(match baseline_cdc(graph, &vsrs) {
            Ok(r) => ResultRow::from_result(s, seed, n, Approach::Baseline, &r, demand),
            Err(e) => ResultRow::empty(s, seed, n, Approach::Baseline, format!("error: {e}"), demand),
        });
    }
    log::info!(
        "{} seed {seed} n {n}: {} {:.3} W in {:.2} s",
        s.name,
        rows[0].status,
        rows[0].total_w,
        start.elapsed().as_secs_f64()
    );
    rows
}

/// Solves every `(seed, n)` point of `scenario`, in parallel over
/// `opts.jobs` threads. With an output directory, points already recorded
/// there are reused and the final files hold every scenario's rows sorted by
/// scenario, seed, count and approach.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<Vec<ResultRow>> {
    scenario.validate()?;
    let graph = scenario.graph()?;
    let mut previous = Vec::new();
    let mut previous_timings: Vec<TimingRow> = Vec::new();
    if let Some(dir) = &opts.out_dir {
        previous = load_rows(dir)?;
        previous_timings = read_csv(&dir.join(TIMINGS_FILE))?;
    }
    let have: BTreeSet<(u64, usize, Approach)> = previous
        .iter()
        .filter(|r| r.scenario == scenario.name)
        .map(|r| (r.seed, r.n_vsrs, r.approach))
        .collect();
    let complete = |seed: u64, n: usize| {
        have.contains(&(seed, n, Approach::Cfn)) && (!scenario.cdc_present || have.contains(&(seed, n, Approach::Baseline)))
    };
    // Keep only whole points from earlier runs.
    previous.retain(|r| r.scenario != scenario.name || complete(r.seed, r.n_vsrs));
    let points: Vec<(u64, usize)> = scenario
        .seeds
        .iter()
        .flat_map(|&seed| scenario.vsr_sweep.iter().map(move |&n| (seed, n)))
        .filter(|&(seed, n)| !complete(seed, n))
        .collect();

    let journal = match &opts.out_dir {
        Some(dir) => Some(Mutex::new(Journal::open(dir)?)),
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.jobs.max(1)).build()?;
    let fresh: Vec<ResultRow> = pool.install(|| {
        points
            .par_iter()
            .map(|&(seed, n)| {
                let rows = run_point(scenario, &graph, seed, n, opts);
                if let Some(j) = &journal {
                    j.lock().expect("journal lock").append(&rows)?;
                }
                Ok(rows)
            })
            .collect::<Result<Vec<_>>>()
    })?
    .into_iter()
    .flatten()
    .collect();

    let mut all = previous;
    all.extend(fresh.iter().cloned());
    all.sort_by(|a, b| a.key().cmp(&b.key()));
    all.dedup_by(|a, b| a.key() == b.key());
    if let Some(dir) = &opts.out_dir {
        drop(journal);
        write_csv(&dir.join(RESULTS_FILE), &all, &RESULT_COLUMNS)?;
        let mut timings = previous_timings;
        timings.retain(|t| all.iter().any(|r| (&r.scenario, r.seed, r.n_vsrs, r.approach) == (&t.scenario, t.seed, t.n_vsrs, t.approach)));
        timings.extend(fresh.iter().map(timing));
        timings.sort_by(|a, b| {
            (&a.scenario, a.seed, a.n_vsrs, a.approach).cmp(&(&b.scenario, b.seed, b.n_vsrs, b.approach))
        });
        timings.dedup_by(|a, b| (&a.scenario, a.seed, a.n_vsrs, a.approach) == (&b.scenario, b.seed, b.n_vsrs, b.approach));
        write_csv(&dir.join(TIMINGS_FILE), &timings, &TIMING_COLUMNS)?;
    }
    Ok(all.into_iter().filter(|r| r.scenario == scenario.name).collect())
}
