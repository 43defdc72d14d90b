//! Savings summaries and per-figure CSV tables.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::runner::{Approach, ResultRow};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Stats {
    /// None for an empty input. Values are added in the given order.
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let sum: f64 = values.iter().sum();
        Some(Stats {
            mean: sum / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub cdc: bool,
    pub points: usize,
    pub solved: usize,
    pub timeouts: usize,
    pub max_gap: f64,
    /// Percent saved by the optimized placement against the all-in-CDC
    /// reference, over points where both have a solution.
    pub savings: Option<Stats>,
    /// Share of the optimized workload per processing layer in percent,
    /// ordered IoT, access fog, metro fog, CDC.
    pub workload_share: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SummaryReport {
    pub scenarios: Vec<ScenarioSummary>,
}

impl SummaryReport {
    pub fn scenario(&self, name: &str) -> Option<&ScenarioSummary> {
        self.scenarios.iter().find(|s| s.scenario == name)
    }
}

pub fn saving_percent(cfn: &ResultRow, baseline: &ResultRow) -> Option<f64> {
    if !cfn.solved() || !baseline.solved() || baseline.total_w <= 0.0 {
        return None;
    }
    Some((baseline.total_w - cfn.total_w) / baseline.total_w * 100.0)
}

type PointKey = (String, u64, usize);

fn pairs(rows: &[ResultRow]) -> BTreeMap<PointKey, (Option<&ResultRow>, Option<&ResultRow>)> {
    let mut m: BTreeMap<PointKey, (Option<&ResultRow>, Option<&ResultRow>)> = BTreeMap::new();
    for r in rows {
        let e = m.entry((r.scenario.clone(), r.seed, r.n_vsrs)).or_default();
        match r.approach {
            Approach::Cfn => e.0 = Some(r),
            Approach::Baseline => e.1 = Some(r),
        }
    }
    m
}

pub fn summarize(rows: &[ResultRow]) -> SummaryReport {
    let mut by_scenario: BTreeMap<&str, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        by_scenario.entry(r.scenario.as_str()).or_default().push(r);
    }
    let all_pairs = pairs(rows);
    let mut scenarios = Vec::new();
    for (name, rs) in by_scenario {
        let cfn: Vec<&ResultRow> = rs.iter().copied().filter(|r| r.approach == Approach::Cfn).collect();
        let solved: Vec<&ResultRow> = cfn.iter().copied().filter(|r| r.solved()).collect();
        let savings: Vec<f64> = all_pairs
            .iter()
            .filter(|((s, _, _), _)| s == name)
            .filter_map(|(_, (c, b))| saving_percent((*c)?, (*b)?))
            .collect();
        let wl = [
            solved.iter().map(|r| r.iot_gflops).sum::<f64>(),
            solved.iter().map(|r| r.af_gflops).sum::<f64>(),
            solved.iter().map(|r| r.mf_gflops).sum::<f64>(),
            solved.iter().map(|r| r.cdc_gflops).sum::<f64>(),
        ];
        let total: f64 = wl.iter().sum();
        let workload_share = wl.map(|w| if total > 0.0 { w / total * 100.0 } else { 0.0 });
        scenarios.push(ScenarioSummary {
            scenario: name.to_string(),
            cdc: rs[0].cdc,
            points: cfn.len(),
            solved: solved.len(),
            timeouts: cfn.iter().filter(|r| r.status == "feasible-timeout").count(),
            max_gap: solved.iter().map(|r| r.gap).fold(0.0, f64::max),
            savings: Stats::of(&savings),
            workload_share,
        });
    }
    SummaryReport { scenarios }
}

impl fmt::Display for SummaryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<24} {:>4} {:>7} {:>8} {:>8} {:>8} {:>8}  workload share iot/af/mf/cdc %",
            "scenario", "cdc", "points", "timeouts", "mean %", "min %", "max %"
        )?;
        for s in &self.scenarios {
            let saving = match s.savings {
                Some(st) => format!("{:>8.2} {:>8.2} {:>8.2}", st.mean, st.min, st.max),
                None => format!("{:>26}", "no baseline"),
            };
            let [a, b, c, d] = s.workload_share;
            writeln!(
                f,
                "{:<24} {:>4} {:>7} {:>8} {saving}  {a:.1}/{b:.1}/{c:.1}/{d:.1}",
                s.scenario,
                if s.cdc { "yes" } else { "no" },
                format!("{}/{}", s.solved, s.points),
                s.timeouts,
            )?;
        }
        Ok(())
    }
}

/// Fails when an optimized total exceeds the reference total of its point.
pub fn check_dominance(rows: &[ResultRow]) -> Result<()> {
    for ((scenario, seed, n), (c, b)) in pairs(rows) {
        let (Some(c), Some(b)) = (c, b) else { continue };
        if c.solved() && b.solved() && c.total_w > b.total_w * (1.0 + 1e-12) {
            bail!(
                "{scenario} seed {seed} n {n}: optimized placement uses {} W, more than the all-in-CDC {} W",
                c.total_w,
                b.total_w
            );
        }
    }
    Ok(())
}

type SeriesKey = (String, Approach, usize);

fn series<F: Fn(&ResultRow) -> f64>(rows: &[ResultRow], f: F) -> BTreeMap<SeriesKey, Vec<f64>> {
    let mut m: BTreeMap<SeriesKey, Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.solved()) {
        m.entry((r.scenario.clone(), r.approach, r.n_vsrs)).or_default().push(f(r));
    }
    m
}

fn write_table(path: &Path, header: &[&str], records: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in records {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn sorted_rows(rows: &[ResultRow]) -> Vec<ResultRow> {
    let mut v = rows.to_vec();
    v.sort_by(|a, b| (&a.scenario, a.seed, a.n_vsrs, a.approach).cmp(&(&b.scenario, b.seed, b.n_vsrs, b.approach)));
    v
}

/// Writes one table per figure into `out_dir` and returns their paths.
/// Only points with a solution enter the statistics.
pub fn export_figures(rows: &[ResultRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    check_dominance(rows)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let rows = sorted_rows(rows);
    let mut written = Vec::new();

    let path = out_dir.join("fig2_total_power.csv");
    let recs = series(&rows, |r| r.total_w)
        .into_iter()
        .map(|((s, a, n), v)| {
            let st = Stats::of(&v).expect("non-empty series");
            vec![s, a.as_str().into(), n.to_string(), st.count.to_string(), st.mean.to_string(), st.min.to_string(), st.max.to_string()]
        })
        .collect();
    write_table(&path, &["scenario", "approach", "n_vsrs", "seeds", "mean_w", "min_w", "max_w"], recs)?;
    written.push(path);

    type Getter = fn(&ResultRow) -> f64;
    let network: [(&str, Getter); 3] =
        [("access", |r| r.net_access_w), ("metro", |r| r.net_metro_w), ("core", |r| r.net_core_w)];
    let processing: [(&str, Getter); 4] = [
        ("iot", |r| r.pr_iot_w),
        ("access-fog", |r| r.pr_af_w),
        ("metro-fog", |r| r.pr_mf_w),
        ("cdc", |r| r.pr_cdc_w),
    ];
    for (file, layers) in [("fig3_network_power.csv", &network[..]), ("fig4_processing_power.csv", &processing[..])] {
        let mut recs = Vec::new();
        for ((s, a, n), _) in series(&rows, |r| r.total_w) {
            for (layer, get) in layers {
                let v: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.solved() && r.scenario == s && r.approach == a && r.n_vsrs == n)
                    .map(get)
                    .collect();
                let st = Stats::of(&v).expect("non-empty series");
                recs.push(vec![s.clone(), a.as_str().into(), n.to_string(), layer.to_string(), st.mean.to_string()]);
            }
        }
        let path = out_dir.join(file);
        write_table(&path, &["scenario", "approach", "n_vsrs", "layer", "mean_w"], recs)?;
        written.push(path);
    }

    let workload: [(&str, Getter); 4] = [
        ("iot", |r| r.iot_gflops),
        ("access-fog", |r| r.af_gflops),
        ("metro-fog", |r| r.mf_gflops),
        ("cdc", |r| r.cdc_gflops),
    ];
    let mut recs = Vec::new();
    for ((s, a, n), _) in series(&rows, |r| r.total_w) {
        if a != Approach::Cfn {
            continue;
        }
        for (layer, get) in &workload {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.solved() && r.scenario == s && r.approach == a && r.n_vsrs == n)
                .map(get)
                .collect();
            let st = Stats::of(&v).expect("non-empty series");
            recs.push(vec![s.clone(), n.to_string(), layer.to_string(), st.mean.to_string()]);
        }
    }
    let path = out_dir.join("fig5_workload.csv");
    write_table(&path, &["scenario", "n_vsrs", "layer", "mean_gflops"], recs)?;
    written.push(path);

    let mut by_cdc: BTreeMap<(String, bool, usize), Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.solved() && r.approach == Approach::Cfn) {
        by_cdc.entry((r.scenario.clone(), r.cdc, r.n_vsrs)).or_default().push(r.total_w);
    }
    let recs = by_cdc
        .into_iter()
        .map(|((s, cdc, n), v)| {
            let st = Stats::of(&v).expect("non-empty series");
            vec![s, cdc.to_string(), n.to_string(), st.mean.to_string()]
        })
        .collect();
    let path = out_dir.join("fig6_cdc.csv");
    write_table(&path, &["scenario", "cdc_present", "n_vsrs", "mean_w"], recs)?;
    written.push(path);
    Ok(written)
}
