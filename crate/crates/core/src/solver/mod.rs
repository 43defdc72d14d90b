//! Power-optimal placement search.
//!
//! [`solve`] runs an exact depth-first branch-and-bound, [`solve_exhaustive`]
//! enumerates every placement of a small instance, and [`baseline_cdc`]
//! builds the cloud-only reference point. All three report power through
//! [`evaluate_power`], and all break ties between equal-power placements the
//! same way: interchangeable subtrees of the network are first mapped to a
//! canonical representative, then the smallest host vector in VM order wins.

mod search;
mod symmetry;

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::catalog::NodeClass;
use crate::embedding::{evaluate_partial, evaluate_power, validate, Placement, PowerBreakdown};
use crate::error::{Error, Result};
use crate::topology::{candidate_hosts, PhysicalGraph};
use crate::vsr::{validate_vsr, Vsr};

use search::Model;

/// Default cap on the number of placements [`solve_exhaustive`] will visit.
pub const EXHAUSTIVE_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchOrder {
    /// Inputs first, then hidden VMs by decreasing workload.
    #[default]
    WorkloadDescending,
    /// Inputs first, then hidden VMs in request order.
    InputOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Seconds; `None` runs to completion.
    pub time_limit: Option<f64>,
    /// When false, subtrees that can only tie the incumbent are skipped: the
    /// power is still optimal but the tie-break between equal-power
    /// placements is no longer guaranteed.
    pub optimality_required: bool,
    pub worker_count: usize,
    pub branch_order: BranchOrder,
    /// Reserved for randomized tie-breaks; the search itself is deterministic.
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            time_limit: None,
            optimality_required: true,
            worker_count: 1,
            branch_order: BranchOrder::WorkloadDescending,
            seed: 0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if self.worker_count == 0 {
            return Err(Error::InvalidParameter("worker_count must be at least 1".into()));
        }
        if let Some(t) = self.time_limit {
            if !(t >= 0.0) {
                return Err(Error::InvalidParameter(format!("time limit {t} is not a duration")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    /// Proven optimal.
    Optimal,
    /// Time limit reached; the placement is the best one found.
    FeasibleTimeout,
    /// A feasible reference point with no optimality claim.
    Feasible,
    /// No feasible placement exists, or none was found before the limit.
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleTimeout => "feasible-timeout",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
        }
    }

    pub fn has_solution(self) -> bool {
        self != SolveStatus::Infeasible
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub placement: Placement,
    pub power: PowerBreakdown,
    /// Proven lower bound on the optimal power, watts.
    pub bound: f64,
    /// `(power.total - bound) / power.total`, zero for a zero-power optimum.
    pub gap: f64,
    pub status: SolveStatus,
    pub nodes_explored: u64,
    pub wall_time: f64,
    /// Incumbent power after every improvement, oldest first.
    pub incumbent_history: Vec<f64>,
}

impl SolveResult {
    fn infeasible(nodes_explored: u64, start: Instant) -> SolveResult {
        SolveResult {
            placement: Placement::new(),
            power: PowerBreakdown::zero(),
            bound: f64::INFINITY,
            gap: f64::INFINITY,
            status: SolveStatus::Infeasible,
            nodes_explored,
            wall_time: start.elapsed().as_secs_f64(),
            incumbent_history: Vec::new(),
        }
    }

    fn found(placement: Placement, power: PowerBreakdown, bound: f64, status: SolveStatus, start: Instant) -> Self {
        let bound = bound.min(power.total);
        SolveResult {
            gap: gap(power.total, bound),
            placement,
            power,
            bound,
            status,
            nodes_explored: 0,
            wall_time: start.elapsed().as_secs_f64(),
            incumbent_history: Vec::new(),
        }
    }
}

fn gap(total: f64, bound: f64) -> f64 {
    if total <= 0.0 {
        0.0
    } else {
        ((total - bound) / total).max(0.0)
    }
}

fn check_instance(graph: &PhysicalGraph, vsrs: &[Vsr]) -> Result<()> {
    for r in vsrs {
        if let Some(v) = validate_vsr(r).into_iter().next() {
            return Err(Error::InvalidParameter(format!("request {}: {v}", r.id)));
        }
        for vm in &r.vms {
            if !(vm.workload >= 0.0) {
                return Err(Error::InvalidParameter(format!("{} has workload {}", vm.vm_ref(), vm.workload)));
            }
            if let Some(s) = vm.pinned_source {
                if s.0 >= graph.len() || !graph.node(s).is_processing() {
                    return Err(Error::InvalidParameter(format!("{} pinned to {s}", vm.vm_ref())));
                }
            }
        }
    }
    Ok(())
}

/// Minimum-power embedding of `vsrs` on `graph`.
///
/// Device figures come from the graph's nodes, which carry the catalog
/// profiles they were built with.
pub fn solve(graph: &PhysicalGraph, vsrs: &[Vsr], options: &SolveOptions) -> Result<SolveResult> {
    let start = Instant::now();
    options.validate()?;
    check_instance(graph, vsrs)?;
    let model = Model::new(graph, vsrs, options.branch_order)?;
    let base = baseline_cdc(graph, vsrs)?;
    let seed = if base.status.has_solution() {
        model.key_of(&base.placement).map(|k| (base.power.total, k))
    } else {
        None
    };
    let out = search::run(&model, options, start, seed);
    let Some(best) = out.best else {
        return Ok(SolveResult::infeasible(out.nodes, start));
    };
    let placement = model.placement_of(&best.key);
    let power = evaluate_power(&placement, vsrs, graph)?;
    debug_assert_eq!(power.total.to_bits(), best.power.to_bits());
    let (status, bound) = if out.stopped {
        (SolveStatus::FeasibleTimeout, out.open_bound)
    } else {
        (SolveStatus::Optimal, power.total)
    };
    let mut result = SolveResult::found(placement, power, bound, status, start);
    result.nodes_explored = out.nodes;
    result.incumbent_history = best.history;
    Ok(result)
}

/// Visits every placement that keeps inputs on their sources and returns the
/// cheapest feasible one. Refuses instances with more than `cap` placements.
pub fn solve_exhaustive_capped(graph: &PhysicalGraph, vsrs: &[Vsr], cap: u64) -> Result<SolveResult> {
    let start = Instant::now();
    check_instance(graph, vsrs)?;
    let mut vms: Vec<_> = vsrs.iter().flat_map(|r| r.vms.iter()).collect();
    vms.sort_by_key(|v| v.vm_ref());
    let cands: Vec<_> = vms.iter().map(|v| candidate_hosts(graph, v)).collect();
    let combinations: f64 = cands.iter().map(|c| c.len() as f64).product();
    if combinations > cap as f64 {
        return Err(Error::EnumerationCap { combinations, cap });
    }
    let model = Model::new(graph, vsrs, BranchOrder::InputOrder)?;
    let mut evaluations = 0u64;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut history = Vec::new();
    if cands.iter().all(|c| !c.is_empty()) {
        let mut digit = vec![0usize; vms.len()];
        loop {
            let placement: Placement =
                vms.iter().enumerate().map(|(i, v)| (v.vm_ref(), cands[i][digit[i]])).collect();
            evaluations += 1;
            if validate(&placement, vsrs, graph).is_empty() {
                let power = evaluate_power(&placement, vsrs, graph)?.total;
                let key = model.key_of(&placement).expect("complete placement");
                let better = match &best {
                    None => true,
                    Some((p, k)) => power.total_cmp(p).then_with(|| key.cmp(k)).is_lt(),
                };
                if better {
                    history.push(power);
                    best = Some((power, key));
                }
            }
            // Odometer over candidate indices, last VM fastest.
            let mut i = vms.len();
            let done = loop {
                if i == 0 {
                    break true;
                }
                i -= 1;
                digit[i] += 1;
                if digit[i] < cands[i].len() {
                    break false;
                }
                digit[i] = 0;
            };
            if done {
                break;
            }
        }
    }
    let Some((_, key)) = best else {
        return Ok(SolveResult::infeasible(evaluations, start));
    };
    let placement = model.placement_of(&key);
    let power = evaluate_power(&placement, vsrs, graph)?;
    let total = power.total;
    let mut result = SolveResult::found(placement, power, total, SolveStatus::Optimal, start);
    result.nodes_explored = evaluations;
    result.incumbent_history = history;
    Ok(result)
}

/// [`solve_exhaustive_capped`] with the default cap.
pub fn solve_exhaustive(graph: &PhysicalGraph, vsrs: &[Vsr]) -> Result<SolveResult> {
    solve_exhaustive_capped(graph, vsrs, EXHAUSTIVE_CAP)
}

/// Inputs on their sources, every hidden VM in the cloud data center.
pub fn baseline_cdc(graph: &PhysicalGraph, vsrs: &[Vsr]) -> Result<SolveResult> {
    let start = Instant::now();
    check_instance(graph, vsrs)?;
    let Some(cdc) = graph.nodes_of(NodeClass::Cdc).next().map(|n| n.id) else {
        return Ok(SolveResult::infeasible(0, start));
    };
    let placement = Placement::all_hidden_on(vsrs, cdc);
    if !validate(&placement, vsrs, graph).is_empty() {
        return Ok(SolveResult::infeasible(1, start));
    }
    let power = evaluate_power(&placement, vsrs, graph)?;
    let bound = lower_bound(&Placement::new(), vsrs, graph)?;
    let mut result = SolveResult::found(placement, power, bound, SolveStatus::Feasible, start);
    result.nodes_explored = 1;
    result.incumbent_history = vec![result.power.total];
    Ok(result)
}

/// Power of the committed VMs plus, for every VM not yet placed, its
/// workload times the cheapest PUE-weighted efficiency among its candidate
/// hosts. Never exceeds the power of any completion in exact arithmetic; in
/// floating point it may exceed it by rounding, well under 1e-9 W.
pub fn lower_bound(partial: &Placement, vsrs: &[Vsr], graph: &PhysicalGraph) -> Result<f64> {
    let committed = evaluate_partial(partial, vsrs, graph)?.total;
    let mut rest = 0.0;
    for r in vsrs {
        for vm in &r.vms {
            if partial.get(vm.vm_ref()).is_some() {
                continue;
            }
            let best = candidate_hosts(graph, vm)
                .iter()
                .filter_map(|&h| {
                    let node = graph.node(h);
                    node.processing.as_ref().map(|p| node.pue.pue_pr * p.energy_per_gflops)
                })
                .fold(f64::INFINITY, f64::min);
            if best.is_finite() {
                rest += vm.workload * best;
            }
        }
    }
    Ok(committed + rest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;
    use crate::topology::{build_cfn, NodeId, TopologyConfig};
    use crate::vsr::{generate_vsrs, InputScenario, VirtualLink, Vm, VsrGenConfig};

    fn graph(cfg: &TopologyConfig) -> PhysicalGraph {
        build_cfn(cfg, &Catalog::default_catalog()).unwrap()
    }

    fn chain(id: u32, src: NodeId, workloads: &[f64]) -> Vsr {
        Vsr {
            id,
            vms: workloads
                .iter()
                .enumerate()
                .map(|(i, &w)| Vm {
                    vsr_id: id,
                    vm_id: i as u32,
                    workload: w,
                    is_input: i == 0,
                    pinned_source: (i == 0).then_some(src),
                })
                .collect(),
            links: (1..workloads.len() as u32)
                .map(|j| VirtualLink { vsr_id: id, from_vm: j - 1, to_vm: j, bitrate: 10.0 })
                .collect(),
        }
    }

    #[test]
    fn zero_requests_are_free() {
        let g = graph(&TopologyConfig::paper_default());
        let r = solve(&g, &[], &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.power.total, 0.0);
        assert_eq!(baseline_cdc(&g, &[]).unwrap().power.total, 0.0);
    }

    #[test]
    fn exhaustive_visits_every_candidate_once() {
        let g = graph(&TopologyConfig::reduced());
        let v = vec![chain(0, g.inputs()[0], &[0.5, 3.0])];
        let hosts = candidate_hosts(&g, &v[0].vms[1]).len() as u64;
        let r = solve_exhaustive(&g, &v).unwrap();
        assert_eq!(r.nodes_explored, hosts);
        assert!(matches!(
            solve_exhaustive_capped(&g, &v, hosts - 1),
            Err(Error::EnumerationCap { .. })
        ));
    }

    #[test]
    fn small_request_stays_on_its_source() {
        let g = graph(&TopologyConfig::paper_default());
        let src = g.inputs()[0];
        let v = vec![chain(0, src, &[0.5, 4.0, 6.0])];
        let r = solve(&g, &v, &SolveOptions::default()).unwrap();
        assert!(r.placement.iter().all(|(_, h)| h == src));
        assert_eq!(r.power.network, 0.0);
        let e = solve_exhaustive(&g, &v).unwrap();
        assert_eq!(e.power.total, r.power.total);
        assert_eq!(e.placement, r.placement);
    }

    #[test]
    fn baseline_crosses_the_network_and_needs_a_cdc() {
        let g = graph(&TopologyConfig::paper_default());
        let v = vec![chain(0, g.inputs()[0], &[0.5, 4.0])];
        let b = baseline_cdc(&g, &v).unwrap();
        assert_eq!(b.status, SolveStatus::Feasible);
        assert!(b.power.network > 0.0);
        assert!(solve(&g, &v, &SolveOptions::default()).unwrap().power.total <= b.power.total);

        let cfg = TopologyConfig { cdc_present: false, ..TopologyConfig::paper_default() };
        let g = graph(&cfg);
        let v = vec![chain(0, g.inputs()[0], &[0.5, 4.0])];
        assert_eq!(baseline_cdc(&g, &v).unwrap().status, SolveStatus::Infeasible);
        assert_eq!(solve(&g, &v, &SolveOptions::default()).unwrap().status, SolveStatus::Optimal);
    }

    #[test]
    fn lower_bound_extremes() {
        let g = graph(&TopologyConfig::paper_default());
        let v = generate_vsrs(3, &VsrGenConfig::with_seed(7), &InputScenario::SingleSource(g.inputs()[0]), &g).unwrap();
        let total: f64 = v.iter().map(Vsr::workload).sum();
        let empty = lower_bound(&Placement::new(), &v, &g).unwrap();
        assert!((empty - total * 0.35).abs() < 1e-9, "{empty} vs {}", total * 0.35);

        let r = solve(&g, &v, &SolveOptions::default()).unwrap();
        assert_eq!(lower_bound(&r.placement, &v, &g).unwrap(), r.power.total);
        assert!(empty <= r.power.total);
    }

    #[test]
    fn time_limit_zero_still_returns_a_placement() {
        let g = graph(&TopologyConfig::paper_default());
        let v = generate_vsrs(12, &VsrGenConfig::with_seed(1), &InputScenario::SingleSource(g.inputs()[0]), &g).unwrap();
        let opts = SolveOptions { time_limit: Some(0.0), ..SolveOptions::default() };
        let r = solve(&g, &v, &opts).unwrap();
        assert!(r.status.has_solution());
        assert!(validate(&r.placement, &v, &g).is_empty());
        assert!(r.power.total <= baseline_cdc(&g, &v).unwrap().power.total);
        assert!(r.bound <= r.power.total);
    }

    #[test]
    fn options_are_checked() {
        let g = graph(&TopologyConfig::reduced());
        let bad = SolveOptions { worker_count: 0, ..SolveOptions::default() };
        assert!(solve(&g, &[], &bad).is_err());
        let bad = SolveOptions { time_limit: Some(f64::NAN), ..SolveOptions::default() };
        assert!(solve(&g, &[], &bad).is_err());
    }
}
