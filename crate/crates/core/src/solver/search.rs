//! Depth-first branch-and-bound over VM placements.
//!
//! Pinned inputs are placed first. The search then fixes the final server
//! count of every host, in tree preorder, and only after that places the
//! hidden VMs one at a time. A placement belongs to exactly one count
//! vector, so every idle term and, with a single source, every active
//! network node is exact before the first hidden VM is placed.
//!
//! Node loads are kept as integers and every node's power is refreshed when
//! one of its loads changes, so the committed power of a partial placement
//! is always at hand. The bound adds a fractional fill of the remaining
//! workload over capacity chunks priced with their marginal power (see
//! [`Search::bound`]).

use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::embedding::{validate, Coeffs, Placement};
use crate::error::{Error, Result};
use crate::topology::{NodeId, PhysicalGraph};
use crate::units::{gflops_to_units, mbps_to_units, stable_sum, units_to_gflops, UNITS_PER_GBPS};
use crate::vsr::{VmRef, Vsr};

use super::symmetry::Symmetry;
use super::{BranchOrder, SolveOptions};

/// Slack under which a subtree is still explored for equal-power ties.
const TIE_EPS: f64 = 1e-7;
const CLOCK_EVERY: u64 = 1024;

#[derive(Debug, Clone)]
struct VmInfo {
    vref: VmRef,
    units: i64,
    candidates: Vec<usize>,
    source_slot: usize,
    /// Virtual links to VMs placed earlier: (branch index, kbps).
    back: Vec<(usize, i64)>,
}

/// Immutable view of one instance, shared by all workers.
pub(super) struct Model<'a> {
    pub graph: &'a PhysicalGraph,
    pub vsrs: &'a [Vsr],
    coeffs: Vec<Coeffs>,
    vms: Vec<VmInfo>,
    hosts: Vec<usize>,
    /// Network nodes on the route between two processing nodes, `b * n + e`.
    net_path: Vec<Vec<u32>>,
    site_units: Vec<Option<i64>>,
    bitrate_units: Vec<i64>,
    sources: Vec<usize>,
    cap_behind: Vec<i64>,
    amortize_network: bool,
    sym: Symmetry,
    /// VmRef order -> branch index.
    key_order: Vec<usize>,
    /// Inputs come first in branch order.
    n_inputs: usize,
    /// Hosts and switched network nodes, in the order they are decided.
    order: Vec<usize>,
    /// Network nodes whose on/off state is decided up front.
    switch: Vec<bool>,
    /// Nodes whose link to their parent is switched too; the link of `x`
    /// is decided as entry `n + x`.
    edge: Vec<bool>,
    /// Switched links crossed between two processing nodes, `b * n + e`.
    net_edges: Vec<Vec<u32>>,
    switched: bool,
    /// Nodes whose subtree is fully decided once `order[k]` is, deepest first.
    completes: Vec<Vec<usize>>,
    /// Nodes with no host below them, deepest first.
    hostless: Vec<usize>,
    /// Sources whose reachable nodes do not overlap can be solved apart.
    separable: bool,
}

impl<'a> Model<'a> {
    pub fn new(graph: &'a PhysicalGraph, vsrs: &'a [Vsr], order: BranchOrder) -> Result<Model<'a>> {
        let n = graph.len();
        let coeffs: Vec<Coeffs> = graph.nodes().iter().map(Coeffs::of).collect();
        let hosts: Vec<usize> = graph.processing_nodes().iter().map(|h| h.0).collect();

        let mut sources = Vec::new();
        let mut all = Vec::new();
        for r in vsrs {
            let input = r.input().ok_or_else(|| Error::InvalidParameter(format!("request {} has no input VM", r.id)))?;
            let src = input
                .pinned_source
                .ok_or_else(|| Error::InvalidParameter(format!("input {} is not pinned", input.vm_ref())))?;
            if src.0 >= n || !graph.node(src).is_processing() {
                return Err(Error::InvalidParameter(format!("input {} pinned to {src}", input.vm_ref())));
            }
            if !sources.contains(&src.0) {
                sources.push(src.0);
            }
            let slot = sources.iter().position(|&s| s == src.0).expect("just inserted");
            for vm in &r.vms {
                let candidates = if vm.is_input { vec![src.0] } else { hosts.clone() };
                all.push((vm, slot, candidates));
            }
        }
        all.sort_by_key(|(vm, _, _)| vm.vm_ref());
        let source_ids: Vec<NodeId> = sources.iter().map(|&s| NodeId(s)).collect();
        let sym = Symmetry::new(graph, &source_ids);
        let mut branch: Vec<usize> = (0..all.len()).collect();
        branch.sort_by(|&a, &b| {
            let (va, vb) = (all[a].0, all[b].0);
            let by_size = match order {
                BranchOrder::WorkloadDescending => gflops_to_units(vb.workload).cmp(&gflops_to_units(va.workload)),
                BranchOrder::InputOrder => std::cmp::Ordering::Equal,
            };
            vb.is_input.cmp(&va.is_input).then(by_size).then(a.cmp(&b))
        });
        let n_inputs = all.iter().filter(|(vm, _, _)| vm.is_input).count();
        let mut key_order = vec![0; all.len()];
        for (bi, &k) in branch.iter().enumerate() {
            key_order[k] = bi;
        }
        let mut vms: Vec<VmInfo> = branch
            .iter()
            .map(|&k| {
                let (vm, slot, ref cands) = all[k];
                VmInfo {
                    vref: vm.vm_ref(),
                    units: gflops_to_units(vm.workload),
                    candidates: cands.clone(),
                    source_slot: slot,
                    back: Vec::new(),
                }
            })
            .collect();
        let index_of = |v: VmRef| -> Result<usize> {
            all.binary_search_by_key(&v, |(vm, _, _)| vm.vm_ref())
                .map(|k| key_order[k])
                .map_err(|_| Error::InvalidParameter(format!("virtual link endpoint {v} does not exist")))
        };
        for r in vsrs {
            for l in &r.links {
                let (a, b) = (index_of(l.from_ref())?, index_of(l.to_ref())?);
                let bw = mbps_to_units(l.bitrate);
                let (early, late) = if a < b { (a, b) } else { (b, a) };
                vms[late].back.push((early, bw));
            }
        }

        let mut net_path = vec![Vec::new(); n * n];
        for &b in &hosts {
            for &e in &hosts {
                if b != e {
                    let path = graph.route(NodeId(b), NodeId(e))?;
                    net_path[b * n + e] =
                        path.iter().filter(|p| coeffs[p.0].has_net).map(|p| p.0 as u32).collect();
                }
            }
        }
        let site_units: Vec<Option<i64>> = coeffs.iter().map(Coeffs::site_units).collect();
        let bitrate_units: Vec<i64> = graph
            .nodes()
            .iter()
            .map(|node| {
                let c = node.bitrate_capacity();
                if c.is_finite() {
                    (c * UNITS_PER_GBPS).floor() as i64
                } else {
                    i64::MAX
                }
            })
            .collect();
        // Capacity reachable through each network node from any source.
        let mut cap_behind = vec![0i64; n];
        for (x, cap) in cap_behind.iter_mut().enumerate() {
            for &h in &hosts {
                if sources.iter().any(|&s| net_path[s * n + h].contains(&(x as u32))) {
                    *cap = match site_units[h] {
                        Some(u) => cap.saturating_add(u),
                        None => i64::MAX,
                    };
                }
            }
        }
        // Every VM tied to its input by links that carry traffic: then a VM
        // of source s on host h activates the whole route from s to h.
        let mut comp: Vec<usize> = (0..vms.len()).collect();
        fn root_of(comp: &mut [usize], mut i: usize) -> usize {
            while comp[i] != i {
                comp[i] = comp[comp[i]];
                i = comp[i];
            }
            i
        }
        for i in 0..vms.len() {
            for &(j, bw) in &vms[i].back {
                if bw > 0 {
                    let (a, b) = (root_of(&mut comp, i), root_of(&mut comp, j));
                    comp[a.max(b)] = a.min(b);
                }
            }
        }
        let tied = (0..vms.len()).all(|i| root_of(&mut comp, i) < n_inputs || {
            let r = root_of(&mut comp, i);
            (0..n_inputs).any(|k| root_of(&mut comp, k) == r)
        });
        let switch: Vec<bool> =
            coeffs.iter().map(|c| tied && graph.is_tree() && c.has_net && !c.has_pr).collect();
        let edge: Vec<bool> = (0..n).map(|x| switch[x] && sym.parent(x).is_some_and(|p| switch[p])).collect();
        let mut net_edges = vec![Vec::new(); n * n];
        for &b in &hosts {
            for &e in &hosts {
                let path = &net_path[b * n + e];
                net_edges[b * n + e] = path
                    .iter()
                    .filter(|&&x| edge[x as usize] && sym.parent(x as usize).is_some_and(|p| path.contains(&(p as u32))))
                    .copied()
                    .collect();
            }
        }
        let mut order = Vec::new();
        for u in sym.preorder() {
            if coeffs[u].has_pr || switch[u] {
                order.push(u);
            }
            if edge[u] {
                order.push(n + u);
            }
        }
        let mut last = vec![usize::MAX; n];
        for (k, &h) in order.iter().enumerate() {
            for a in sym.ancestors(h % n) {
                last[a] = k;
            }
        }
        let mut completes = vec![Vec::new(); order.len()];
        for (k, &h) in order.iter().enumerate() {
            completes[k].extend(sym.ancestors(h % n).filter(|&a| last[a] == k));
        }
        let hostless: Vec<usize> =
            sym.preorder().into_iter().rev().filter(|&u| last[u] == usize::MAX).collect();
        // With no capacity that all traffic together could exceed, parts of
        // the network used by disjoint groups of sources are independent.
        let traffic: i64 = vms.iter().flat_map(|v| v.back.iter()).map(|&(_, bw)| bw).sum();
        let uncongested = bitrate_units.iter().all(|&c| traffic <= c)
            && graph.links().iter().all(|l| traffic as f64 <= l.capacity * UNITS_PER_GBPS);
        let separable = uncongested && switch.iter().any(|&b| b);
        Ok(Model {
            graph,
            vsrs,
            amortize_network: graph.is_tree(),
            sym,
            n_inputs,
            order,
            switched: switch.iter().any(|&b| b),
            switch,
            edge,
            net_edges,
            completes,
            hostless,
            separable,
            coeffs,
            vms,
            hosts,
            net_path,
            site_units,
            bitrate_units,
            sources,
            cap_behind,
            key_order,
        })
    }

    /// The route from `s` to `h` crosses no node or link switched off in
    /// `target`.
    fn open(&self, target: &[i64], s: usize, h: usize) -> bool {
        let k = s * self.graph.len() + h;
        let n = self.graph.len();
        !self.switched
            || (self.net_path[k].iter().all(|&x| target[x as usize] != 0)
                && self.net_edges[k].iter().all(|&x| target[n + x as usize] != 0))
    }

    /// Canonical host vector (VmRef order) of a placement.
    pub fn key_of(&self, placement: &Placement) -> Option<Vec<usize>> {
        let hosts: Option<Vec<usize>> =
            self.key_order.iter().map(|&bi| placement.get(self.vms[bi].vref).map(|h| h.0)).collect();
        hosts.map(|h| self.sym.canonical(&h))
    }

    /// Placement of a host vector in VmRef order.
    pub fn placement_of(&self, key: &[usize]) -> Placement {
        self.key_order.iter().zip(key).map(|(&bi, &h)| (self.vms[bi].vref, NodeId(h))).collect()
    }
}

#[derive(Clone)]
struct State {
    host: Vec<usize>,
    omega: Vec<i64>,
    theta: Vec<i64>,
    lambda: Vec<i64>,
    /// Traffic on the link from each node to its parent, switched links only.
    up: Vec<i64>,
    cost: Vec<f64>,
    total: f64,
    used: Vec<u32>,
    rem: i64,
    rem_src: Vec<i64>,
    depth: usize,
}

impl State {
    fn new(m: &Model) -> State {
        let n = m.graph.len();
        let mut rem_src = vec![0; m.sources.len()];
        for v in &m.vms {
            rem_src[v.source_slot] += v.units;
        }
        State {
            host: vec![usize::MAX; m.vms.len()],
            omega: vec![0; n],
            theta: vec![0; n],
            lambda: vec![0; n],
            up: vec![0; n],
            cost: vec![0.0; n],
            total: 0.0,
            used: vec![0; n],
            rem: rem_src.iter().sum(),
            rem_src,
            depth: 0,
        }
    }

    fn touch(&mut self, m: &Model, n: usize) {
        let new = m.coeffs[n].total(self.omega[n], self.theta[n], self.lambda[n]);
        self.total += new - self.cost[n];
        self.cost[n] = new;
    }

    fn apply(&mut self, m: &Model, i: usize, h: usize, sign: i64) {
        let vm = &m.vms[i];
        self.omega[h] += sign * vm.units;
        for &(j, bw) in &vm.back {
            let hj = self.host[j];
            if hj == h {
                continue;
            }
            let k = hj * m.graph.len() + h;
            for &x in &m.net_path[k] {
                self.lambda[x as usize] += sign * bw;
                self.touch(m, x as usize);
            }
            for &x in &m.net_edges[k] {
                self.up[x as usize] += sign * bw;
            }
            self.theta[h] += sign * bw;
            self.theta[hj] += sign * bw;
            self.touch(m, hj);
        }
        self.touch(m, h);
        for a in m.sym.ancestors(h) {
            self.used[a] = (self.used[a] as i64 + sign) as u32;
        }
        self.rem -= sign * vm.units;
        self.rem_src[vm.source_slot] -= sign * vm.units;
    }

    fn place(&mut self, m: &Model, i: usize, h: usize) {
        self.host[i] = h;
        self.apply(m, i, h, 1);
        self.depth += 1;
    }

    fn unplace(&mut self, m: &Model, i: usize) {
        let h = self.host[i];
        self.depth -= 1;
        self.apply(m, i, h, -1);
        self.host[i] = usize::MAX;
    }
}

/// Final server counts, decided host by host.
#[derive(Debug, Clone)]
struct Config {
    /// Per node: server count, or -1 while undecided.
    target: Vec<i64>,
    /// Per node: workload cap in units.
    limit: Vec<i64>,
    /// Per node, once its subtree is decided: structure and counts, in a
    /// form that compares equal exactly for interchangeable subtrees.
    code: Vec<Vec<i64>>,
    /// Earlier twins whose counts match, valid once every count is fixed.
    twins: Vec<Vec<usize>>,
}

impl Config {
    fn free(m: &Model) -> Config {
        let n = m.graph.len();
        let mut cfg = Config {
            target: vec![-1; 2 * n],
            limit: m.site_units.iter().map(|s| s.unwrap_or(i64::MAX)).collect(),
            code: vec![Vec::new(); n],
            twins: vec![Vec::new(); n],
        };
        for &u in &m.hostless {
            cfg.encode(m, u);
        }
        cfg
    }

    fn encode(&mut self, m: &Model, u: usize) {
        let mut kids: Vec<&Vec<i64>> = m.sym.children(u).iter().map(|&c| &self.code[c]).collect();
        kids.sort();
        let target = if m.coeffs[u].has_pr || m.switch[u] { self.target[u] } else { -2 };
        let up = if m.edge[u] { self.target[m.graph.len() + u] } else { -2 };
        let mut code = vec![m.sym.kind(u) as i64, target, up, kids.len() as i64];
        for k in kids {
            code.push(k.len() as i64);
            code.extend_from_slice(k);
        }
        self.code[u] = code;
    }
}

/// Best placement so far: power and canonical host vector.
pub(super) struct Incumbent {
    pub power: f64,
    pub key: Vec<usize>,
    pub history: Vec<f64>,
}

pub(super) struct Outcome {
    pub best: Option<Incumbent>,
    pub nodes: u64,
    pub stopped: bool,
    /// Lower bound over everything the search did not finish.
    pub open_bound: f64,
}

struct Shared {
    best: Mutex<Option<Incumbent>>,
    bits: AtomicU64,
    stop: AtomicBool,
    nodes: AtomicU64,
}

/// Capacity a host can still take, for the bound.
struct Offer {
    host: usize,
    /// Index into the model's host list.
    slot: usize,
    rate: f64,
    need: i64,
    chunks: [(f64, i64); 2],
    avail: i64,
    /// Small enough that two items larger than half the biggest
    /// single-server host never fit together.
    bin: bool,
}

struct Search<'m, 'a> {
    m: &'m Model<'a>,
    shared: &'m Shared,
    opts: &'m SolveOptions,
    start: Instant,
    cfg: Config,
    /// Number of hosts with a decided count.
    decided: usize,
    st: State,
    nodes: u64,
    chunks: Vec<(f64, i64, bool)>,
    large: Vec<i64>,
    reach: Vec<bool>,
    offers: Vec<Offer>,
    net: Vec<f64>,
    mark: Vec<u32>,
    generation: u32,
    behind: Vec<i64>,
    /// VMs of the current subproblem in branch order, the next one to
    /// place, and suffix sums and minima of their workloads.
    seq: Vec<usize>,
    pos: usize,
    seq_units: Vec<i64>,
    seq_min: Vec<i64>,
    /// Nodes and sources of the current subproblem.
    inside: Vec<bool>,
    inside_slot: Vec<bool>,
    frame: Option<Frame>,
    /// Best placement of a segment, by segment and the counts it sees.
    memo: HashMap<(Vec<bool>, Vec<(usize, i64)>), Solved>,
}

#[derive(Debug, Clone)]
enum Solved {
    /// Cheapest hosts, or `None` when nothing fits.
    Exact(Option<Vec<usize>>),
    /// Nothing within this much power inside the region.
    Above(f64),
}

/// A group of VMs solved on its own.
struct Frame {
    region: Vec<usize>,
    /// Power outside the region.
    base: f64,
    /// Power inside the region worth looking for.
    limit: f64,
    /// Power inside the region, canonical hosts of the group, its hosts.
    best: Option<(f64, Vec<usize>, Vec<usize>)>,
}

impl<'m, 'a> Search<'m, 'a> {
    fn new(m: &'m Model<'a>, shared: &'m Shared, opts: &'m SolveOptions, start: Instant) -> Self {
        let mut s = Search {
            m,
            shared,
            opts,
            start,
            cfg: Config::free(m),
            decided: 0,
            st: State::new(m),
            nodes: 0,
            chunks: Vec::new(),
            large: Vec::new(),
            reach: Vec::new(),
            offers: Vec::new(),
            net: Vec::new(),
            mark: vec![0; m.graph.len()],
            generation: 0,
            behind: vec![0; m.graph.len()],
            seq: Vec::new(),
            pos: 0,
            seq_units: Vec::new(),
            seq_min: Vec::new(),
            inside: vec![true; m.graph.len()],
            inside_slot: vec![true; m.sources.len()],
            frame: None,
            memo: HashMap::new(),
        };
        s.set_seq((m.n_inputs..m.vms.len()).collect());
        s
    }

    fn set_seq(&mut self, seq: Vec<usize>) {
        let k = seq.len();
        self.seq_units = vec![0; k + 1];
        self.seq_min = vec![i64::MAX; k + 1];
        for p in (0..k).rev() {
            let u = self.m.vms[seq[p]].units;
            self.seq_units[p] = self.seq_units[p + 1] + u;
            self.seq_min[p] = self.seq_min[p + 1].min(u);
        }
        self.seq = seq;
        self.pos = 0;
    }

    fn incumbent(&self) -> f64 {
        f64::from_bits(self.shared.bits.load(Ordering::Relaxed))
    }

    fn keep(&self, bound: f64) -> bool {
        let (bound, inc) = match &self.frame {
            Some(f) => (bound - f.base, f.best.as_ref().map_or(f.limit, |b| b.0.min(f.limit))),
            None => (bound, self.incumbent()),
        };
        if self.opts.optimality_required {
            bound <= inc + TIE_EPS
        } else {
            bound < inc - 1e-9
        }
    }

    fn fits(&self, i: usize, h: usize) -> bool {
        self.st.omega[h] + self.m.vms[i].units <= self.cfg.limit[h]
    }

    /// Places the pinned inputs. False when they overload their sources.
    fn place_inputs(&mut self) -> bool {
        for i in 0..self.m.n_inputs {
            let h = self.m.vms[i].candidates[0];
            if !self.fits(i, h) {
                return false;
            }
            self.st.place(self.m, i, h);
        }
        true
    }

    /// Server counts worth trying for the next host to decide.
    fn count_range(&self) -> (i64, i64) {
        let h = self.m.order[self.decided];
        let n = self.m.graph.len();
        if h >= n {
            let x = h - n;
            let parent = self.m.sym.parent(x).expect("switched links have a parent");
            let live = self.cfg.target[x] != 0 && self.cfg.target[parent] != 0;
            return ((self.st.up[x] > 0) as i64, live as i64);
        }
        if self.m.switch[h] {
            return ((self.st.lambda[h] > 0) as i64, 1);
        }
        let c = &self.m.coeffs[h];
        let lo = c.servers(self.st.omega[h]);
        let most = c.servers(self.st.omega[h] + self.st.rem);
        (lo, c.max_servers.map_or(most, |k| most.min(k as i64)))
    }

    /// Fixes the next host's count. False when that breaks the canonical
    /// order of twin subtrees; the count is set either way.
    fn decide(&mut self, v: i64) -> bool {
        let m = self.m;
        let k = self.decided;
        let h = m.order[k];
        self.cfg.target[h] = v;
        if h < m.graph.len() {
            self.cfg.limit[h] = v.saturating_mul(m.coeffs[h].server_units).min(m.site_units[h].unwrap_or(i64::MAX));
        }
        self.decided += 1;
        let mut ok = true;
        for &u in &m.completes[k] {
            self.cfg.encode(m, u);
            ok &= m.sym.earlier_twins(u).iter().all(|&t| self.cfg.code[t] >= self.cfg.code[u]);
        }
        if ok && self.decided == m.order.len() {
            for u in 0..m.graph.len() {
                let twins = m.sym.earlier_twins(u).iter().copied().filter(|&t| self.cfg.code[t] == self.cfg.code[u]);
                self.cfg.twins[u] = twins.collect();
            }
        }
        ok
    }

    fn undecide(&mut self) {
        self.decided -= 1;
        let h = self.m.order[self.decided];
        self.cfg.target[h] = -1;
        if h < self.m.graph.len() {
            self.cfg.limit[h] = self.m.site_units[h].unwrap_or(i64::MAX);
        }
    }

    /// The route from the VM's source to the host crosses no switched-off
    /// node.
    fn reachable(&self, i: usize, h: usize) -> bool {
        let m = self.m;
        let s = m.sources[m.vms[i].source_slot];
        m.open(&self.cfg.target, s, h)
    }

    /// Every empty subtree on the way from the host to the root must be the
    /// first empty one among its twins with the same counts.
    fn allowed(&self, h: usize) -> bool {
        let used = &self.st.used;
        self.m
            .sym
            .ancestors(h)
            .filter(|&a| used[a] == 0)
            .all(|a| self.cfg.twins[a].iter().all(|&t| used[t] > 0))
    }

    /// Committed power plus a lower bound on what the remaining VMs add.
    ///
    /// Fixed parts first: servers still to open at hosts with a decided
    /// count, their LAN idle, and the idle of every inactive network node
    /// that is certainly crossed, either on the way from all sources to a
    /// host that will be active or because a source's remaining workload
    /// exceeds the capacity not behind the node.
    ///
    /// The remaining workload is then poured, fractionally, into the
    /// cheapest capacity chunks. A decided host first takes what it needs to
    /// justify its last server. A chunk is priced per GFLOPS with the
    /// proportional rate, plus for undecided hosts the idle of a new server
    /// spread over that server and an inactive LAN spread over what the host
    /// can receive, plus the idle of every other inactive node between a
    /// remaining source and the host spread over the most workload that can
    /// pass it. Spread shares never add up to more than the full idle, so
    /// the result never exceeds the power of a completion.
    fn bound(&mut self) -> f64 {
        let m = self.m;
        let st = &self.st;
        let cfg = &self.cfg;
        let n = m.graph.len();
        let hn = m.hosts.len();
        let rest = &self.seq[self.pos..];
        let r = self.seq_units[self.pos];
        let smallest = self.seq_min[self.pos];
        self.generation += 1;
        let gen = self.generation;
        let active: Vec<usize> =
            (0..m.sources.len()).filter(|&slot| st.rem_src[slot] > 0 && self.inside_slot[slot]).collect();

        // Hosts a source can still use without crossing a switched-off node.
        self.reach.clear();
        self.reach.resize(m.sources.len() * hn, true);
        if m.switched {
            for &slot in &active {
                let s = m.sources[slot];
                for (k, &h) in m.hosts.iter().enumerate() {
                    self.reach[slot * hn + k] = m.open(&cfg.target, s, h);
                }
            }
        }
        let reach = &self.reach;

        let mut fixed = 0.0;
        let mut needed: i64 = 0;
        for (k, &h) in m.hosts.iter().enumerate() {
            let t = cfg.target[h];
            if t <= 0 || !self.inside[h] {
                continue;
            }
            let c = &m.coeffs[h];
            let need = ((t - 1) * c.server_units + 1 - st.omega[h]).max(0);
            if need > 0 {
                if cfg.limit[h] - st.omega[h] < smallest.max(need) {
                    return f64::INFINITY;
                }
                // Some remaining VM lands here, so the route from its source
                // is crossed; mark what all candidate sources share.
                let mut from = active.iter().filter(|&&slot| reach[slot * hn + k]).map(|&slot| m.sources[slot]);
                let Some(first) = from.next() else {
                    return f64::INFINITY;
                };
                if m.amortize_network {
                    let others: Vec<usize> = from.collect();
                    for &x in &m.net_path[first * n + h] {
                        if others.iter().all(|&o| m.net_path[o * n + h].contains(&x)) {
                            self.mark[x as usize] = gen;
                        }
                    }
                }
            }
            needed += need;
            fixed += (t - c.servers(st.omega[h])).max(0) as f64 * c.pr_idle;
            if c.has_lan && st.omega[h] == 0 && st.theta[h] == 0 {
                fixed += c.lan_idle;
            }
        }
        if needed > r {
            return f64::INFINITY;
        }
        if r == 0 {
            return st.total;
        }
        if m.switched {
            for x in 0..n {
                if m.switch[x] && cfg.target[x] == 1 && self.inside[x] {
                    self.mark[x] = gen;
                }
            }
        }
        if m.amortize_network {
            for &slot in &active {
                let s = m.sources[slot];
                let need = st.rem_src[slot];
                self.behind.iter_mut().for_each(|b| *b = 0);
                let mut total = 0i64;
                for (k, &h) in m.hosts.iter().enumerate() {
                    if !reach[slot * hn + k] {
                        continue;
                    }
                    // Clamped so that unbounded sites do not saturate the sums.
                    let a = cfg.limit[h].saturating_sub(st.omega[h]).clamp(0, r);
                    total += a;
                    for &x in &m.net_path[s * n + h] {
                        self.behind[x as usize] += a;
                    }
                }
                if need > total {
                    return f64::INFINITY;
                }
                for x in 0..n {
                    if self.behind[x] > 0 && need > total - self.behind[x] {
                        self.mark[x] = gen;
                    }
                }
            }
            for x in 0..n {
                if self.mark[x] == gen && st.lambda[x] == 0 {
                    fixed += m.coeffs[x].net_idle;
                }
            }
        }

        // Per host: proportional rate, chunks as (extra rate, units), and
        // the units it must still receive.
        self.offers.clear();
        for (k, &h) in m.hosts.iter().enumerate() {
            let lim = cfg.limit[h];
            let avail = lim.saturating_sub(st.omega[h]);
            if avail < smallest || !active.iter().any(|&slot| reach[slot * hn + k]) {
                continue;
            }
            let c = &m.coeffs[h];
            let t = cfg.target[h];
            if t >= 0 {
                let need = if t > 0 { ((t - 1) * c.server_units + 1 - st.omega[h]).max(0) } else { 0 };
                let chunks = [(0.0, (avail - need).min(r)), (0.0, 0)];
                self.offers.push(Offer { host: h, slot: k, rate: c.pr_rate, need, chunks, avail, bin: false });
                continue;
            }
            let filled = c.servers(st.omega[h]) * c.server_units;
            let slack = filled - st.omega[h];
            let fresh = lim.saturating_sub(filled).min(r);
            let mut rate = c.pr_idle / units_to_gflops(c.server_units);
            if c.has_lan && st.omega[h] == 0 && st.theta[h] == 0 {
                rate += c.lan_idle / units_to_gflops(r.min(lim));
            }
            let chunks = [(0.0, slack.max(0)), (rate, fresh.max(0))];
            self.offers.push(Offer { host: h, slot: k, rate: c.pr_rate, need: 0, chunks, avail, bin: false });
        }

        // Bin packing: hosts no bigger than the largest single-server one
        // hold at most one item above half of it, so together they take at
        // most the small items plus one large item each.
        let span = self
            .offers
            .iter()
            .filter(|o| m.coeffs[o.host].max_servers == Some(1))
            .map(|o| o.avail)
            .max()
            .unwrap_or(0);
        let mut bin_cap = i64::MAX;
        let mut bin_need = 0;
        if span > 0 {
            let mut bins = 0;
            let mut widest = 0;
            for o in self.offers.iter_mut() {
                if o.avail <= span {
                    o.bin = true;
                    bins += 1;
                    widest = widest.max(o.avail);
                    bin_need += o.need;
                }
            }
            self.large.clear();
            let mut small = 0;
            for v in rest.iter().map(|&i| &m.vms[i]) {
                if 2 * v.units <= span {
                    small += v.units;
                } else if v.units <= widest {
                    self.large.push(v.units);
                }
            }
            self.large.sort_unstable_by(|a, b| b.cmp(a));
            let most = small + self.large.iter().take(bins).sum::<i64>();
            if most < bin_need {
                return f64::INFINITY;
            }
            bin_cap = most - bin_need;
        }

        // Network idle of every unforced inactive node between the source and
        // the host, spread over the most workload that can cross it.
        let k_count = self.offers.len();
        self.net.clear();
        self.net.resize(m.sources.len() * k_count, f64::INFINITY);
        for &slot in &active {
            let s = m.sources[slot];
            for (k, o) in self.offers.iter().enumerate() {
                if !reach[slot * hn + o.slot] {
                    continue;
                }
                let mut sum = 0.0;
                if m.amortize_network {
                    for &x in &m.net_path[s * n + o.host] {
                        let x = x as usize;
                        if st.lambda[x] == 0 && self.mark[x] != gen {
                            sum += m.coeffs[x].net_idle / units_to_gflops(r.min(m.cap_behind[x]));
                        }
                    }
                }
                self.net[slot * k_count + k] = sum;
            }
        }

        // Sources that reach nothing but the same bins must pack their items
        // into them.
        if active.len() > 1 && span > 0 {
            let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
            'slots: for &slot in &active {
                let mut seen = Vec::new();
                for (k, o) in self.offers.iter().enumerate() {
                    if self.net[slot * k_count + k].is_finite() {
                        if !o.bin {
                            continue 'slots;
                        }
                        seen.push(k);
                    }
                }
                groups.entry(seen).or_default().push(slot);
            }
            for (bins, slots) in &groups {
                let widest = bins.iter().map(|&k| self.offers[k].avail).max().unwrap_or(0);
                let room: i64 = bins.iter().map(|&k| self.offers[k].avail).sum();
                self.large.clear();
                self.large.extend(rest.iter().map(|&i| &m.vms[i]).filter(|v| slots.contains(&v.source_slot)).map(|v| v.units));
                if self.large.iter().sum::<i64>() > room || bins_needed(&mut self.large, widest) > bins.len() {
                    return f64::INFINITY;
                }
            }
        }

        // All remaining workload at once, each host priced from its nearest
        // source, honoring what decided hosts must still receive.
        let mut extra = 0.0;
        self.chunks.clear();
        for (k, o) in self.offers.iter().enumerate() {
            let net = active.iter().map(|&slot| self.net[slot * k_count + k]).fold(f64::INFINITY, f64::min);
            let base = o.rate + net;
            extra += base * units_to_gflops(o.need);
            for &(add, cap) in &o.chunks {
                if cap > 0 {
                    self.chunks.push((base + add, cap, o.bin));
                }
            }
        }
        let Some(pooled) = pour(&mut self.chunks, r - needed, bin_cap) else {
            return f64::INFINITY;
        };
        extra += pooled;

        // Each source on its own, priced from that source, ignoring that the
        // sources compete for capacity.
        if active.len() > 1 {
            let mut split = 0.0;
            for &slot in &active {
                self.chunks.clear();
                for (k, o) in self.offers.iter().enumerate() {
                    let net = self.net[slot * k_count + k];
                    if !net.is_finite() {
                        continue;
                    }
                    let base = o.rate + net;
                    let main = o.chunks[0].1 + o.need;
                    if main > 0 {
                        self.chunks.push((base + o.chunks[0].0, main, o.bin));
                    }
                    if o.chunks[1].1 > 0 {
                        self.chunks.push((base + o.chunks[1].0, o.chunks[1].1, o.bin));
                    }
                }
                match pour(&mut self.chunks, st.rem_src[slot], bin_cap.saturating_add(bin_need)) {
                    Some(v) => split += v,
                    None => return f64::INFINITY,
                }
            }
            extra = extra.max(split);
        }
        st.total + fixed + extra
    }

    fn tick(&mut self) -> bool {
        self.nodes += 1;
        if self.nodes % CLOCK_EVERY == 0 {
            if let Some(limit) = self.opts.time_limit {
                if self.start.elapsed().as_secs_f64() >= limit {
                    self.shared.stop.store(true, Ordering::Relaxed);
                }
            }
        }
        !self.shared.stop.load(Ordering::Relaxed)
    }

    /// Counts for the next host that pass the bound, cheapest first.
    fn count_options(&mut self) -> Vec<(f64, i64)> {
        let (lo, hi) = self.count_range();
        let mut out = Vec::new();
        for v in lo..=hi {
            if self.decide(v) {
                let b = self.bound();
                if b.is_finite() && self.keep(b) {
                    out.push((b, v));
                }
            }
            self.undecide();
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    /// Allowed hosts for the next VM, cheapest marginal power first.
    fn candidates(&mut self) -> Vec<(f64, usize)> {
        let i = self.seq[self.pos];
        let mut out = Vec::new();
        for &h in &self.m.vms[i].candidates {
            if !self.fits(i, h) || !self.allowed(h) || !self.reachable(i, h) {
                continue;
            }
            let before = self.st.total;
            self.st.place(self.m, i, h);
            let delta = self.st.total - before;
            self.st.unplace(self.m, i);
            out.push((delta, h));
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    /// Places the remaining VMs of the current subproblem.
    fn dfs(&mut self) {
        if !self.tick() {
            return;
        }
        if self.pos == self.seq.len() {
            self.finish();
            return;
        }
        let i = self.seq[self.pos];
        for (_, h) in self.candidates() {
            self.st.place(self.m, i, h);
            self.pos += 1;
            let b = self.bound();
            if self.keep(b) {
                self.dfs();
            }
            self.pos -= 1;
            self.st.unplace(self.m, i);
            if self.shared.stop.load(Ordering::Relaxed) {
                return;
            }
        }
    }

    /// Places the hidden VMs once every count is fixed. Groups of sources
    /// whose reachable nodes do not overlap are solved one by one, each
    /// result reused for every count vector that agrees on its nodes.
    fn place_hidden(&mut self) {
        let m = self.m;
        let groups = self.groups();
        if groups.len() < 2 {
            self.dfs();
            return;
        }
        let parts: Vec<(Vec<usize>, Vec<bool>, Vec<usize>)> = groups
            .into_iter()
            .map(|slots| {
                let items = (m.n_inputs..m.vms.len()).filter(|&i| slots[m.vms[i].source_slot]).collect();
                let region = self.region(&slots);
                (items, slots, region)
            })
            .collect();
        // Least power each region can end up with.
        let mut least = Vec::with_capacity(parts.len());
        for (items, slots, region) in &parts {
            let now: f64 = region.iter().map(|&x| self.st.cost[x]).sum();
            self.restrict(items.clone(), slots.clone(), region);
            let lo = self.bound() - self.st.total + now;
            self.unrestrict();
            if !lo.is_finite() {
                return;
            }
            least.push((lo, now));
        }
        let n = m.graph.len();
        let mut placed = Vec::new();
        let mut complete = true;
        for (k, (items, slots, region)) in parts.into_iter().enumerate() {
            let now: f64 = region.iter().map(|&x| self.st.cost[x]).sum();
            let later: f64 = least[k + 1..].iter().map(|(lo, now)| lo - now).sum();
            let limit = self.incumbent() - (self.st.total - now) - later;
            let seen = region.iter().flat_map(|&x| [(x, self.cfg.target[x]), (x, self.cfg.target[n + x])]).collect();
            let key = (slots.clone(), seen);
            // A second attempt runs without a limit, so no group is
            // searched more than twice.
            let (known, limit) = match self.memo.get(&key) {
                Some(Solved::Above(b)) if limit <= *b => (Some(None), limit),
                Some(Solved::Above(_)) => (None, f64::INFINITY),
                None => (None, limit),
                Some(Solved::Exact(h)) => (Some(h.clone()), limit),
            };
            let hosts = match known {
                Some(h) => h,
                None => {
                    let solved = self.group(items.clone(), slots, region, limit);
                    if self.shared.stop.load(Ordering::Relaxed) {
                        complete = false;
                        break;
                    }
                    self.memo.insert(key, solved.clone());
                    match solved {
                        Solved::Exact(h) => h,
                        Solved::Above(_) => None,
                    }
                }
            };
            let Some(hosts) = hosts else {
                complete = false;
                break;
            };
            for (&i, &h) in items.iter().zip(&hosts) {
                self.st.place(m, i, h);
                placed.push(i);
            }
        }
        if complete {
            self.leaf();
        }
        for &i in placed.iter().rev() {
            self.st.unplace(m, i);
        }
    }

    /// Sources with hidden VMs, grouped so that no two groups can reach a
    /// common node. One group when the network is not separable.
    fn groups(&self) -> Vec<Vec<bool>> {
        let m = self.m;
        let k = m.sources.len();
        let mut has = vec![false; k];
        for v in &m.vms[m.n_inputs..] {
            has[v.source_slot] = true;
        }
        if !m.separable {
            return vec![has];
        }
        let regions: Vec<Vec<usize>> = (0..k)
            .map(|slot| if has[slot] { self.region(&(0..k).map(|t| t == slot).collect::<Vec<_>>()) } else { Vec::new() })
            .collect();
        let mut root: Vec<usize> = (0..k).collect();
        fn find(root: &mut [usize], mut i: usize) -> usize {
            while root[i] != i {
                root[i] = root[root[i]];
                i = root[i];
            }
            i
        }
        for a in 0..k {
            for b in a + 1..k {
                if has[a] && has[b] && regions[a].iter().any(|x| regions[b].binary_search(x).is_ok()) {
                    let (ra, rb) = (find(&mut root, a), find(&mut root, b));
                    root[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        // Ordered by the first VM of each group in branch order.
        let mut out: Vec<(usize, Vec<bool>)> = Vec::new();
        for v in &m.vms[m.n_inputs..] {
            let r = find(&mut root, v.source_slot);
            if !out.iter().any(|(g, _)| *g == r) {
                out.push((r, (0..k).map(|t| has[t] && find(&mut root, t) == r).collect()));
            }
        }
        out.into_iter().map(|(_, g)| g).collect()
    }

    /// Limits the bound and the search to the given VMs, sources and nodes.
    fn restrict(&mut self, items: Vec<usize>, slots: Vec<bool>, region: &[usize]) {
        self.set_seq(items);
        self.inside.iter_mut().for_each(|b| *b = false);
        for &x in region {
            self.inside[x] = true;
        }
        self.inside_slot = slots;
    }

    fn unrestrict(&mut self) {
        self.set_seq((self.m.n_inputs..self.m.vms.len()).collect());
        self.inside.iter_mut().for_each(|b| *b = true);
        self.inside_slot.iter_mut().for_each(|b| *b = true);
    }

    /// Cheapest hosts for `items`, which only ever touch `region`, when the
    /// region's power can stay within `limit`.
    fn group(&mut self, items: Vec<usize>, slots: Vec<bool>, region: Vec<usize>, limit: f64) -> Solved {
        let inside: f64 = region.iter().map(|&x| self.st.cost[x]).sum();
        self.restrict(items, slots, &region);
        self.frame = Some(Frame { region, base: self.st.total - inside, limit, best: None });
        let b = self.bound();
        if self.keep(b) {
            self.dfs();
        }
        let f = self.frame.take().expect("set above");
        self.unrestrict();
        match f.best {
            Some((p, _, hosts)) if p <= limit + TIE_EPS => Solved::Exact(Some(hosts)),
            None if limit == f64::INFINITY => Solved::Exact(None),
            _ => Solved::Above(limit),
        }
    }

    /// Nodes that VMs of the given sources, placed or not, can reach.
    fn region(&self, slots: &[bool]) -> Vec<usize> {
        let m = self.m;
        let n = m.graph.len();
        let mut out = Vec::new();
        let mut seen = vec![false; n];
        for (slot, &s) in m.sources.iter().enumerate() {
            if !slots[slot] {
                continue;
            }
            let mut add = |x: usize| {
                if !std::mem::replace(&mut seen[x], true) {
                    out.push(x);
                }
            };
            add(s);
            for &h in &m.hosts {
                if h != s && self.cfg.target[h] > 0 && m.open(&self.cfg.target, s, h) {
                    add(h);
                    m.net_path[s * n + h].iter().for_each(|&x| add(x as usize));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Counts and switches of the region match the placement.
    fn exact(&self, region: &[usize]) -> bool {
        let m = self.m;
        region.iter().all(|&x| {
            let t = self.cfg.target[x];
            if m.edge[x] && (self.st.up[x] > 0) != (self.cfg.target[m.graph.len() + x] == 1) {
                return false;
            }
            if m.coeffs[x].has_pr {
                m.coeffs[x].servers(self.st.omega[x]) == t
            } else {
                !m.switch[x] || (self.st.lambda[x] > 0) == (t == 1)
            }
        })
    }

    fn finish(&mut self) {
        let m = self.m;
        let Some(f) = &self.frame else {
            self.leaf();
            return;
        };
        if !self.exact(&f.region) {
            return;
        }
        let power = stable_sum(f.region.iter().map(|&x| self.st.cost[x]));
        let hosts: Vec<usize> = m.key_order.iter().map(|&bi| self.st.host[bi]).collect();
        let canon = m.sym.canonical(&hosts);
        let mut member = vec![false; m.vms.len()];
        self.seq.iter().for_each(|&i| member[i] = true);
        let part: Vec<usize> = m.key_order.iter().zip(canon).filter(|(&bi, _)| member[bi]).map(|(_, h)| h).collect();
        let better = match &f.best {
            None => true,
            Some((p, k, _)) => power.total_cmp(p).then_with(|| part.cmp(k)).is_lt(),
        };
        if better {
            let own = self.seq.iter().map(|&i| self.st.host[i]).collect();
            self.frame.as_mut().expect("checked").best = Some((power, part, own));
        }
    }

    fn leaf(&mut self) {
        let m = self.m;
        if m.hosts.iter().any(|&h| m.coeffs[h].servers(self.st.omega[h]) != self.cfg.target[h]) {
            return;
        }
        let n = m.graph.len();
        if (0..n).any(|x| m.switch[x] && (self.st.lambda[x] > 0) != (self.cfg.target[x] == 1)) {
            return;
        }
        if (0..n).any(|x| m.edge[x] && (self.st.up[x] > 0) != (self.cfg.target[n + x] == 1)) {
            return;
        }
        let exact = stable_sum(self.st.cost.iter().copied());
        let inc = self.incumbent();
        if exact > inc || (!self.opts.optimality_required && exact >= inc) {
            return;
        }
        for x in 0..m.graph.len() {
            if self.st.lambda[x].max(self.st.theta[x]) > m.bitrate_units[x] {
                return;
            }
        }
        let hosts: Vec<usize> = m.key_order.iter().map(|&bi| self.st.host[bi]).collect();
        let key = m.sym.canonical(&hosts);
        let placement = m.placement_of(&key);
        if !validate(&placement, m.vsrs, m.graph).is_empty() {
            return;
        }
        offer(self.shared, exact, key);
    }
}

/// Lower bound on the number of bins of size `cap` that hold `items`
/// (Martello and Toth's L2), or `usize::MAX` when an item does not fit.
fn bins_needed(items: &mut [i64], cap: i64) -> usize {
    items.sort_unstable_by(|a, b| b.cmp(a));
    if items.first().is_some_and(|&w| w > cap) {
        return usize::MAX;
    }
    let mut best = 0;
    let mut ks: Vec<i64> = items.iter().copied().filter(|&w| 2 * w <= cap).collect();
    ks.push(0);
    ks.dedup();
    for k in ks {
        let (mut n12, mut sum2, mut sum3) = (0usize, 0i64, 0i64);
        let mut n2 = 0i64;
        for &w in items.iter() {
            if w > cap - k {
                n12 += 1;
            } else if 2 * w > cap {
                n12 += 1;
                n2 += 1;
                sum2 += w;
            } else if w >= k {
                sum3 += w;
            }
        }
        let over = sum3 - (n2 * cap - sum2);
        let extra = if over > 0 { ((over + cap - 1) / cap) as usize } else { 0 };
        best = best.max(n12 + extra);
    }
    best
}

/// Cheapest fractional fill of `units` over `(rate, capacity, bin)` chunks,
/// with at most `bin_cap` units in bin chunks.
fn pour(chunks: &mut [(f64, i64, bool)], units: i64, mut bin_cap: i64) -> Option<f64> {
    chunks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut left = units;
    let mut cost = 0.0;
    for &(rate, cap, bin) in chunks.iter() {
        if left == 0 {
            break;
        }
        let take = if bin { left.min(cap).min(bin_cap) } else { left.min(cap) };
        if bin {
            bin_cap -= take;
        }
        cost += rate * units_to_gflops(take);
        left -= take;
    }
    (left == 0).then_some(cost)
}

fn offer(shared: &Shared, power: f64, key: Vec<usize>) {
    let mut best = shared.best.lock().expect("incumbent lock");
    let better = match best.as_ref() {
        None => true,
        Some(b) => power.total_cmp(&b.power).then_with(|| key.cmp(&b.key)).is_lt(),
    };
    if better {
        let mut history = best.take().map(|b| b.history).unwrap_or_default();
        history.push(power);
        shared.bits.store(power.to_bits(), Ordering::Relaxed);
        *best = Some(Incumbent { power, key, history });
    }
}

/// Power of a complete host vector in branch order, or `None` when a site
/// or node capacity is exceeded.
fn evaluate(m: &Model, st: &mut State, hosts: &[usize]) -> Option<f64> {
    *st = State::new(m);
    for (i, &h) in hosts.iter().enumerate() {
        if m.site_units[h].is_some_and(|cap| st.omega[h] + m.vms[i].units > cap) {
            return None;
        }
        st.place(m, i, h);
    }
    let over = (0..m.graph.len()).any(|x| st.lambda[x].max(st.theta[x]) > m.bitrate_units[x]);
    (!over).then_some(st.total)
}

/// A good placement to start from: hidden VMs placed one by one at the
/// cheapest marginal power, then improved by moving single VMs, swapping
/// pairs and emptying hosts until nothing helps.
fn heuristic(m: &Model, opts: &SolveOptions, start: Instant) -> Option<(f64, Vec<usize>)> {
    let mut st = State::new(m);
    let mut hosts = Vec::with_capacity(m.vms.len());
    for (i, v) in m.vms.iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for &h in &v.candidates {
            if m.site_units[h].is_some_and(|cap| st.omega[h] + v.units > cap) {
                continue;
            }
            let before = st.total;
            st.place(m, i, h);
            let delta = st.total - before;
            st.unplace(m, i);
            if best.is_none_or(|(d, _)| delta < d) {
                best = Some((delta, h));
            }
        }
        let (_, h) = best?;
        st.place(m, i, h);
        hosts.push(h);
    }
    let mut power = evaluate(m, &mut st, &hosts)?;
    let out_of_time = || opts.time_limit.is_some_and(|t| start.elapsed().as_secs_f64() >= t);
    let hidden = m.n_inputs..m.vms.len();
    let mut improved = true;
    while improved && !out_of_time() {
        improved = false;
        let try_hosts = |st: &mut State, cand: Vec<usize>, power: &mut f64, hosts: &mut Vec<usize>| {
            if let Some(p) = evaluate(m, st, &cand) {
                if p < *power - 1e-9 {
                    *power = p;
                    *hosts = cand;
                    return true;
                }
            }
            false
        };
        for i in hidden.clone() {
            for &h in &m.vms[i].candidates {
                if h != hosts[i] {
                    let mut cand = hosts.clone();
                    cand[i] = h;
                    improved |= try_hosts(&mut st, cand, &mut power, &mut hosts);
                }
            }
        }
        for i in hidden.clone() {
            for j in i + 1..m.vms.len() {
                if hosts[i] != hosts[j] {
                    let mut cand = hosts.clone();
                    cand.swap(i, j);
                    improved |= try_hosts(&mut st, cand, &mut power, &mut hosts);
                }
            }
        }
        // Moving a host's VMs one at a time never pays its idle back.
        let used: Vec<usize> = hidden.clone().map(|i| hosts[i]).collect();
        for &h in &m.hosts {
            if !used.contains(&h) {
                continue;
            }
            let mut cand = hosts.clone();
            let mut ok = true;
            for i in hidden.clone().filter(|&i| hosts[i] == h) {
                let mut best: Option<(f64, usize)> = None;
                for &g in m.vms[i].candidates.iter().filter(|&&g| g != h) {
                    cand[i] = g;
                    if let Some(p) = evaluate(m, &mut st, &cand) {
                        if best.is_none_or(|(b, _)| p < b) {
                            best = Some((p, g));
                        }
                    }
                }
                match best {
                    Some((_, g)) => cand[i] = g,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                improved |= try_hosts(&mut st, cand, &mut power, &mut hosts);
            }
        }
    }
    evaluate(m, &mut st, &hosts)?;
    let exact = stable_sum(st.cost.iter().copied());
    let ordered: Vec<usize> = m.key_order.iter().map(|&bi| hosts[bi]).collect();
    let key = m.sym.canonical(&ordered);
    validate(&m.placement_of(&key), m.vsrs, m.graph).is_empty().then_some((exact, key))
}

/// Count prefix waiting in the queue, cheapest bound first, deeper first
/// among equal bounds.
struct Pending {
    bound: f64,
    prefix: Vec<i64>,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // Reversed: BinaryHeap pops the maximum.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.prefix.len().cmp(&other.prefix.len()))
            .then_with(|| other.prefix.cmp(&self.prefix))
    }
}

struct Queue {
    heap: BinaryHeap<Pending>,
    busy: usize,
}

/// Runs the search from an optional starting incumbent.
///
/// Count prefixes are expanded best bound first from a shared queue; a
/// worker that pops a complete count vector places the hidden VMs under it.
pub(super) fn run(m: &Model, opts: &SolveOptions, start: Instant, seed: Option<(f64, Vec<usize>)>) -> Outcome {
    let shared = Shared {
        best: Mutex::new(None),
        bits: AtomicU64::new(f64::INFINITY.to_bits()),
        stop: AtomicBool::new(false),
        nodes: AtomicU64::new(0),
    };
    if let Some((p, key)) = seed {
        offer(&shared, p, key);
    }
    if let Some((p, key)) = heuristic(m, opts, start) {
        offer(&shared, p, key);
    }
    let queue = Mutex::new(Queue { heap: BinaryHeap::new(), busy: 0 });
    {
        let mut root = Search::new(m, &shared, opts, start);
        if root.place_inputs() {
            let b = root.bound();
            if b.is_finite() && root.keep(b) {
                queue.lock().expect("queue lock").heap.push(Pending { bound: b, prefix: Vec::new() });
            }
        }
    }

    std::thread::scope(|scope| {
        for _ in 0..opts.worker_count.max(1) {
            scope.spawn(|| {
                let mut w = Search::new(m, &shared, opts, start);
                w.place_inputs();
                while !shared.stop.load(Ordering::Relaxed) {
                    let next = {
                        let mut q = queue.lock().expect("queue lock");
                        match q.heap.pop() {
                            Some(p) => {
                                q.busy += 1;
                                Some(p)
                            }
                            None if q.busy == 0 => break,
                            None => None,
                        }
                    };
                    let Some(p) = next else {
                        std::thread::yield_now();
                        continue;
                    };
                    let mut children = Vec::new();
                    let mut unfinished = false;
                    if w.keep(p.bound) && !shared.stop.load(Ordering::Relaxed) {
                        for &v in &p.prefix {
                            w.decide(v);
                        }
                        if w.decided == m.order.len() {
                            w.place_hidden();
                            unfinished = shared.stop.load(Ordering::Relaxed);
                        } else if w.tick() {
                            for (b, v) in w.count_options() {
                                let mut prefix = p.prefix.clone();
                                prefix.push(v);
                                children.push(Pending { bound: b, prefix });
                            }
                        } else {
                            unfinished = true;
                        }
                        for _ in &p.prefix {
                            w.undecide();
                        }
                    } else if w.keep(p.bound) {
                        unfinished = true;
                    }
                    let mut q = queue.lock().expect("queue lock");
                    q.heap.extend(children);
                    if unfinished {
                        q.heap.push(p);
                    }
                    q.busy -= 1;
                }
                shared.nodes.fetch_add(w.nodes, Ordering::Relaxed);
            });
        }
    });

    let q = queue.into_inner().expect("queue lock");
    let open_bound = q.heap.iter().map(|p| p.bound).fold(f64::INFINITY, f64::min);
    Outcome {
        best: shared.best.into_inner().expect("incumbent lock"),
        nodes: shared.nodes.load(Ordering::Relaxed),
        stopped: shared.stop.load(Ordering::Relaxed),
        open_bound,
    }
}
