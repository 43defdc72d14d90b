//! Complete solutions and their exact power.
//!
//! A [`Placement`] maps every VM to a processing node. From it follow the
//! inter-node traffic ([`derive_traffic`]), the routed flows ([`route`]) and
//! the power breakdown ([`evaluate_power`]). The evaluator is the reference
//! the solver and the MILP objective are checked against.
//!
//! Loads are accumulated in integer units (see [`crate::units`]) and node
//! totals are added in sorted order, so two placements that differ only by a
//! relabelling of interchangeable nodes evaluate to bit-identical totals.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::NodeClass;
use crate::error::{Error, LinkOverload, Result};
use crate::topology::{NodeId, PhysicalGraph, PhysicalNode};
use crate::units::{gflops_to_units, mbps_to_units, stable_sum, units_to_gbps, units_to_gflops, UNITS_PER_GBPS};
use crate::vsr::{VmRef, Vsr};

/// VM to processing-node assignment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Placement {
    assign: BTreeMap<VmRef, NodeId>,
}

impl Placement {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, vm: VmRef, node: NodeId) -> Option<NodeId> {
        self.assign.insert(vm, node)
    }

    pub fn remove(&mut self, vm: VmRef) -> Option<NodeId> {
        self.assign.remove(&vm)
    }

    pub fn get(&self, vm: VmRef) -> Option<NodeId> {
        self.assign.get(&vm).copied()
    }

    pub fn len(&self) -> usize {
        self.assign.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assign.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VmRef, NodeId)> + '_ {
        self.assign.iter().map(|(&v, &n)| (v, n))
    }

    /// Input VMs on their pinned device, hidden VMs on `host`.
    pub fn all_hidden_on(vsrs: &[Vsr], host: NodeId) -> Placement {
        let mut p = Placement::new();
        for r in vsrs {
            for vm in &r.vms {
                p.insert(vm.vm_ref(), if vm.is_input { vm.pinned_source.unwrap_or(host) } else { host });
            }
        }
        p
    }

    pub fn to_toml(&self) -> Result<String> {
        let assign = self.iter().map(|(v, n)| PlacementEntry { vsr: v.vsr, vm: v.vm, node: n.0 }).collect();
        Ok(toml::to_string(&PlacementFile { assign })?)
    }

    /// Parses a placement file; a VM listed twice is an error.
    pub fn from_toml(text: &str) -> Result<Placement> {
        let file: PlacementFile = toml::from_str(text)?;
        let mut p = Placement::new();
        let mut dup = Vec::new();
        for e in file.assign {
            let vm = VmRef { vsr: e.vsr, vm: e.vm };
            if p.insert(vm, NodeId(e.node)).is_some() {
                dup.push(vm.to_string());
            }
        }
        if dup.is_empty() {
            Ok(p)
        } else {
            Err(Error::Config(format!("VMs placed more than once: {}", dup.join(", "))))
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Placement> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

impl FromIterator<(VmRef, NodeId)> for Placement {
    fn from_iter<I: IntoIterator<Item = (VmRef, NodeId)>>(iter: I) -> Self {
        Placement { assign: iter.into_iter().collect() }
    }
}

#[derive(Serialize, Deserialize)]
struct PlacementEntry {
    vsr: u32,
    vm: u32,
    node: usize,
}

#[derive(Serialize, Deserialize)]
struct PlacementFile {
    #[serde(default)]
    assign: Vec<PlacementEntry>,
}

/// Aggregated demand between distinct processing nodes, in kbps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrafficMatrix {
    demand: BTreeMap<(NodeId, NodeId), i64>,
}

impl TrafficMatrix {
    pub fn gbps(&self, from: NodeId, to: NodeId) -> f64 {
        units_to_gbps(self.demand.get(&(from, to)).copied().unwrap_or(0))
    }

    pub fn iter_gbps(&self) -> impl Iterator<Item = ((NodeId, NodeId), f64)> + '_ {
        self.demand.iter().map(|(&k, &v)| (k, units_to_gbps(v)))
    }

    pub fn len(&self) -> usize {
        self.demand.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demand.is_empty()
    }
}

/// `lambda^{b,e}`: the sum of virtual-link bitrates whose endpoints sit on
/// `b` and `e`. Co-located endpoints contribute nothing.
pub fn derive_traffic(placement: &Placement, vsrs: &[Vsr]) -> Result<TrafficMatrix> {
    let mut demand = BTreeMap::new();
    for r in vsrs {
        for vm in &r.vms {
            if placement.get(vm.vm_ref()).is_none() {
                return Err(Error::IncompletePlacement(vm.vm_ref()));
            }
        }
        for l in &r.links {
            let b = placement.get(l.from_ref()).ok_or(Error::IncompletePlacement(l.from_ref()))?;
            let e = placement.get(l.to_ref()).ok_or(Error::IncompletePlacement(l.to_ref()))?;
            if b != e {
                *demand.entry((b, e)).or_insert(0) += mbps_to_units(l.bitrate);
            }
        }
    }
    Ok(TrafficMatrix { demand })
}

/// Unsplit shortest-path routing of a traffic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowAssignment {
    /// Route of every demand.
    pub paths: BTreeMap<(NodeId, NodeId), Vec<NodeId>>,
    demand: BTreeMap<(NodeId, NodeId), i64>,
    /// Directed link -> per-demand flow, kbps.
    link_flows: BTreeMap<(NodeId, NodeId), BTreeMap<(NodeId, NodeId), i64>>,
    /// `lambda_n` per node (zero for nodes without network equipment), kbps.
    node_traffic: Vec<i64>,
    /// `theta_p` per node, kbps.
    lan_traffic: Vec<i64>,
}

impl FlowAssignment {
    /// `lambda_{m,n}^{b,e}` in Gbps.
    pub fn link_flow(&self, m: NodeId, n: NodeId, b: NodeId, e: NodeId) -> f64 {
        units_to_gbps(self.link_flows.get(&(m, n)).and_then(|f| f.get(&(b, e))).copied().unwrap_or(0))
    }

    pub fn link_load(&self, m: NodeId, n: NodeId) -> f64 {
        units_to_gbps(self.link_flows.get(&(m, n)).map(|f| f.values().sum()).unwrap_or(0))
    }

    /// `lambda_n` in Gbps.
    pub fn node_traffic(&self, n: NodeId) -> f64 {
        units_to_gbps(self.node_traffic[n.0])
    }

    /// `theta_p` in Gbps.
    pub fn lan_traffic(&self, p: NodeId) -> f64 {
        units_to_gbps(self.lan_traffic[p.0])
    }

    /// `beta_n`.
    pub fn is_active(&self, n: NodeId) -> bool {
        self.node_traffic[n.0] > 0
    }

    /// Directed links carrying flow, with their per-demand flows in Gbps.
    pub fn iter_link_flows(&self) -> impl Iterator<Item = ((NodeId, NodeId), (NodeId, NodeId), f64)> + '_ {
        self.link_flows
            .iter()
            .flat_map(|(&link, flows)| flows.iter().map(move |(&pair, &v)| (link, pair, units_to_gbps(v))))
    }

    /// Out-flow minus in-flow of demand `(b, e)` at node `m`, minus the
    /// demand at the source and plus it at the destination, in kbps. Zero
    /// everywhere when flow is conserved.
    pub fn conservation_residual(&self, b: NodeId, e: NodeId, m: NodeId) -> i64 {
        let mut out = 0;
        let mut inn = 0;
        for (&(x, y), flows) in &self.link_flows {
            if let Some(&f) = flows.get(&(b, e)) {
                if x == m {
                    out += f;
                }
                if y == m {
                    inn += f;
                }
            }
        }
        let d = self.demand.get(&(b, e)).copied().unwrap_or(0);
        let expected = if m == b {
            d
        } else if m == e {
            -d
        } else {
            0
        };
        out - inn - expected
    }

    /// Largest absolute conservation residual over all demands and nodes.
    pub fn max_conservation_residual(&self, node_count: usize) -> i64 {
        let mut worst = 0;
        for &(b, e) in self.demand.keys() {
            for m in 0..node_count {
                worst = worst.max(self.conservation_residual(b, e, NodeId(m)).abs());
            }
        }
        worst
    }
}

/// Routes every demand on its shortest path and aggregates node traffic.
pub fn route(traffic: &TrafficMatrix, graph: &PhysicalGraph) -> Result<FlowAssignment> {
    let mut fa = FlowAssignment {
        paths: BTreeMap::new(),
        demand: traffic.demand.clone(),
        link_flows: BTreeMap::new(),
        node_traffic: vec![0; graph.len()],
        lan_traffic: vec![0; graph.len()],
    };
    for (&(b, e), &d) in &traffic.demand {
        let path = graph.route(b, e)?.to_vec();
        for w in path.windows(2) {
            *fa.link_flows.entry((w[0], w[1])).or_default().entry((b, e)).or_insert(0) += d;
        }
        for &n in &path {
            if graph.node(n).network.is_some() {
                fa.node_traffic[n.0] += d;
            }
        }
        fa.lan_traffic[b.0] += d;
        fa.lan_traffic[e.0] += d;
        fa.paths.insert((b, e), path);
    }
    let overloads = link_overloads(&fa, graph);
    if overloads.is_empty() {
        Ok(fa)
    } else {
        Err(Error::CapacityViolation(overloads))
    }
}

fn link_overloads(fa: &FlowAssignment, graph: &PhysicalGraph) -> Vec<LinkOverload> {
    let mut out = Vec::new();
    for (&(m, n), flows) in &fa.link_flows {
        let load: i64 = flows.values().sum();
        let cap = graph.link_between(m, n).map_or(0.0, |l| l.capacity);
        if load as f64 > cap * UNITS_PER_GBPS {
            out.push(LinkOverload { from: m, to: n, load_gbps: units_to_gbps(load), capacity_gbps: cap });
        }
    }
    out
}

/// Reporting layer of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Iot,
    AccessFog,
    MetroFog,
    Cdc,
    Access,
    Metro,
    Core,
}

impl Layer {
    pub const ALL: [Layer; 7] =
        [Layer::Iot, Layer::AccessFog, Layer::MetroFog, Layer::Cdc, Layer::Access, Layer::Metro, Layer::Core];

    pub fn of(class: NodeClass) -> Layer {
        match class {
            NodeClass::Iot => Layer::Iot,
            NodeClass::AccessFog => Layer::AccessFog,
            NodeClass::MetroFog => Layer::MetroFog,
            NodeClass::Cdc => Layer::Cdc,
            NodeClass::Onu | NodeClass::Olt => Layer::Access,
            NodeClass::MetroSwitch | NodeClass::MetroRouter => Layer::Metro,
            NodeClass::CoreNode => Layer::Core,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Iot => "iot",
            Layer::AccessFog => "af",
            Layer::MetroFog => "mf",
            Layer::Cdc => "cdc",
            Layer::Access => "access",
            Layer::Metro => "metro",
            Layer::Core => "core",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Power of one node, split by term. All values in watts, PUE included.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePower {
    pub node: NodeId,
    pub name: String,
    pub class: NodeClass,
    pub network_idle: f64,
    pub network_proportional: f64,
    pub processing_idle: f64,
    pub processing_proportional: f64,
    pub lan_idle: f64,
    pub lan_proportional: f64,
    /// `Omega_p`, GFLOPS.
    pub workload: f64,
    /// `lambda_n` for network nodes, `theta_p` for processing nodes, Gbps.
    pub traffic: f64,
    /// `N_p`.
    pub servers: u64,
    /// `beta_n` or `Phi_p`.
    pub active: bool,
}

impl NodePower {
    pub fn network(&self) -> f64 {
        self.network_idle + self.network_proportional
    }

    pub fn processing(&self) -> f64 {
        self.processing_idle + self.processing_proportional + self.lan_idle + self.lan_proportional
    }

    pub fn total(&self) -> f64 {
        self.network() + self.processing()
    }


    fn components(&self) -> [(&'static str, f64); 6] {
        [
            ("network_idle", self.network_idle),
            ("network_proportional", self.network_proportional),
            ("processing_idle", self.processing_idle),
            ("processing_proportional", self.processing_proportional),
            ("lan_idle", self.lan_idle),
            ("lan_proportional", self.lan_proportional),
        ]
    }
}

/// Per-node power coefficients with PUE folded in. Every power figure in the
/// crate goes through [`Coeffs::terms`], so the search and the evaluator
/// agree to the last bit.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Coeffs {
    pub has_net: bool,
    pub net_idle: f64,
    pub net_rate: f64,
    pub has_pr: bool,
    pub pr_idle: f64,
    pub pr_rate: f64,
    /// Per-server capacity in workload units.
    pub server_units: i64,
    pub max_servers: Option<u32>,
    pub has_lan: bool,
    pub lan_idle: f64,
    pub lan_rate: f64,
}

/// The six power terms of a node plus its server count and activity.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Terms {
    pub network_idle: f64,
    pub network_proportional: f64,
    pub processing_idle: f64,
    pub processing_proportional: f64,
    pub lan_idle: f64,
    pub lan_proportional: f64,
    pub servers: i64,
    pub active: bool,
}

impl Terms {
    pub fn total(&self) -> f64 {
        (self.network_idle + self.network_proportional)
            + (self.processing_idle + self.processing_proportional + self.lan_idle + self.lan_proportional)
    }
}

impl Coeffs {
    pub fn of(node: &PhysicalNode) -> Coeffs {
        let mut c = Coeffs::default();
        if let Some(net) = &node.network {
            c.has_net = true;
            c.net_idle = node.pue.pue_net * net.idle_power;
            c.net_rate = node.pue.pue_net * net.energy_per_gbps;
        }
        if let Some(pr) = &node.processing {
            c.has_pr = true;
            c.pr_idle = node.pue.pue_pr * pr.idle_power;
            c.pr_rate = node.pue.pue_pr * pr.energy_per_gflops;
            c.server_units = gflops_to_units(pr.capacity).max(1);
            c.max_servers = pr.max_servers;
            if let Some(lan) = &node.lan {
                c.has_lan = true;
                c.lan_idle = node.pue.pue_pr * lan.idle_power;
                c.lan_rate = node.pue.pue_pr * lan.energy_per_gbps;
            }
        }
        c
    }

    pub fn servers(&self, omega: i64) -> i64 {
        if omega <= 0 {
            0
        } else {
            (omega + self.server_units - 1) / self.server_units
        }
    }

    /// Largest workload the site can host, `None` when unbounded.
    pub fn site_units(&self) -> Option<i64> {
        if !self.has_pr {
            return Some(0);
        }
        self.max_servers.map(|k| k as i64 * self.server_units)
    }

    pub fn terms(&self, omega: i64, theta: i64, lambda: i64) -> Terms {
        let mut t = Terms::default();
        if self.has_net && lambda > 0 {
            t.active = true;
            t.network_idle = self.net_idle;
            t.network_proportional = self.net_rate * units_to_gbps(lambda);
        }
        if self.has_pr {
            t.servers = self.servers(omega);
            t.processing_idle = t.servers as f64 * self.pr_idle;
            t.processing_proportional = self.pr_rate * units_to_gflops(omega);
            if t.servers > 0 || theta > 0 {
                t.active = true;
                if self.has_lan {
                    t.lan_idle = self.lan_idle;
                    t.lan_proportional = self.lan_rate * units_to_gbps(theta);
                }
            }
        }
        t
    }

    pub fn total(&self, omega: i64, theta: i64, lambda: i64) -> f64 {
        self.terms(omega, theta, lambda).total()
    }
}

/// Power of `node` carrying `omega` units of work, `theta` units of LAN
/// traffic and `lambda` units of transit traffic.
pub(crate) fn node_power(node: &PhysicalNode, omega: i64, theta: i64, lambda: i64) -> NodePower {
    let t = Coeffs::of(node).terms(omega, theta, lambda);
    NodePower {
        node: node.id,
        name: node.name.clone(),
        class: node.class,
        network_idle: t.network_idle,
        network_proportional: t.network_proportional,
        processing_idle: t.processing_idle,
        processing_proportional: t.processing_proportional,
        lan_idle: t.lan_idle,
        lan_proportional: t.lan_proportional,
        workload: units_to_gflops(omega),
        traffic: if node.processing.is_some() { units_to_gbps(theta) } else { units_to_gbps(lambda) },
        servers: t.servers as u64,
        active: t.active,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LayerPower {
    pub network: f64,
    pub processing: f64,
    /// GFLOPS hosted in the layer.
    pub workload: f64,
}

/// Network and processing power of a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerBreakdown {
    /// Every node of the graph, in id order.
    pub nodes: Vec<NodePower>,
    pub layers: BTreeMap<Layer, LayerPower>,
    pub network: f64,
    pub processing: f64,
    pub total: f64,
}

impl PowerBreakdown {
    pub fn zero() -> PowerBreakdown {
        PowerBreakdown { nodes: Vec::new(), layers: BTreeMap::new(), network: 0.0, processing: 0.0, total: 0.0 }
    }

    pub(crate) fn from_nodes(nodes: Vec<NodePower>) -> PowerBreakdown {
        let mut layers: BTreeMap<Layer, LayerPower> = Layer::ALL.iter().map(|&l| (l, LayerPower::default())).collect();
        let mut parts: BTreeMap<Layer, (Vec<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for n in &nodes {
            let e = parts.entry(Layer::of(n.class)).or_default();
            e.0.push(n.network());
            e.1.push(n.processing());
            e.2.push(n.workload);
        }
        for (layer, (net, pr, wl)) in parts {
            layers.insert(layer, LayerPower { network: stable_sum(net), processing: stable_sum(pr), workload: stable_sum(wl) });
        }
        let network = stable_sum(nodes.iter().map(NodePower::network));
        let processing = stable_sum(nodes.iter().map(NodePower::processing));
        let total = stable_sum(nodes.iter().map(NodePower::total));
        PowerBreakdown { nodes, layers, network, processing, total }
    }

    pub fn layer(&self, layer: Layer) -> LayerPower {
        self.layers.get(&layer).copied().unwrap_or_default()
    }

    /// Independent re-addition of every component.
    pub fn component_sum(&self) -> f64 {
        self.nodes.iter().flat_map(|n| n.components().map(|(_, w)| w)).sum()
    }

    pub fn node(&self, id: NodeId) -> Option<&NodePower> {
        self.nodes.get(id.0)
    }

    /// `node,class,component,watts` rows, zero components omitted.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,class,component,watts\n");
        for n in &self.nodes {
            for (name, w) in n.components() {
                if w != 0.0 {
                    out.push_str(&format!("{},{},{},{}\n", n.name, n.class, name, w));
                }
            }
        }
        out
    }
}

/// Integer loads per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Loads {
    pub omega: Vec<i64>,
    pub theta: Vec<i64>,
    pub lambda: Vec<i64>,
}

impl Loads {
    pub fn new(nodes: usize) -> Loads {
        Loads { omega: vec![0; nodes], theta: vec![0; nodes], lambda: vec![0; nodes] }
    }

    pub fn power(&self, graph: &PhysicalGraph) -> PowerBreakdown {
        PowerBreakdown::from_nodes(
            graph
                .nodes()
                .iter()
                .map(|n| node_power(n, self.omega[n.id.0], self.theta[n.id.0], self.lambda[n.id.0]))
                .collect(),
        )
    }
}

fn loads_of(placement: &Placement, vsrs: &[Vsr], flows: &FlowAssignment, graph: &PhysicalGraph) -> Loads {
    let mut loads = Loads::new(graph.len());
    for r in vsrs {
        for vm in &r.vms {
            if let Some(h) = placement.get(vm.vm_ref()) {
                loads.omega[h.0] += gflops_to_units(vm.workload);
            }
        }
    }
    loads.theta.clone_from(&flows.lan_traffic);
    loads.lambda.clone_from(&flows.node_traffic);
    loads
}

/// Network plus processing power of a complete placement, PUE applied per node.
pub fn evaluate_power(placement: &Placement, vsrs: &[Vsr], graph: &PhysicalGraph) -> Result<PowerBreakdown> {
    let traffic = derive_traffic(placement, vsrs)?;
    check_hosts(placement, graph)?;
    let flows = route(&traffic, graph)?;
    Ok(loads_of(placement, vsrs, &flows, graph).power(graph))
}

fn check_hosts(placement: &Placement, graph: &PhysicalGraph) -> Result<()> {
    for (vm, n) in placement.iter() {
        if n.0 >= graph.len() || !graph.node(n).is_processing() {
            return Err(Error::InvalidParameter(format!("{vm} placed on {n}, which is not a processing node")));
        }
    }
    Ok(())
}

/// Power of a partial placement: placed VMs and the virtual links whose two
/// ends are placed. Equals [`evaluate_power`] when the placement is complete.
pub fn evaluate_partial(placement: &Placement, vsrs: &[Vsr], graph: &PhysicalGraph) -> Result<PowerBreakdown> {
    check_hosts(placement, graph)?;
    let mut demand = BTreeMap::new();
    for r in vsrs {
        for l in &r.links {
            if let (Some(b), Some(e)) = (placement.get(l.from_ref()), placement.get(l.to_ref())) {
                if b != e {
                    *demand.entry((b, e)).or_insert(0) += mbps_to_units(l.bitrate);
                }
            }
        }
    }
    let flows = route(&TrafficMatrix { demand }, graph)?;
    Ok(loads_of(placement, vsrs, &flows, graph).power(graph))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlacementViolation {
    Unplaced(VmRef),
    UnknownVm(VmRef),
    UnknownNode(VmRef, NodeId),
    NotProcessingNode(VmRef, NodeId),
    InputOffSource { vm: VmRef, placed: NodeId, pinned: Option<NodeId> },
    SiteOverloaded { node: NodeId, workload: f64, capacity: f64 },
    NodeOverloaded { node: NodeId, traffic: f64, capacity: f64 },
    LinkOverloaded(LinkOverload),
    NoRoute(NodeId, NodeId),
}

impl fmt::Display for PlacementViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlacementViolation::Unplaced(v) => write!(f, "{v} is not placed"),
            PlacementViolation::UnknownVm(v) => write!(f, "{v} is not part of any request"),
            PlacementViolation::UnknownNode(v, n) => write!(f, "{v} placed on unknown node {n}"),
            PlacementViolation::NotProcessingNode(v, n) => write!(f, "{v} on {n}: not a processing node"),
            PlacementViolation::InputOffSource { vm, placed, pinned } => {
                write!(f, "input {vm} placed on {placed}, pinned to {pinned:?}")
            }
            PlacementViolation::SiteOverloaded { node, workload, capacity } => {
                write!(f, "{node} hosts {workload} GFLOPS > capacity {capacity}")
            }
            PlacementViolation::NodeOverloaded { node, traffic, capacity } => {
                write!(f, "{node} carries {traffic} Gbps > capacity {capacity}")
            }
            PlacementViolation::LinkOverloaded(l) => write!(f, "{l}"),
            PlacementViolation::NoRoute(a, b) => write!(f, "no route {a} -> {b}"),
        }
    }
}

/// Every constraint violation of a placement; empty when feasible.
pub fn validate(placement: &Placement, vsrs: &[Vsr], graph: &PhysicalGraph) -> Vec<PlacementViolation> {
    let mut out = Vec::new();
    let mut known = BTreeMap::new();
    for r in vsrs {
        for vm in &r.vms {
            known.insert(vm.vm_ref(), vm);
            match placement.get(vm.vm_ref()) {
                None => out.push(PlacementViolation::Unplaced(vm.vm_ref())),
                Some(n) if vm.is_input && vm.pinned_source != Some(n) => out.push(PlacementViolation::InputOffSource {
                    vm: vm.vm_ref(),
                    placed: n,
                    pinned: vm.pinned_source,
                }),
                Some(_) => {}
            }
        }
    }
    let mut omega = vec![0i64; graph.len()];
    let mut hosts_ok = true;
    for (vm, n) in placement.iter() {
        let Some(spec) = known.get(&vm) else {
            out.push(PlacementViolation::UnknownVm(vm));
            continue;
        };
        if n.0 >= graph.len() {
            out.push(PlacementViolation::UnknownNode(vm, n));
            hosts_ok = false;
        } else if !graph.node(n).is_processing() {
            out.push(PlacementViolation::NotProcessingNode(vm, n));
            hosts_ok = false;
        } else {
            omega[n.0] += gflops_to_units(spec.workload);
        }
    }
    for node in graph.nodes() {
        if let Some(cap) = node.processing_capacity() {
            if omega[node.id.0] > gflops_to_units(cap) {
                out.push(PlacementViolation::SiteOverloaded {
                    node: node.id,
                    workload: units_to_gflops(omega[node.id.0]),
                    capacity: cap,
                });
            }
        }
    }
    if !hosts_ok {
        return out;
    }
    let mut demand = BTreeMap::new();
    for r in vsrs {
        for l in &r.links {
            if let (Some(b), Some(e)) = (placement.get(l.from_ref()), placement.get(l.to_ref())) {
                if b != e {
                    *demand.entry((b, e)).or_insert(0) += mbps_to_units(l.bitrate);
                }
            }
        }
    }
    let traffic = TrafficMatrix { demand };
    match route(&traffic, graph) {
        Ok(fa) => {
            for node in graph.nodes() {
                let cap = node.bitrate_capacity();
                let t = fa.node_traffic[node.id.0].max(fa.lan_traffic[node.id.0]);
                if t as f64 > cap * UNITS_PER_GBPS {
                    out.push(PlacementViolation::NodeOverloaded { node: node.id, traffic: units_to_gbps(t), capacity: cap });
                }
            }
        }
        Err(Error::CapacityViolation(links)) => out.extend(links.into_iter().map(PlacementViolation::LinkOverloaded)),
        Err(Error::NoPath { from, to }) => out.push(PlacementViolation::NoRoute(from, to)),
        Err(_) => {}
    }
    out
}
