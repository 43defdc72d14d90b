//! Physical cloud/fog network: IoT zones behind a PON access network, access
//! fog at each OLT, a metro switch/router pair with the metro fog, and an IP
//! over WDM core with the cloud data center one or more core hops away.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, LanProfile, NetworkProfile, NodeClass, ProcessingProfile, PueAssignment};
use crate::error::{Error, Result};
use crate::vsr::Vm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalNode {
    pub id: NodeId,
    pub name: String,
    pub class: NodeClass,
    pub network: Option<NetworkProfile>,
    pub processing: Option<ProcessingProfile>,
    pub lan: Option<LanProfile>,
    pub zone: Option<usize>,
    pub pue: PueAssignment,
}

impl PhysicalNode {
    pub fn is_processing(&self) -> bool {
        self.processing.is_some()
    }

    /// Gbps the node can switch: its own equipment, else its LAN.
    pub fn bitrate_capacity(&self) -> f64 {
        match (&self.network, &self.lan) {
            (Some(n), _) => n.bitrate_capacity,
            (None, Some(l)) => l.bitrate_capacity,
            (None, None) => f64::INFINITY,
        }
    }

    /// Total GFLOPS the site can host (`None` when unbounded).
    pub fn processing_capacity(&self) -> Option<f64> {
        let p = self.processing.as_ref()?;
        p.max_servers.map(|n| n as f64 * p.capacity)
    }
}

/// Undirected link.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalLink {
    pub a: NodeId,
    pub b: NodeId,
    /// Gbps per direction.
    pub capacity: f64,
    pub hop_weight: f64,
    /// Fiber length where known; carried as metadata only.
    pub distance_km: Option<f64>,
}

impl PhysicalLink {
    pub fn touches(&self, n: NodeId) -> bool {
        self.a == n || self.b == n
    }
}

fn default_cdc_core_hops() -> usize {
    1
}
fn default_af_servers() -> u32 {
    6
}
fn default_mf_servers() -> u32 {
    10
}
fn default_core_km() -> f64 {
    509.0
}
fn default_true() -> bool {
    true
}

/// Explicit shape of the network. Zones are spread over the OLTs as evenly as
/// possible, earlier OLTs taking the remainder, one ONU per zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub zones: usize,
    pub iot_per_zone: usize,
    /// Upper limit of ONUs (zones) aggregated by one OLT.
    pub onus_per_olt: usize,
    pub olt_count: usize,
    /// IoT indices (0-based, zone-major) that may act as request sources.
    pub input_nodes: Vec<usize>,
    #[serde(default = "default_true")]
    pub cdc_present: bool,
    #[serde(default = "default_cdc_core_hops")]
    pub cdc_core_hops: usize,
    #[serde(default = "default_af_servers")]
    pub af_servers: u32,
    #[serde(default = "default_mf_servers")]
    pub mf_servers: u32,
    #[serde(default = "default_core_km")]
    pub core_link_km: f64,
}

impl TopologyConfig {
    /// 10 zones x 2 IoT devices, one ONU per zone spread 4/3/3 over 3 OLTs,
    /// with a single input device (the first IoT).
    pub fn paper_default() -> TopologyConfig {
        TopologyConfig {
            zones: 10,
            iot_per_zone: 2,
            onus_per_olt: 4,
            olt_count: 3,
            input_nodes: vec![0],
            cdc_present: true,
            cdc_core_hops: 1,
            af_servers: 6,
            mf_servers: 10,
            core_link_km: 509.0,
        }
    }

    /// Same network with the first IoT of every zone as an input device.
    pub fn paper_default_per_zone() -> TopologyConfig {
        let mut cfg = Self::paper_default();
        cfg.input_nodes = cfg.first_iot_per_zone();
        cfg
    }

    /// 2 zones x 1 IoT, 2 OLTs each with an access fog, metro fog and CDC.
    pub fn reduced() -> TopologyConfig {
        TopologyConfig {
            zones: 2,
            iot_per_zone: 1,
            onus_per_olt: 1,
            olt_count: 2,
            input_nodes: vec![0, 1],
            ..Self::paper_default()
        }
    }

    pub fn iot_count(&self) -> usize {
        self.zones * self.iot_per_zone
    }

    pub fn first_iot_per_zone(&self) -> Vec<usize> {
        (0..self.zones).map(|z| z * self.iot_per_zone).collect()
    }

    /// Number of zones aggregated by each OLT.
    pub fn zones_per_olt(&self) -> Result<Vec<usize>> {
        self.validate()?;
        let base = self.zones / self.olt_count;
        let rem = self.zones % self.olt_count;
        Ok((0..self.olt_count).map(|k| base + usize::from(k < rem)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Construction(m));
        if self.zones == 0 || self.iot_per_zone == 0 {
            return fail("need at least one zone with one IoT device".into());
        }
        if self.olt_count == 0 || self.onus_per_olt == 0 {
            return fail("need at least one OLT aggregating at least one ONU".into());
        }
        if self.olt_count > self.zones {
            return fail(format!("{} OLTs for only {} zones", self.olt_count, self.zones));
        }
        if self.zones.div_ceil(self.olt_count) > self.onus_per_olt {
            return fail(format!(
                "{} zones do not fit {} OLTs x {} ONUs",
                self.zones, self.olt_count, self.onus_per_olt
            ));
        }
        if self.cdc_present && self.cdc_core_hops == 0 {
            return fail("the CDC must sit at least one core hop away".into());
        }
        if self.af_servers == 0 || self.mf_servers == 0 {
            return fail("fog sites need at least one server".into());
        }
        for &i in &self.input_nodes {
            if i >= self.iot_count() {
                return fail(format!("input IoT {i} does not exist ({} devices)", self.iot_count()));
            }
        }
        Ok(())
    }
}

/// The physical graph `G = (N, L)` with precomputed routes between
/// processing nodes. Immutable after construction.
#[derive(Debug, Clone)]
pub struct PhysicalGraph {
    nodes: Vec<PhysicalNode>,
    links: Vec<PhysicalLink>,
    adjacency: Vec<Vec<NodeId>>,
    link_of: BTreeMap<(NodeId, NodeId), usize>,
    inputs: Vec<NodeId>,
    processing: Vec<NodeId>,
    routes: BTreeMap<(NodeId, NodeId), Vec<NodeId>>,
}

impl PhysicalGraph {
    /// Assembles a graph from explicit nodes and links. Node ids must equal
    /// their position.
    pub fn new(nodes: Vec<PhysicalNode>, links: Vec<PhysicalLink>, inputs: Vec<NodeId>) -> Result<Self> {
        for (i, n) in nodes.iter().enumerate() {
            if n.id.0 != i {
                return Err(Error::Construction(format!("node {} stored at position {i}", n.id)));
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut link_of = BTreeMap::new();
        for (k, l) in links.iter().enumerate() {
            if l.a == l.b {
                return Err(Error::Construction(format!("self-loop at {}", l.a)));
            }
            if l.a.0 >= nodes.len() || l.b.0 >= nodes.len() {
                return Err(Error::Construction("link to unknown node".into()));
            }
            if !(l.capacity > 0.0) {
                return Err(Error::Construction(format!("link {}-{} has no capacity", l.a, l.b)));
            }
            let key = (l.a.min(l.b), l.a.max(l.b));
            if link_of.insert(key, k).is_some() {
                return Err(Error::Construction(format!("duplicate link {}-{}", l.a, l.b)));
            }
            adjacency[l.a.0].push(l.b);
            adjacency[l.b.0].push(l.a);
        }
        for adj in &mut adjacency {
            adj.sort();
        }
        for &i in &inputs {
            match nodes.get(i.0) {
                Some(n) if n.class == NodeClass::Iot => {}
                _ => return Err(Error::Construction(format!("input {i} is not an IoT device"))),
            }
        }
        let processing: Vec<NodeId> = nodes.iter().filter(|n| n.is_processing()).map(|n| n.id).collect();
        let mut g = PhysicalGraph { nodes, links, adjacency, link_of, inputs, processing, routes: BTreeMap::new() };
        let mut routes = BTreeMap::new();
        for &b in &g.processing {
            for &e in &g.processing {
                if b != e {
                    if let Ok(p) = g.shortest_path(b, e) {
                        routes.insert((b, e), p);
                    }
                }
            }
        }
        g.routes = routes;
        Ok(g)
    }

    pub fn nodes(&self) -> &[PhysicalNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &PhysicalNode {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn links(&self) -> &[PhysicalLink] {
        &self.links
    }

    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.adjacency[id.0]
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<&PhysicalLink> {
        self.link_of.get(&(a.min(b), a.max(b))).map(|&k| &self.links[k])
    }

    /// Input-capable IoT devices.
    pub fn inputs(&self) -> &[NodeId] {
        &self.inputs
    }

    /// Processing nodes in id order.
    pub fn processing_nodes(&self) -> &[NodeId] {
        &self.processing
    }

    pub fn nodes_of(&self, class: NodeClass) -> impl Iterator<Item = &PhysicalNode> + '_ {
        self.nodes.iter().filter(move |n| n.class == class)
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.name == name).map(|n| n.id)
    }

    /// Minimal-hop path; among equal-length paths the lexicographically
    /// smallest node-id sequence.
    pub fn shortest_path(&self, from: NodeId, to: NodeId) -> Result<Vec<NodeId>> {
        if from.0 >= self.len() || to.0 >= self.len() {
            return Err(Error::InvalidParameter(format!("{from} or {to} not in graph")));
        }
        let mut dist = vec![usize::MAX; self.len()];
        dist[to.0] = 0;
        let mut queue = VecDeque::from([to]);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u.0] {
                if dist[v.0] == usize::MAX {
                    dist[v.0] = dist[u.0] + 1;
                    queue.push_back(v);
                }
            }
        }
        if dist[from.0] == usize::MAX {
            return Err(Error::NoPath { from, to });
        }
        let mut path = vec![from];
        let mut cur = from;
        while cur != to {
            cur = *self.adjacency[cur.0]
                .iter()
                .find(|v| dist[v.0] + 1 == dist[cur.0])
                .expect("BFS layer has a predecessor");
            path.push(cur);
        }
        Ok(path)
    }

    /// Precomputed route between two distinct processing nodes.
    pub fn route(&self, from: NodeId, to: NodeId) -> Result<&[NodeId]> {
        self.routes
            .get(&(from, to))
            .map(Vec::as_slice)
            .ok_or(Error::NoPath { from, to })
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut stack = vec![NodeId(0)];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &self.adjacency[u.0] {
                if !seen[v.0] {
                    seen[v.0] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn is_tree(&self) -> bool {
        self.is_connected() && self.links.len() + 1 == self.nodes.len()
    }

    /// Tab-separated edge list: one header line, then one line per link.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::from("# a\tb\tname_a\tname_b\tcapacity_gbps\thop_weight\tdistance_km\n");
        for l in &self.links {
            let km = l.distance_km.map(|d| d.to_string()).unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                l.a.0,
                l.b.0,
                self.node(l.a).name,
                self.node(l.b).name,
                l.capacity,
                l.hop_weight,
                km
            ));
        }
        out
    }
}

/// Free-function form of [`PhysicalGraph::shortest_path`].
pub fn shortest_path(graph: &PhysicalGraph, from: NodeId, to: NodeId) -> Result<Vec<NodeId>> {
    graph.shortest_path(from, to)
}

/// Hosts a VM may be placed on: the pinned IoT for an input VM, every
/// processing node otherwise.
pub fn candidate_hosts(graph: &PhysicalGraph, vm: &Vm) -> Vec<NodeId> {
    match (vm.is_input, vm.pinned_source) {
        (true, Some(src)) => vec![src],
        (true, None) => Vec::new(),
        (false, _) => graph.processing_nodes().to_vec(),
    }
}

struct Builder<'a> {
    catalog: &'a Catalog,
    nodes: Vec<PhysicalNode>,
    links: Vec<PhysicalLink>,
}

impl Builder<'_> {
    fn add(&mut self, class: NodeClass, name: String, zone: Option<usize>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(PhysicalNode {
            id,
            name,
            class,
            network: self.catalog.network(class).cloned(),
            processing: self.catalog.processing(class).cloned(),
            lan: self.catalog.lan(class).cloned(),
            zone,
            pue: self.catalog.pue_for(class),
        });
        id
    }

    fn link(&mut self, a: NodeId, b: NodeId, distance_km: Option<f64>) {
        let capacity = self.nodes[a.0].bitrate_capacity().min(self.nodes[b.0].bitrate_capacity());
        self.links.push(PhysicalLink { a, b, capacity, hop_weight: 1.0, distance_km });
    }
}

/// Builds the layered network described by `config` with device figures from
/// `catalog`.
///
/// Node ids are assigned in a fixed order: IoT devices (zone-major), ONUs,
/// OLTs, access fogs, metro switch, metro fog, metro router, core nodes, CDC.
pub fn build_cfn(config: &TopologyConfig, catalog: &Catalog) -> Result<PhysicalGraph> {
    config.validate()?;
    catalog.validate()?;
    let zones_per_olt = config.zones_per_olt()?;
    let mut b = Builder { catalog, nodes: Vec::new(), links: Vec::new() };

    let iots: Vec<Vec<NodeId>> = (0..config.zones)
        .map(|z| {
            (0..config.iot_per_zone)
                .map(|k| b.add(NodeClass::Iot, format!("iot{}", z * config.iot_per_zone + k), Some(z)))
                .collect()
        })
        .collect();
    let onus: Vec<NodeId> = (0..config.zones).map(|z| b.add(NodeClass::Onu, format!("onu{z}"), Some(z))).collect();
    let olts: Vec<NodeId> = (0..config.olt_count).map(|k| b.add(NodeClass::Olt, format!("olt{k}"), None)).collect();
    let afs: Vec<NodeId> = (0..config.olt_count)
        .map(|k| b.add(NodeClass::AccessFog, format!("af{k}"), None))
        .collect();
    for &af in &afs {
        b.nodes[af.0].processing.as_mut().expect("fog has servers").max_servers = Some(config.af_servers);
    }
    let switch = b.add(NodeClass::MetroSwitch, "metro-switch".into(), None);
    let mf = b.add(NodeClass::MetroFog, "mf".into(), None);
    b.nodes[mf.0].processing.as_mut().expect("fog has servers").max_servers = Some(config.mf_servers);
    let router = b.add(NodeClass::MetroRouter, "metro-router".into(), None);
    let core_count = if config.cdc_present { config.cdc_core_hops + 1 } else { 1 };
    let cores: Vec<NodeId> = (0..core_count).map(|k| b.add(NodeClass::CoreNode, format!("core{k}"), None)).collect();
    let cdc = config.cdc_present.then(|| b.add(NodeClass::Cdc, "cdc".into(), None));

    // Edge: Wi-Fi from each IoT to its zone ONU. The passive splitter is a
    // pass-through and has no node of its own.
    for (z, devices) in iots.iter().enumerate() {
        for &d in devices {
            b.link(d, onus[z], None);
        }
    }
    let mut zone = 0;
    for (k, &count) in zones_per_olt.iter().enumerate() {
        for _ in 0..count {
            b.link(onus[zone], olts[k], None);
            zone += 1;
        }
        b.link(olts[k], afs[k], None);
        b.link(olts[k], switch, None);
    }
    b.link(switch, mf, None);
    b.link(switch, router, None);
    b.link(router, cores[0], None);
    for w in cores.windows(2) {
        b.link(w[0], w[1], Some(config.core_link_km));
    }
    if let Some(cdc) = cdc {
        b.link(*cores.last().expect("at least one core node"), cdc, None);
    }

    let inputs = config.input_nodes.iter().map(|&i| iots[i / config.iot_per_zone][i % config.iot_per_zone]).collect();
    PhysicalGraph::new(b.nodes, b.links, inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vsr::{Vm, VmRef};

    fn paper() -> PhysicalGraph {
        build_cfn(&TopologyConfig::paper_default(), &Catalog::default_catalog()).unwrap()
    }

    fn classes(g: &PhysicalGraph, path: &[NodeId]) -> Vec<NodeClass> {
        path.iter().map(|&n| g.node(n).class).collect()
    }

    #[test]
    fn paper_default_has_twenty_iot_devices() {
        let g = paper();
        assert_eq!(g.nodes_of(NodeClass::Iot).count(), 20);
        assert_eq!(g.nodes_of(NodeClass::Onu).count(), 10);
        assert_eq!(g.nodes_of(NodeClass::Olt).count(), 3);
        assert_eq!(g.nodes_of(NodeClass::AccessFog).count(), 3);
        assert_eq!(g.processing_nodes().len(), 25);
        assert!(g.is_tree());
    }

    #[test]
    fn onus_are_split_four_three_three() {
        let g = paper();
        let per_olt: Vec<usize> = g
            .nodes_of(NodeClass::Olt)
            .map(|olt| g.neighbors(olt.id).iter().filter(|&&n| g.node(n).class == NodeClass::Onu).count())
            .collect();
        assert_eq!(per_olt, vec![4, 3, 3]);
    }

    #[test]
    fn iot_to_cdc_crosses_every_layer() {
        let g = paper();
        let cdc = g.find("cdc").unwrap();
        let path = g.shortest_path(NodeId(0), cdc).unwrap();
        assert_eq!(path.len() - 1, 7);
        assert_eq!(
            classes(&g, &path[1..path.len() - 1]),
            vec![
                NodeClass::Onu,
                NodeClass::Olt,
                NodeClass::MetroSwitch,
                NodeClass::MetroRouter,
                NodeClass::CoreNode,
                NodeClass::CoreNode
            ]
        );
    }

    #[test]
    fn iot_to_own_access_fog() {
        let g = paper();
        let path = g.shortest_path(NodeId(0), g.find("af0").unwrap()).unwrap();
        let names: Vec<&str> = path.iter().map(|&n| g.node(n).name.as_str()).collect();
        assert_eq!(names, ["iot0", "onu0", "olt0", "af0"]);
        assert_eq!(g.shortest_path(NodeId(3), NodeId(3)).unwrap(), vec![NodeId(3)]);
    }

    #[test]
    fn disconnected_pair_has_no_path() {
        let c = Catalog::default_catalog();
        let node = |i: usize, class: NodeClass| PhysicalNode {
            id: NodeId(i),
            name: format!("x{i}"),
            class,
            network: c.network(class).cloned(),
            processing: c.processing(class).cloned(),
            lan: c.lan(class).cloned(),
            zone: None,
            pue: c.pue_for(class),
        };
        let g = PhysicalGraph::new(vec![node(0, NodeClass::Iot), node(1, NodeClass::Iot)], vec![], vec![]).unwrap();
        assert!(matches!(g.shortest_path(NodeId(0), NodeId(1)), Err(Error::NoPath { .. })));
        assert!(g.route(NodeId(0), NodeId(1)).is_err());
    }

    #[test]
    fn minimal_instance_without_cdc() {
        let cfg = TopologyConfig {
            zones: 1,
            iot_per_zone: 1,
            onus_per_olt: 1,
            olt_count: 1,
            input_nodes: vec![0],
            cdc_present: false,
            ..TopologyConfig::paper_default()
        };
        let g = build_cfn(&cfg, &Catalog::default_catalog()).unwrap();
        let classes: Vec<NodeClass> = g.processing_nodes().iter().map(|&n| g.node(n).class).collect();
        assert_eq!(classes, vec![NodeClass::Iot, NodeClass::AccessFog, NodeClass::MetroFog]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let c = Catalog::default_catalog();
        let mut cfg = TopologyConfig::paper_default();
        cfg.zones = 0;
        assert!(matches!(build_cfn(&cfg, &c), Err(Error::Construction(_))));
        let mut cfg = TopologyConfig::paper_default();
        cfg.onus_per_olt = 3;
        assert!(build_cfn(&cfg, &c).is_err());
        let mut cfg = TopologyConfig::paper_default();
        cfg.input_nodes = vec![20];
        assert!(build_cfn(&cfg, &c).is_err());
    }

    #[test]
    fn candidate_sets() {
        let g = paper();
        let input = Vm { vsr_id: 0, vm_id: 0, workload: 0.5, is_input: true, pinned_source: Some(NodeId(3)) };
        assert_eq!(candidate_hosts(&g, &input), vec![NodeId(3)]);
        let hidden = Vm { pinned_source: None, is_input: false, vm_id: 1, ..input };
        assert_eq!(candidate_hosts(&g, &hidden).len(), 20 + 3 + 1 + 1);
        let mut cfg = TopologyConfig::paper_default();
        cfg.cdc_present = false;
        let g = build_cfn(&cfg, &Catalog::default_catalog()).unwrap();
        let hosts = candidate_hosts(&g, &hidden);
        assert!(hosts.iter().all(|&h| g.node(h).class != NodeClass::Cdc));
        let _ = VmRef { vsr: 0, vm: 0 };
    }

    #[test]
    fn fog_server_limits_follow_config() {
        let g = paper();
        let af = g.node(g.find("af1").unwrap());
        assert_eq!(af.processing.as_ref().unwrap().max_servers, Some(6));
        assert_eq!(af.processing_capacity(), Some(6.0 * 47.7));
        let mf = g.node(g.find("mf").unwrap());
        assert_eq!(mf.processing.as_ref().unwrap().max_servers, Some(10));
    }

    #[test]
    fn edge_list_has_one_line_per_link() {
        let g = paper();
        let text = g.to_edge_list();
        assert_eq!(text.lines().count(), g.links().len() + 1);
        assert!(text.contains("core0\tcore1\t40\t1\t509"));
    }
}
