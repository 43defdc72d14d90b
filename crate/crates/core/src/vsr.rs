//! Virtual service requests: a DNN abstracted as an input VM plus
//! interconnected hidden-layer VMs, and the seeded generator for request sets.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{NodeId, PhysicalGraph};

/// `(request, vm)` pair; orders requests first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VmRef {
    pub vsr: u32,
    pub vm: u32,
}

impl fmt::Display for VmRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}.v{}", self.vsr, self.vm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vm {
    pub vsr_id: u32,
    pub vm_id: u32,
    /// GFLOPS.
    pub workload: f64,
    pub is_input: bool,
    /// IoT device that must host an input VM.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pinned_source: Option<NodeId>,
}

impl Vm {
    pub fn vm_ref(&self) -> VmRef {
        VmRef { vsr: self.vsr_id, vm: self.vm_id }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualLink {
    pub vsr_id: u32,
    pub from_vm: u32,
    pub to_vm: u32,
    /// Mbps.
    pub bitrate: f64,
}

impl VirtualLink {
    pub fn from_ref(&self) -> VmRef {
        VmRef { vsr: self.vsr_id, vm: self.from_vm }
    }

    pub fn to_ref(&self) -> VmRef {
        VmRef { vsr: self.vsr_id, vm: self.to_vm }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vsr {
    pub id: u32,
    pub vms: Vec<Vm>,
    #[serde(default)]
    pub links: Vec<VirtualLink>,
}

impl Vsr {
    pub fn input(&self) -> Option<&Vm> {
        self.vms.iter().find(|v| v.is_input)
    }

    pub fn hidden(&self) -> impl Iterator<Item = &Vm> + '_ {
        self.vms.iter().filter(|v| !v.is_input)
    }

    pub fn vm(&self, vm_id: u32) -> Option<&Vm> {
        self.vms.iter().find(|v| v.vm_id == vm_id)
    }

    pub fn workload(&self) -> f64 {
        self.vms.iter().map(|v| v.workload).sum()
    }
}

/// Closed interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub min: T,
    pub max: T,
}

impl<T: PartialOrd + Copy> Interval<T> {
    pub fn new(min: T, max: T) -> Self {
        Interval { min, max }
    }

    pub fn constant(v: T) -> Self {
        Interval { min: v, max: v }
    }

    pub fn contains(&self, v: T) -> bool {
        self.min <= v && v <= self.max
    }

    fn is_valid(&self) -> bool {
        self.min <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VsrShape {
    /// input -> h1 -> h2 -> ... (a layer pipeline).
    Chain,
    /// Each hidden VM takes one or two earlier VMs as predecessors.
    RandomDag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VsrGenConfig {
    pub hidden_vms: Interval<u32>,
    /// GFLOPS per hidden VM.
    pub hidden_workload: Interval<f64>,
    /// GFLOPS of the input VM.
    pub input_workload: Interval<f64>,
    /// Mbps per virtual link.
    pub link_bitrate: Interval<f64>,
    pub shape: VsrShape,
    pub seed: u64,
}

impl Default for VsrGenConfig {
    fn default() -> Self {
        VsrGenConfig {
            hidden_vms: Interval::new(2, 4),
            hidden_workload: Interval::new(2.0, 13.5),
            input_workload: Interval::new(0.01, 1.0),
            link_bitrate: Interval::constant(10.0),
            shape: VsrShape::Chain,
            seed: 0,
        }
    }
}

impl VsrGenConfig {
    pub fn with_seed(seed: u64) -> Self {
        VsrGenConfig { seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.hidden_vms.is_valid()
            && self.hidden_workload.is_valid()
            && self.input_workload.is_valid()
            && self.link_bitrate.is_valid()
            && self.hidden_workload.min > 0.0
            && self.input_workload.min > 0.0
            && self.link_bitrate.min > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid request generator ranges: {self:?}")))
        }
    }
}

/// Where request inputs come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputScenario {
    /// Every request reads from the same IoT device.
    SingleSource(NodeId),
    /// Requests are assigned round-robin to one IoT device per zone.
    PerZone(Vec<NodeId>),
}

impl InputScenario {
    fn source(&self, r: usize) -> NodeId {
        match self {
            InputScenario::SingleSource(n) => *n,
            InputScenario::PerZone(ns) => ns[r % ns.len()],
        }
    }

    fn sources(&self) -> &[NodeId] {
        match self {
            InputScenario::SingleSource(n) => std::slice::from_ref(n),
            InputScenario::PerZone(ns) => ns,
        }
    }
}

/// Draws uniformly from `[min, max]` and rounds to 1e-3.
fn draw(rng: &mut ChaCha8Rng, range: Interval<f64>) -> f64 {
    if range.min == range.max {
        return range.min;
    }
    let x = rng.gen_range(range.min..=range.max);
    ((x * 1e3).round() / 1e3).clamp(range.min, range.max)
}

/// Generates `n` requests. Request `r` depends only on the seed and `r`, so a
/// larger `n` extends a smaller one.
pub fn generate_vsrs(
    n: usize,
    gen: &VsrGenConfig,
    inputs: &InputScenario,
    graph: &PhysicalGraph,
) -> Result<Vec<Vsr>> {
    gen.validate()?;
    if inputs.sources().is_empty() {
        return Err(Error::Config("input scenario names no IoT device".into()));
    }
    for s in inputs.sources() {
        if !graph.inputs().contains(s) {
            return Err(Error::Config(format!("{s} is not an input IoT device")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(gen.seed);
    let mut out = Vec::with_capacity(n);
    for r in 0..n {
        let id = r as u32;
        let mut vms = vec![Vm {
            vsr_id: id,
            vm_id: 0,
            workload: draw(&mut rng, gen.input_workload),
            is_input: true,
            pinned_source: Some(inputs.source(r)),
        }];
        let k = rng.gen_range(gen.hidden_vms.min..=gen.hidden_vms.max);
        for j in 1..=k {
            vms.push(Vm {
                vsr_id: id,
                vm_id: j,
                workload: draw(&mut rng, gen.hidden_workload),
                is_input: false,
                pinned_source: None,
            });
        }
        let mut edges = BTreeSet::new();
        for j in 1..=k {
            match gen.shape {
                VsrShape::Chain => {
                    edges.insert((j - 1, j));
                }
                VsrShape::RandomDag => {
                    let preds = rng.gen_range(1..=2).min(j as usize);
                    for p in sample(&mut rng, j as usize, preds) {
                        edges.insert((p as u32, j));
                    }
                }
            }
        }
        let links = edges
            .into_iter()
            .map(|(from_vm, to_vm)| VirtualLink { vsr_id: id, from_vm, to_vm, bitrate: draw(&mut rng, gen.link_bitrate) })
            .collect();
        out.push(Vsr { id, vms, links });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Demand {
    pub gflops: f64,
    pub mbps: f64,
}

pub fn total_demand(vsrs: &[Vsr]) -> Demand {
    vsrs.iter().fold(Demand::default(), |acc, r| Demand {
        gflops: acc.gflops + r.vms.iter().map(|v| v.workload).sum::<f64>(),
        mbps: acc.mbps + r.links.iter().map(|l| l.bitrate).sum::<f64>(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum VsrViolation {
    NoInput,
    MultipleInputs(usize),
    InputHasPredecessor(VmRef),
    InputNotPinned(VmRef),
    HiddenPinned(VmRef),
    NonPositiveWorkload(VmRef),
    DuplicateVm(VmRef),
    ForeignVm(VmRef),
    SelfLoop(VmRef),
    UnknownEndpoint { from: u32, to: u32 },
    ForeignLink { from: u32, to: u32 },
    NonPositiveBitrate { from: u32, to: u32 },
    Disconnected,
}

impl fmt::Display for VsrViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VsrViolation::NoInput => write!(f, "no input"),
            VsrViolation::MultipleInputs(n) => write!(f, "multiple inputs ({n})"),
            VsrViolation::InputHasPredecessor(v) => write!(f, "input has predecessor ({v})"),
            VsrViolation::InputNotPinned(v) => write!(f, "input {v} has no source device"),
            VsrViolation::HiddenPinned(v) => write!(f, "hidden {v} is pinned"),
            VsrViolation::NonPositiveWorkload(v) => write!(f, "{v} has non-positive workload"),
            VsrViolation::DuplicateVm(v) => write!(f, "{v} appears twice"),
            VsrViolation::ForeignVm(v) => write!(f, "{v} belongs to another request"),
            VsrViolation::SelfLoop(v) => write!(f, "self-loop at {v}"),
            VsrViolation::UnknownEndpoint { from, to } => write!(f, "link {from}->{to} names an unknown VM"),
            VsrViolation::ForeignLink { from, to } => write!(f, "link {from}->{to} belongs to another request"),
            VsrViolation::NonPositiveBitrate { from, to } => write!(f, "link {from}->{to} has non-positive bitrate"),
            VsrViolation::Disconnected => write!(f, "request graph is not weakly connected"),
        }
    }
}

/// All violations of the request invariants; empty when well formed.
pub fn validate_vsr(vsr: &Vsr) -> Vec<VsrViolation> {
    let mut out = Vec::new();
    let inputs: Vec<&Vm> = vsr.vms.iter().filter(|v| v.is_input).collect();
    match inputs.len() {
        0 => out.push(VsrViolation::NoInput),
        1 => {}
        n => out.push(VsrViolation::MultipleInputs(n)),
    }
    let mut ids = BTreeSet::new();
    for v in &vsr.vms {
        if v.vsr_id != vsr.id {
            out.push(VsrViolation::ForeignVm(v.vm_ref()));
        }
        if !ids.insert(v.vm_id) {
            out.push(VsrViolation::DuplicateVm(v.vm_ref()));
        }
        if !(v.workload > 0.0) {
            out.push(VsrViolation::NonPositiveWorkload(v.vm_ref()));
        }
        match (v.is_input, v.pinned_source) {
            (true, None) => out.push(VsrViolation::InputNotPinned(v.vm_ref())),
            (false, Some(_)) => out.push(VsrViolation::HiddenPinned(v.vm_ref())),
            _ => {}
        }
    }
    for l in &vsr.links {
        let (from, to) = (l.from_vm, l.to_vm);
        if l.vsr_id != vsr.id {
            out.push(VsrViolation::ForeignLink { from, to });
        }
        if from == to {
            out.push(VsrViolation::SelfLoop(l.from_ref()));
        }
        if !ids.contains(&from) || !ids.contains(&to) {
            out.push(VsrViolation::UnknownEndpoint { from, to });
        }
        if !(l.bitrate > 0.0) {
            out.push(VsrViolation::NonPositiveBitrate { from, to });
        }
        if let Some(input) = inputs.iter().find(|v| v.vm_id == to) {
            out.push(VsrViolation::InputHasPredecessor(input.vm_ref()));
        }
    }
    if !weakly_connected(vsr) {
        out.push(VsrViolation::Disconnected);
    }
    out
}

fn weakly_connected(vsr: &Vsr) -> bool {
    let Some(first) = vsr.vms.first() else {
        return true;
    };
    let mut seen = BTreeSet::from([first.vm_id]);
    let mut stack = vec![first.vm_id];
    while let Some(u) = stack.pop() {
        for l in &vsr.links {
            let other = if l.from_vm == u {
                l.to_vm
            } else if l.to_vm == u {
                l.from_vm
            } else {
                continue;
            };
            if seen.insert(other) {
                stack.push(other);
            }
        }
    }
    vsr.vms.iter().all(|v| seen.contains(&v.vm_id))
}

#[derive(Serialize, Deserialize)]
struct VsrFile {
    #[serde(default)]
    vsr: Vec<Vsr>,
}

/// Serializes a request set as TOML (`[[vsr]]` tables).
pub fn to_toml(vsrs: &[Vsr]) -> Result<String> {
    Ok(toml::to_string(&VsrFile { vsr: vsrs.to_vec() })?)
}

pub fn from_toml(text: &str) -> Result<Vec<Vsr>> {
    let file: VsrFile = toml::from_str(text)?;
    Ok(file.vsr)
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<Vsr>> {
    from_toml(&std::fs::read_to_string(path)?)
}

pub fn save(vsrs: &[Vsr], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_toml(vsrs)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;
    use crate::topology::{build_cfn, TopologyConfig};
    use proptest::prelude::*;

    fn graph(cfg: TopologyConfig) -> PhysicalGraph {
        build_cfn(&cfg, &Catalog::default_catalog()).unwrap()
    }

    fn chain(workloads: &[f64]) -> Vsr {
        let vms = workloads
            .iter()
            .enumerate()
            .map(|(i, &w)| Vm {
                vsr_id: 0,
                vm_id: i as u32,
                workload: w,
                is_input: i == 0,
                pinned_source: (i == 0).then_some(NodeId(0)),
            })
            .collect();
        let links = (1..workloads.len() as u32)
            .map(|j| VirtualLink { vsr_id: 0, from_vm: j - 1, to_vm: j, bitrate: 10.0 })
            .collect();
        Vsr { id: 0, vms, links }
    }

    #[test]
    fn zero_requests() {
        let g = graph(TopologyConfig::paper_default());
        let v = generate_vsrs(0, &VsrGenConfig::default(), &InputScenario::SingleSource(NodeId(0)), &g).unwrap();
        assert!(v.is_empty());
        assert_eq!(total_demand(&v), Demand { gflops: 0.0, mbps: 0.0 });
    }

    #[test]
    fn thirty_requests_have_three_to_five_vms() {
        let g = graph(TopologyConfig::paper_default());
        let v = generate_vsrs(30, &VsrGenConfig::with_seed(7), &InputScenario::SingleSource(NodeId(0)), &g).unwrap();
        assert_eq!(v.len(), 30);
        for r in &v {
            assert!((3..=5).contains(&r.vms.len()));
            assert!(validate_vsr(r).is_empty(), "{:?}", validate_vsr(r));
            assert_eq!(r.input().unwrap().pinned_source, Some(NodeId(0)));
        }
    }

    #[test]
    fn single_source_pins_the_configured_device() {
        let mut cfg = TopologyConfig::paper_default();
        cfg.input_nodes = vec![5];
        let g = graph(cfg);
        let src = g.inputs()[0];
        let v = generate_vsrs(1, &VsrGenConfig::default(), &InputScenario::SingleSource(src), &g).unwrap();
        assert_eq!(v[0].input().unwrap().pinned_source, Some(src));
        let err = generate_vsrs(1, &VsrGenConfig::default(), &InputScenario::SingleSource(NodeId(0)), &g);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn per_zone_covers_every_zone() {
        let g = graph(TopologyConfig::paper_default_per_zone());
        let scenario = InputScenario::PerZone(g.inputs().to_vec());
        let v = generate_vsrs(13, &VsrGenConfig::with_seed(3), &scenario, &g).unwrap();
        let pinned: BTreeSet<NodeId> = v.iter().map(|r| r.input().unwrap().pinned_source.unwrap()).collect();
        assert_eq!(pinned.len(), 10);
    }

    #[test]
    fn demand_sums() {
        assert_eq!(total_demand(&[chain(&[0.5, 3.0, 4.0])]).gflops, 7.5);
        assert_eq!(total_demand(&[chain(&[0.5, 3.0, 4.0])]).mbps, 20.0);
    }

    #[test]
    fn larger_sets_extend_smaller_ones() {
        let g = graph(TopologyConfig::paper_default());
        let s = InputScenario::SingleSource(NodeId(0));
        let gen = VsrGenConfig::with_seed(11);
        let small = generate_vsrs(4, &gen, &s, &g).unwrap();
        let large = generate_vsrs(9, &gen, &s, &g).unwrap();
        assert_eq!(&large[..4], &small[..]);
    }

    #[test]
    fn violations_are_all_reported() {
        assert!(validate_vsr(&chain(&[0.5, 3.0, 4.0])).is_empty());

        let mut two_inputs = chain(&[0.5, 3.0, 4.0]);
        two_inputs.vms[2].is_input = true;
        two_inputs.vms[2].pinned_source = Some(NodeId(0));
        let v = validate_vsr(&two_inputs);
        assert!(v.contains(&VsrViolation::MultipleInputs(2)));
        assert!(v.iter().any(|x| x.to_string().starts_with("multiple inputs")));
        // vm 2 is now also an input with an incoming link.
        assert!(v.contains(&VsrViolation::InputHasPredecessor(VmRef { vsr: 0, vm: 2 })));

        let mut back = chain(&[0.5, 3.0]);
        back.links.push(VirtualLink { vsr_id: 0, from_vm: 1, to_vm: 0, bitrate: 1.0 });
        let v = validate_vsr(&back);
        assert_eq!(v, vec![VsrViolation::InputHasPredecessor(VmRef { vsr: 0, vm: 0 })]);
        assert_eq!(v[0].to_string(), "input has predecessor (r0.v0)");

        let mut broken = chain(&[0.5, 3.0, 4.0]);
        broken.links.clear();
        broken.vms[1].workload = 0.0;
        let v = validate_vsr(&broken);
        assert!(v.contains(&VsrViolation::Disconnected));
        assert!(v.contains(&VsrViolation::NonPositiveWorkload(VmRef { vsr: 0, vm: 1 })));
    }

    #[test]
    fn random_dag_is_well_formed() {
        let g = graph(TopologyConfig::paper_default());
        let gen = VsrGenConfig { shape: VsrShape::RandomDag, ..VsrGenConfig::with_seed(5) };
        for r in generate_vsrs(50, &gen, &InputScenario::SingleSource(NodeId(0)), &g).unwrap() {
            assert!(validate_vsr(&r).is_empty());
            assert!(r.links.iter().all(|l| l.from_vm < l.to_vm));
        }
    }

    #[test]
    fn toml_round_trip() {
        let g = graph(TopologyConfig::paper_default());
        let v = generate_vsrs(5, &VsrGenConfig::with_seed(1), &InputScenario::SingleSource(NodeId(0)), &g).unwrap();
        let text = to_toml(&v).unwrap();
        assert_eq!(from_toml(&text).unwrap(), v);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn samples_stay_in_range_and_are_reproducible(seed in any::<u64>(), n in 0usize..12) {
            let g = graph(TopologyConfig::paper_default_per_zone());
            let gen = VsrGenConfig::with_seed(seed);
            let s = InputScenario::PerZone(g.inputs().to_vec());
            let a = generate_vsrs(n, &gen, &s, &g).unwrap();
            prop_assert_eq!(&a, &generate_vsrs(n, &gen, &s, &g).unwrap());
            for r in &a {
                prop_assert!(gen.input_workload.contains(r.input().unwrap().workload));
                for h in r.hidden() {
                    prop_assert!(gen.hidden_workload.contains(h.workload));
                }
                prop_assert!(gen.hidden_vms.contains(r.hidden().count() as u32));
            }
        }
    }
}
