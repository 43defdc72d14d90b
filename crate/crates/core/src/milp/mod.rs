//! The placement problem as an explicit mixed-integer linear program.
//!
//! [`build_model`] writes out every variable and constraint: placement
//! binaries, McCormick pair binaries for virtual links between two hidden
//! VMs, aggregated demands, per-arc flows with conservation, node traffic,
//! server counts and activation binaries. The objective reproduces
//! [`evaluate_power`](crate::embedding::evaluate_power) term by term, so the
//! objective at [`encode_placement`] of a placement equals its evaluated
//! power.
//!
//! Input VMs sit on their pinned device by construction, so they carry no
//! variables; their workload and traffic enter as constants.
//!
//! Models export to LP and MPS text ([`MilpModel::export`]) and parse back
//! ([`MilpModel::parse`]). Variable and constraint names are structured:
//! a variable is `family_i_j..` (see [`Family`]) and a constraint is
//! `tag_k` with `k` counting within the tag.

mod lp;
mod mps;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{derive_traffic, route, Coeffs, Placement};
use crate::error::{Error, Result};
use crate::topology::{NodeId, PhysicalGraph};
use crate::units::{gflops_to_units, mbps_to_units, units_to_gbps, units_to_gflops};
use crate::vsr::{VmRef, Vsr};

/// Variable families. Indices in names, in order:
///
/// * `place_r_s_b`: VM `s` of request `r` on node `b` (binary).
/// * `pair_r_s_d_b_e`: link `s -> d` of request `r` has `s` on `b` and `d`
///   on `e` (binary, `b != e`).
/// * `demand_b_e`: Gbps from node `b` to node `e`.
/// * `flow_b_e_m_n`: Gbps of demand `(b, e)` on arc `m -> n`.
/// * `lambda_n`, `beta_n`: traffic through network equipment and its on/off
///   state.
/// * `omega_p`, `servers_p`, `theta_p`, `phi_p`: GFLOPS hosted, servers on,
///   LAN traffic and on/off state of a processing node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Place,
    Pair,
    Demand,
    Flow,
    Lambda,
    Beta,
    Omega,
    Servers,
    Theta,
    Phi,
}

impl Family {
    pub const ALL: [Family; 10] = [
        Family::Place,
        Family::Pair,
        Family::Demand,
        Family::Flow,
        Family::Lambda,
        Family::Beta,
        Family::Omega,
        Family::Servers,
        Family::Theta,
        Family::Phi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Place => "place",
            Family::Pair => "pair",
            Family::Demand => "demand",
            Family::Flow => "flow",
            Family::Lambda => "lambda",
            Family::Beta => "beta",
            Family::Omega => "omega",
            Family::Servers => "servers",
            Family::Theta => "theta",
            Family::Phi => "phi",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Family::Place => 3,
            Family::Pair => 5,
            Family::Demand => 2,
            Family::Flow => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarName {
    pub family: Family,
    pub index: Vec<usize>,
}

impl VarName {
    pub fn new(family: Family, index: &[usize]) -> VarName {
        debug_assert_eq!(index.len(), family.arity());
        VarName { family, index: index.to_vec() }
    }
}

impl fmt::Display for VarName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.family.as_str())?;
        for i in &self.index {
            write!(f, "_{i}")?;
        }
        Ok(())
    }
}

impl FromStr for VarName {
    type Err = Error;

    fn from_str(s: &str) -> Result<VarName> {
        let bad = || Error::InvalidParameter(format!("'{s}' is not a model variable name"));
        let mut parts = s.split('_');
        let head = parts.next().ok_or_else(bad)?;
        let family = Family::ALL.into_iter().find(|f| f.as_str() == head).ok_or_else(bad)?;
        let index = parts.map(|p| p.parse::<usize>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
        if index.len() != family.arity() {
            return Err(bad());
        }
        Ok(VarName { family, index })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: VarName,
    pub kind: VarKind,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub name: String,
    /// `(coefficient, variable index)`, one entry per variable.
    pub terms: Vec<(f64, usize)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl LinearConstraint {
    /// The name up to its last `_`.
    pub fn tag(&self) -> &str {
        self.name.rsplit_once('_').map_or(&self.name, |(t, _)| t)
    }

    pub fn lhs(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(c, v)| c * values[v]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExportFormat {
    Lp,
    Mps,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<ExportFormat> {
        match s.to_ascii_lowercase().as_str() {
            "lp" | "lp-text" => Ok(ExportFormat::Lp),
            "mps" | "mps-text" => Ok(ExportFormat::Mps),
            _ => Err(Error::InvalidParameter(format!("unknown model format '{s}'"))),
        }
    }
}

/// Minimization model.
#[derive(Debug, Clone, Default)]
pub struct MilpModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<LinearConstraint>,
    pub objective: Vec<(f64, usize)>,
    index: HashMap<VarName, usize>,
}

impl MilpModel {
    pub fn new() -> MilpModel {
        MilpModel::default()
    }

    pub fn add_variable(&mut self, name: VarName, kind: VarKind, lo: f64, hi: f64) -> Result<usize> {
        if self.index.contains_key(&name) {
            return Err(Error::ModelBuild(format!("variable {name} declared twice")));
        }
        let (lo, hi) = if kind == VarKind::Binary { (0.0, 1.0) } else { (lo, hi) };
        if kind == VarKind::Integer && !hi.is_finite() {
            return Err(Error::ModelBuild(format!("integer {name} needs a finite upper bound")));
        }
        let id = self.variables.len();
        self.index.insert(name.clone(), id);
        self.variables.push(Variable { name, kind, lo, hi });
        Ok(id)
    }

    /// Adds a constraint after merging repeated variables and dropping zero
    /// coefficients.
    pub fn add_constraint(&mut self, name: String, terms: Vec<(f64, usize)>, relation: Relation, rhs: f64) -> Result<()> {
        let terms = merge(terms);
        if terms.is_empty() {
            return Err(Error::ModelBuild(format!("constraint {name} has no terms")));
        }
        if terms.iter().any(|(c, v)| !c.is_finite() || *v >= self.variables.len()) || !rhs.is_finite() {
            return Err(Error::ModelBuild(format!("constraint {name} has a bad coefficient or variable")));
        }
        self.constraints.push(LinearConstraint { name, terms, relation, rhs });
        Ok(())
    }

    pub fn set_objective(&mut self, terms: Vec<(f64, usize)>) {
        self.objective = merge(terms);
    }

    pub fn var(&self, name: &VarName) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(c, v)| c * values[v]).sum()
    }

    pub fn count_family(&self, family: Family) -> usize {
        self.variables.iter().filter(|v| v.name.family == family).count()
    }

    pub fn count_tag(&self, tag: &str) -> usize {
        self.constraints.iter().filter(|c| c.tag() == tag).count()
    }

    /// Every bound, integrality and constraint violated by `values`, with
    /// `tol` as absolute tolerance scaled by the magnitude of each row.
    pub fn check(&self, values: &[f64], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        if values.len() != self.variables.len() {
            out.push(format!("{} values for {} variables", values.len(), self.variables.len()));
            return out;
        }
        for (v, &x) in self.variables.iter().zip(values) {
            if !x.is_finite() || x < v.lo - tol || x > v.hi + tol {
                out.push(format!("{} = {x} outside [{}, {}]", v.name, v.lo, v.hi));
            }
            if v.kind != VarKind::Continuous && (x - x.round()).abs() > tol {
                out.push(format!("{} = {x} is not integral", v.name));
            }
        }
        for c in &self.constraints {
            let lhs = c.lhs(values);
            let scale = c.terms.iter().map(|&(a, v)| (a * values[v]).abs()).fold(c.rhs.abs().max(1.0), f64::max);
            let slack = tol * scale;
            let ok = match c.relation {
                Relation::Le => lhs <= c.rhs + slack,
                Relation::Ge => lhs >= c.rhs - slack,
                Relation::Eq => (lhs - c.rhs).abs() <= slack,
            };
            if !ok {
                out.push(format!("{}: {lhs} {} {}", c.name, c.relation.as_str(), c.rhs));
            }
        }
        out
    }

    pub fn export(&self, format: ExportFormat) -> String {
        match format {
            ExportFormat::Lp => lp::write(self),
            ExportFormat::Mps => mps::write(self),
        }
    }

    pub fn parse(text: &str, format: ExportFormat) -> Result<MilpModel> {
        match format {
            ExportFormat::Lp => lp::parse(text),
            ExportFormat::Mps => mps::parse(text),
        }
    }

    /// Same variables, constraints and objective, ignoring the order of
    /// variables, constraints and terms.
    pub fn equivalent(&self, other: &MilpModel) -> bool {
        self.normal_form() == other.normal_form()
    }

    #[allow(clippy::type_complexity)]
    fn normal_form(&self) -> (Vec<String>, Vec<String>, Vec<String>) {
        let name = |v: usize| self.variables[v].name.to_string();
        let mut vars: Vec<String> =
            self.variables.iter().map(|v| format!("{} {:?} {} {}", v.name, v.kind, v.lo, v.hi)).collect();
        vars.sort();
        let terms = |t: &[(f64, usize)]| {
            let mut t: Vec<String> = t.iter().map(|&(c, v)| format!("{c} {}", name(v))).collect();
            t.sort();
            t.join(" ")
        };
        let mut rows: Vec<String> = self
            .constraints
            .iter()
            .map(|c| format!("{}: {} {} {}", c.name, terms(&c.terms), c.relation.as_str(), c.rhs))
            .collect();
        rows.sort();
        (vars, rows, vec![terms(&self.objective)])
    }

    /// Rebuilds the name lookup after the variable list changed.
    fn reindex(&mut self) -> Result<()> {
        self.index.clear();
        for (i, v) in self.variables.iter().enumerate() {
            if self.index.insert(v.name.clone(), i).is_some() {
                return Err(Error::ModelBuild(format!("variable {} declared twice", v.name)));
            }
        }
        Ok(())
    }
}

fn merge(terms: Vec<(f64, usize)>) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = Vec::with_capacity(terms.len());
    let mut at: HashMap<usize, usize> = HashMap::new();
    for (c, v) in terms {
        match at.get(&v) {
            Some(&k) => out[k].0 += c,
            None => {
                at.insert(v, out.len());
                out.push((c, v));
            }
        }
    }
    out.retain(|&(c, _)| c != 0.0);
    out
}

/// How demands are carried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    /// A demand for every ordered pair of processing nodes, a flow variable
    /// on every arc and conservation at every node.
    #[default]
    Full,
    /// Only demands some placement can create, with flow variables and
    /// conservation along their fixed route.
    Paths,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MilpOptions {
    pub formulation: Formulation,
}

fn place_name(vm: VmRef, b: usize) -> VarName {
    VarName::new(Family::Place, &[vm.vsr as usize, vm.vm as usize, b])
}

/// Constraint names `tag_k`.
#[derive(Default)]
struct Names(BTreeMap<&'static str, usize>);

impl Names {
    fn next(&mut self, tag: &'static str) -> String {
        let k = self.0.entry(tag).or_insert(0);
        *k += 1;
        format!("{tag}_{}", *k - 1)
    }
}

/// Builds the full model of embedding `vsrs` on `graph`.
pub fn build_model(graph: &PhysicalGraph, vsrs: &[Vsr], options: &MilpOptions) -> Result<MilpModel> {
    let mut m = MilpModel::new();
    let mut names = Names::default();
    let cont = VarKind::Continuous;
    let inf = f64::INFINITY;
    let candidates: Vec<usize> = graph.processing_nodes().iter().map(|n| n.0).collect();

    // Fixed host or placement variables per VM.
    let mut fixed: HashMap<VmRef, usize> = HashMap::new();
    let mut place: HashMap<VmRef, Vec<(usize, usize)>> = HashMap::new();
    let mut used: BTreeSet<usize> = BTreeSet::new();
    let mut const_units = vec![0i64; graph.len()];
    let mut total_units = 0i64;
    for r in vsrs {
        for vm in &r.vms {
            let units = gflops_to_units(vm.workload);
            total_units += units;
            if vm.is_input {
                let src = vm
                    .pinned_source
                    .filter(|s| s.0 < graph.len() && graph.node(*s).is_processing())
                    .ok_or_else(|| Error::ModelBuild(format!("input {} has no valid source node", vm.vm_ref())))?;
                fixed.insert(vm.vm_ref(), src.0);
                used.insert(src.0);
                const_units[src.0] += units;
            } else {
                let mut vars = Vec::with_capacity(candidates.len());
                for &b in &candidates {
                    vars.push((b, m.add_variable(place_name(vm.vm_ref(), b), VarKind::Binary, 0.0, 1.0)?));
                }
                used.extend(&candidates);
                place.insert(vm.vm_ref(), vars);
            }
        }
    }

    let mut assign = Vec::new();
    for r in vsrs {
        for vm in r.hidden() {
            let terms = place[&vm.vm_ref()].iter().map(|&(_, v)| (1.0, v)).collect();
            assign.push((names.next("assign"), terms));
        }
    }
    for (name, terms) in assign {
        m.add_constraint(name, terms, Relation::Eq, 1.0)?;
    }

    // Demand contributions per ordered node pair.
    let mut contrib: BTreeMap<(usize, usize), (Vec<(f64, usize)>, f64)> = BTreeMap::new();
    for r in vsrs {
        for l in &r.links {
            let (s, d) = (l.from_ref(), l.to_ref());
            if r.vm(s.vm).is_none() || r.vm(d.vm).is_none() {
                return Err(Error::ModelBuild(format!("link {s} -> {d} names a missing VM")));
            }
            let h = units_to_gbps(mbps_to_units(l.bitrate));
            if h == 0.0 {
                continue;
            }
            match (fixed.get(&s).copied(), fixed.get(&d).copied()) {
                (Some(b), Some(e)) => {
                    if b != e {
                        contrib.entry((b, e)).or_default().1 += h;
                    }
                }
                (Some(b), None) => {
                    for &(e, v) in place[&d].iter().filter(|&&(e, _)| e != b) {
                        contrib.entry((b, e)).or_default().0.push((h, v));
                    }
                }
                (None, Some(e)) => {
                    for &(b, v) in place[&s].iter().filter(|&&(b, _)| b != e) {
                        contrib.entry((b, e)).or_default().0.push((h, v));
                    }
                }
                (None, None) => {
                    for &(b, vb) in &place[&s] {
                        for &(e, ve) in place[&d].iter().filter(|&&(e, _)| e != b) {
                            let idx = [r.id as usize, s.vm as usize, d.vm as usize, b, e];
                            let y = m.add_variable(VarName::new(Family::Pair, &idx), VarKind::Binary, 0.0, 1.0)?;
                            m.add_constraint(names.next("liny"), vec![(1.0, y), (-1.0, vb)], Relation::Le, 0.0)?;
                            m.add_constraint(names.next("liny"), vec![(1.0, y), (-1.0, ve)], Relation::Le, 0.0)?;
                            m.add_constraint(
                                names.next("liny"),
                                vec![(1.0, y), (-1.0, vb), (-1.0, ve)],
                                Relation::Ge,
                                -1.0,
                            )?;
                            contrib.entry((b, e)).or_default().0.push((h, y));
                        }
                    }
                }
            }
        }
    }

    let pairs: Vec<(usize, usize)> = match options.formulation {
        Formulation::Full => {
            used.iter().flat_map(|&b| used.iter().filter(move |&&e| e != b).map(move |&e| (b, e))).collect()
        }
        Formulation::Paths => contrib.keys().copied().collect(),
    };
    let mut demand: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for &(b, e) in &pairs {
        let v = m.add_variable(VarName::new(Family::Demand, &[b, e]), cont, 0.0, inf)?;
        demand.insert((b, e), v);
        let (terms, constant) = contrib.remove(&(b, e)).unwrap_or_default();
        let mut row = vec![(1.0, v)];
        row.extend(terms.into_iter().map(|(h, x)| (-h, x)));
        m.add_constraint(names.next("demand"), row, Relation::Eq, constant)?;
    }

    // Arcs and the nodes whose conservation is written, per pair.
    let all_arcs: Vec<(usize, usize)> =
        graph.links().iter().flat_map(|l| [(l.a.0, l.b.0), (l.b.0, l.a.0)]).collect();
    let mut inflow: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut arc_load: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    let mut network_nodes: BTreeSet<usize> = BTreeSet::new();
    for &(b, e) in &pairs {
        let (arcs, nodes): (Vec<(usize, usize)>, Vec<usize>) = match options.formulation {
            Formulation::Full => (all_arcs.clone(), (0..graph.len()).collect()),
            Formulation::Paths => {
                let path = graph.route(NodeId(b), NodeId(e))?;
                (path.windows(2).map(|w| (w[0].0, w[1].0)).collect(), path.iter().map(|n| n.0).collect())
            }
        };
        let dv = demand[&(b, e)];
        let mut out_of: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut into: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(x, y) in &arcs {
            let f = m.add_variable(VarName::new(Family::Flow, &[b, e, x, y]), cont, 0.0, inf)?;
            out_of.entry(x).or_default().push(f);
            into.entry(y).or_default().push(f);
            inflow.entry(y).or_default().push(f);
            arc_load.entry((x, y)).or_default().push(f);
        }
        for &x in &nodes {
            let mut row: Vec<(f64, usize)> = out_of.get(&x).into_iter().flatten().map(|&f| (1.0, f)).collect();
            row.extend(into.get(&x).into_iter().flatten().map(|&f| (-1.0, f)));
            if x == b {
                row.push((-1.0, dv));
            }
            if x == e {
                row.push((1.0, dv));
            }
            m.add_constraint(names.next("conserve"), row, Relation::Eq, 0.0)?;
            if graph.node(NodeId(x)).network.is_some() {
                network_nodes.insert(x);
            }
        }
    }

    let mut objective = Vec::new();
    for &n in &network_nodes {
        let node = graph.node(NodeId(n));
        let c = Coeffs::of(node);
        let lambda = m.add_variable(VarName::new(Family::Lambda, &[n]), cont, 0.0, inf)?;
        let beta = m.add_variable(VarName::new(Family::Beta, &[n]), VarKind::Binary, 0.0, 1.0)?;
        let mut row = vec![(1.0, lambda)];
        row.extend(inflow.get(&n).into_iter().flatten().map(|&f| (-1.0, f)));
        row.extend(pairs.iter().filter(|p| p.0 == n).map(|p| (-1.0, demand[p])));
        m.add_constraint(names.next("lambda"), row, Relation::Eq, 0.0)?;
        m.add_constraint(
            names.next("actnet"),
            vec![(1.0, lambda), (-node.bitrate_capacity(), beta)],
            Relation::Le,
            0.0,
        )?;
        objective.push((c.net_rate, lambda));
        objective.push((c.net_idle, beta));
    }
    for (&(x, y), flows) in &arc_load {
        let cap = graph.link_between(NodeId(x), NodeId(y)).map_or(0.0, |l| l.capacity);
        if cap.is_finite() {
            m.add_constraint(names.next("linkcap"), flows.iter().map(|&f| (1.0, f)).collect(), Relation::Le, cap)?;
        }
    }

    for &p in &used {
        let node = graph.node(NodeId(p));
        let c = Coeffs::of(node);
        let limit = match c.max_servers {
            Some(k) => k as i64,
            None => (total_units + c.server_units - 1) / c.server_units,
        };
        let omega = m.add_variable(VarName::new(Family::Omega, &[p]), cont, 0.0, inf)?;
        let servers = m.add_variable(VarName::new(Family::Servers, &[p]), VarKind::Integer, 0.0, limit as f64)?;
        let lan = node.lan.as_ref();
        let theta = match lan {
            Some(_) => Some(m.add_variable(VarName::new(Family::Theta, &[p]), cont, 0.0, inf)?),
            None => None,
        };
        let phi = m.add_variable(VarName::new(Family::Phi, &[p]), VarKind::Binary, 0.0, 1.0)?;

        let mut row = vec![(1.0, omega)];
        for r in vsrs {
            for vm in r.hidden() {
                if let Some(&(_, v)) = place[&vm.vm_ref()].iter().find(|&&(b, _)| b == p) {
                    row.push((-units_to_gflops(gflops_to_units(vm.workload)), v));
                }
            }
        }
        m.add_constraint(names.next("omega"), row, Relation::Eq, units_to_gflops(const_units[p]))?;
        m.add_constraint(
            names.next("servers"),
            vec![(1.0, omega), (-units_to_gflops(c.server_units), servers)],
            Relation::Le,
            0.0,
        )?;
        m.add_constraint(names.next("actpr"), vec![(1.0, servers), (-(limit as f64), phi)], Relation::Le, 0.0)?;
        if let (Some(theta), Some(lan)) = (theta, lan) {
            let mut row = vec![(1.0, theta)];
            row.extend(pairs.iter().filter(|&&(b, e)| b == p || e == p).map(|pr| (-1.0, demand[pr])));
            m.add_constraint(names.next("theta"), row, Relation::Eq, 0.0)?;
            m.add_constraint(
                names.next("actlan"),
                vec![(1.0, theta), (-lan.bitrate_capacity, phi)],
                Relation::Le,
                0.0,
            )?;
            objective.push((c.lan_rate, theta));
        }
        objective.push((c.pr_rate, omega));
        objective.push((c.pr_idle, servers));
        objective.push((c.lan_idle, phi));
    }
    m.set_objective(objective);
    Ok(m)
}

/// Value of every model variable at `placement`, with traffic routed on
/// shortest paths.
pub fn encode_placement(model: &MilpModel, placement: &Placement, vsrs: &[Vsr], graph: &PhysicalGraph) -> Result<Vec<f64>> {
    let traffic = derive_traffic(placement, vsrs)?;
    let flows = route(&traffic, graph)?;
    let mut omega = vec![0i64; graph.len()];
    for r in vsrs {
        for vm in &r.vms {
            let h = placement.get(vm.vm_ref()).ok_or(Error::IncompletePlacement(vm.vm_ref()))?;
            if h.0 >= graph.len() {
                return Err(Error::InvalidParameter(format!("{} placed on unknown node {h}", vm.vm_ref())));
            }
            omega[h.0] += gflops_to_units(vm.workload);
            if !vm.is_input && model.var(&place_name(vm.vm_ref(), h.0)).is_none() {
                return Err(Error::InvalidParameter(format!("{} on {h} has no placement variable", vm.vm_ref())));
            }
        }
    }
    for ((b, e), _) in traffic.iter_gbps() {
        if model.var(&VarName::new(Family::Demand, &[b.0, e.0])).is_none() {
            return Err(Error::InvalidParameter(format!("demand {b} -> {e} has no variable")));
        }
    }
    let host = |vsr: usize, vm: usize| placement.get(VmRef { vsr: vsr as u32, vm: vm as u32 }).map(|n| n.0);
    let node = |i: usize| NodeId(i);
    let values = model
        .variables
        .iter()
        .map(|v| {
            let i = &v.name.index;
            let on = |x: bool| if x { 1.0 } else { 0.0 };
            match v.name.family {
                Family::Place => on(host(i[0], i[1]) == Some(i[2])),
                Family::Pair => on(host(i[0], i[1]) == Some(i[3]) && host(i[0], i[2]) == Some(i[4])),
                Family::Demand => traffic.gbps(node(i[0]), node(i[1])),
                Family::Flow => flows.link_flow(node(i[2]), node(i[3]), node(i[0]), node(i[1])),
                Family::Lambda => flows.node_traffic(node(i[0])),
                Family::Beta => on(flows.is_active(node(i[0]))),
                Family::Omega => units_to_gflops(omega[i[0]]),
                Family::Servers => {
                    Coeffs::of(graph.node(node(i[0]))).servers(omega[i[0]]) as f64
                }
                Family::Theta => flows.lan_traffic(node(i[0])),
                Family::Phi => on(omega[i[0]] > 0 || flows.lan_traffic(node(i[0])) > 0.0),
            }
        })
        .collect();
    Ok(values)
}

/// Placement read from the placement binaries of an integral solution;
/// inputs go to their pinned sources.
pub fn decode_solution(model: &MilpModel, values: &[f64], vsrs: &[Vsr]) -> Result<Placement> {
    if values.len() != model.variables.len() {
        return Err(Error::InvalidParameter(format!(
            "{} values for {} variables",
            values.len(),
            model.variables.len()
        )));
    }
    let mut chosen: BTreeMap<VmRef, Vec<usize>> = BTreeMap::new();
    for (v, &x) in model.variables.iter().zip(values) {
        if v.name.family != Family::Place {
            continue;
        }
        let vm = VmRef { vsr: v.name.index[0] as u32, vm: v.name.index[1] as u32 };
        let entry = chosen.entry(vm).or_default();
        if (x - 1.0).abs() <= 1e-6 {
            entry.push(v.name.index[2]);
        } else if x.abs() > 1e-6 {
            return Err(Error::NonIntegral(format!("{} = {x}", v.name)));
        }
    }
    let mut placement = Placement::new();
    for r in vsrs {
        for vm in &r.vms {
            let host = if vm.is_input {
                vm.pinned_source.ok_or_else(|| Error::InvalidParameter(format!("input {} is not pinned", vm.vm_ref())))?
            } else {
                let hosts = chosen.get(&vm.vm_ref()).map_or(&[][..], Vec::as_slice);
                if hosts.len() != 1 {
                    return Err(Error::Assignment(vm.vm_ref(), hosts.len()));
                }
                NodeId(hosts[0])
            };
            placement.insert(vm.vm_ref(), host);
        }
    }
    Ok(placement)
}

/// Shared by the LP and MPS readers.
fn finish_parse(
    variables: Vec<Variable>,
    constraints: Vec<LinearConstraint>,
    objective: Vec<(f64, usize)>,
) -> Result<MilpModel> {
    let mut m = MilpModel { variables, constraints, objective, index: HashMap::new() };
    m.reindex()?;
    Ok(m)
}

/// Shortest text that parses back to the same `f64`.
fn num(x: f64) -> String {
    if x == f64::INFINITY {
        "+inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

fn parse_num(s: &str, line: usize) -> Result<f64> {
    match s.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        t => t.parse().map_err(|_| Error::Parse { line, msg: format!("'{s}' is not a number") }),
    }
}

fn parse_name(s: &str, line: usize) -> Result<VarName> {
    s.parse().map_err(|e: Error| Error::Parse { line, msg: e.to_string() })
}
