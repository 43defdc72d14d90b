//! Power-minimizing embedding of DNN inference requests over a cloud/fog
//! network.
//!
//! A request (VSR) is a small directed graph of virtual machines: one input
//! VM pinned to the IoT device that produces the data, followed by hidden
//! layers. Every VM is placed on a processing node (IoT device, access fog,
//! metro fog or cloud data center); inter-VM traffic is routed over the
//! passive optical access network, the metro network and the IP/WDM core.
//! The objective is the total network plus processing power, with idle and
//! load-proportional parts and per-site PUE.
//!
//! Module map:
//!
//! * [`catalog`] - device power profiles and PUE values.
//! * [`topology`] - the physical network graph and routing.
//! * [`vsr`] - request model and the seeded request generator.
//! * [`embedding`] - placements, traffic, flows and the power evaluator.
//! * [`milp`] - the full MILP model with LP/MPS export and import.
//! * [`solver`] - branch-and-bound, exhaustive oracle and the CDC baseline.

// Range checks are written `!(x >= lo)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod embedding;
mod error;
pub mod milp;
pub mod solver;
pub mod topology;
pub mod units;
pub mod vsr;

pub use catalog::{Catalog, IdleRule, LanProfile, NetworkProfile, NodeClass, ProcessingProfile, PueAssignment};
pub use embedding::{evaluate_power, Placement, PowerBreakdown};
pub use error::{Error, Result};
pub use milp::{build_model, decode_solution, encode_placement, ExportFormat, Formulation, MilpModel, MilpOptions};
pub use solver::{baseline_cdc, lower_bound, solve, solve_exhaustive, BranchOrder, SolveOptions, SolveResult, SolveStatus};
pub use topology::{build_cfn, NodeId, PhysicalGraph, TopologyConfig};
pub use vsr::{generate_vsrs, InputScenario, Vm, VmRef, Vsr, VsrGenConfig};
