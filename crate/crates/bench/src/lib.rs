//! Fixed instances shared by the benchmarks.

use cfn_core::{build_cfn, generate_vsrs, Catalog, InputScenario, PhysicalGraph, TopologyConfig, Vsr, VsrGenConfig};

/// Default network with `n` requests from the first IoT device.
pub fn instance(n: usize, seed: u64) -> (PhysicalGraph, Vec<Vsr>) {
    let graph = build_cfn(&TopologyConfig::paper_default(), &Catalog::default_catalog()).expect("default topology");
    let source = graph.inputs()[0];
    let vsrs = generate_vsrs(n, &VsrGenConfig::with_seed(seed), &InputScenario::SingleSource(source), &graph)
        .expect("generated requests");
    (graph, vsrs)
}
