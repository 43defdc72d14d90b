//! Branch-and-bound against exhaustive enumeration on the reduced network.

use std::time::Instant;

use cfn_core::vsr::Interval;
use cfn_core::*;

fn reduced() -> PhysicalGraph {
    build_cfn(&TopologyConfig::reduced(), &Catalog::default_catalog()).unwrap()
}

/// Seeded instances with one or two requests of one to three hidden VMs,
/// fed from both IoT devices in turn.
fn instances(g: &PhysicalGraph, count: usize) -> Vec<(u64, Vec<Vsr>)> {
    let inputs = InputScenario::PerZone(g.inputs().to_vec());
    (0..count as u64)
        .map(|seed| {
            let gen = VsrGenConfig { hidden_vms: Interval::new(1, 3), ..VsrGenConfig::with_seed(seed) };
            let n = 1 + (seed % 2) as usize;
            (seed, generate_vsrs(n, &gen, &inputs, g).unwrap())
        })
        .collect()
}

#[test]
fn matches_exhaustive_power_and_placement() {
    let g = reduced();
    assert_eq!(g.processing_nodes().len(), 6);
    let start = Instant::now();
    for (seed, v) in instances(&g, 20) {
        let e = solve_exhaustive(&g, &v).unwrap();
        let r = solve(&g, &v, &SolveOptions::default()).unwrap();
        assert_eq!(e.status, r.status, "seed {seed}");
        assert_eq!(e.power.total, r.power.total, "seed {seed}");
        assert_eq!(e.placement, r.placement, "seed {seed}");
    }
    assert!(start.elapsed().as_secs_f64() < 60.0);
}

#[test]
fn bound_is_admissible_and_baseline_dominated() {
    let g = reduced();
    for (seed, v) in instances(&g, 20) {
        let e = solve_exhaustive(&g, &v).unwrap();
        assert!(lower_bound(&Placement::new(), &v, &g).unwrap() <= e.power.total, "seed {seed}");
        let b = baseline_cdc(&g, &v).unwrap();
        assert!(e.power.total <= b.power.total, "seed {seed}");
        // Every partial placement along the optimum stays below it too.
        let mut partial = Placement::new();
        for (vm, host) in e.placement.iter() {
            partial.insert(vm, host);
            assert!(lower_bound(&partial, &v, &g).unwrap() <= e.power.total + 1e-9, "seed {seed}");
        }
    }
}

#[test]
fn branch_order_does_not_change_the_answer() {
    let g = reduced();
    for (seed, v) in instances(&g, 20) {
        let a = solve(&g, &v, &SolveOptions::default()).unwrap();
        let opts = SolveOptions { branch_order: BranchOrder::InputOrder, ..SolveOptions::default() };
        let b = solve(&g, &v, &opts).unwrap();
        assert_eq!(a.power.total, b.power.total, "seed {seed}");
        assert_eq!(a.placement, b.placement, "seed {seed}");
    }
}

#[test]
fn incumbent_only_improves() {
    let g = reduced();
    for (seed, v) in instances(&g, 20) {
        for r in [solve(&g, &v, &SolveOptions::default()).unwrap(), solve_exhaustive(&g, &v).unwrap()] {
            let h = &r.incumbent_history;
            assert!(h.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: {h:?}");
            assert_eq!(h.last().copied(), Some(r.power.total), "seed {seed}");
        }
    }
}

/// Scaling every virtual-link bitrate must not move processing work between
/// hosts. Counterexamples are printed; the claim holds when none are found.
#[test]
fn bitrate_scaling_keeps_processing_assignment() {
    let g = reduced();
    let mut counterexamples = Vec::new();
    for (seed, v) in instances(&g, 20) {
        let base = solve_exhaustive(&g, &v).unwrap();
        for factor in [0.5, 2.0] {
            let scaled: Vec<Vsr> = v
                .iter()
                .cloned()
                .map(|mut r| {
                    r.links.iter_mut().for_each(|l| l.bitrate *= factor);
                    r
                })
                .collect();
            let s = solve_exhaustive(&g, &scaled).unwrap();
            if s.placement != base.placement {
                counterexamples.push(format!("seed {seed} x{factor}: {:?} -> {:?}", base.placement, s.placement));
            }
        }
    }
    for c in &counterexamples {
        println!("bitrate counterexample: {c}");
    }
    assert!(counterexamples.is_empty(), "{} counterexamples", counterexamples.len());
}
