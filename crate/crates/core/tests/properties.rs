//! Solver and evaluator properties on the default network.

use cfn_core::embedding::validate;
use cfn_core::*;
use proptest::prelude::*;

fn paper() -> PhysicalGraph {
    build_cfn(&TopologyConfig::paper_default(), &Catalog::default_catalog()).unwrap()
}

fn single(g: &PhysicalGraph, n: usize, seed: u64) -> Vec<Vsr> {
    generate_vsrs(n, &VsrGenConfig::with_seed(seed), &InputScenario::SingleSource(g.inputs()[0]), g).unwrap()
}

#[test]
fn worker_count_does_not_change_the_result() {
    let g = paper();
    for seed in 0..4 {
        let v = single(&g, 5, seed);
        let one = solve(&g, &v, &SolveOptions::default()).unwrap();
        let four = solve(&g, &v, &SolveOptions { worker_count: 4, ..SolveOptions::default() }).unwrap();
        assert_eq!(one.placement, four.placement, "seed {seed}");
        assert_eq!(one.power.total.to_bits(), four.power.total.to_bits(), "seed {seed}");
    }
}

#[test]
fn adding_a_request_never_lowers_the_optimum() {
    let g = paper();
    for seed in 0..3 {
        let v = single(&g, 6, seed);
        let mut last = 0.0;
        for n in 0..=v.len() {
            let r = solve(&g, &v[..n], &SolveOptions::default()).unwrap();
            assert!(r.power.total >= last, "seed {seed} n {n}");
            last = r.power.total;
        }
    }
}

#[test]
fn optimal_results_have_no_gap_and_close_exactly() {
    let g = paper();
    for seed in 0..3 {
        let v = single(&g, 4, seed);
        let r = solve(&g, &v, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!(r.gap.abs() <= 1e-9);
        assert!((r.power.total - r.power.component_sum()).abs() <= 1e-9);
        assert!((r.power.total - r.power.network - r.power.processing).abs() <= 1e-9);
        let again = evaluate_power(&r.placement, &v, &g).unwrap();
        assert_eq!(again, r.power);
    }
}

#[test]
fn routed_flows_conserve_at_every_node() {
    let g = paper();
    for seed in 0..3 {
        let v = single(&g, 6, seed);
        for r in [solve(&g, &v, &SolveOptions::default()).unwrap(), baseline_cdc(&g, &v).unwrap()] {
            let t = embedding::derive_traffic(&r.placement, &v).unwrap();
            let f = embedding::route(&t, &g).unwrap();
            assert_eq!(f.max_conservation_residual(g.len()), 0);
        }
    }
}

/// Random valid placement: inputs pinned, hidden VMs anywhere valid.
fn random_placement(g: &PhysicalGraph, v: &[Vsr], picks: &[usize]) -> Placement {
    let hosts = g.processing_nodes();
    let mut p = Placement::new();
    let mut k = 0;
    for r in v {
        for vm in &r.vms {
            let host = match vm.pinned_source {
                Some(s) => s,
                None => {
                    k += 1;
                    hosts[picks[k % picks.len()] % hosts.len()]
                }
            };
            p.insert(vm.vm_ref(), host);
        }
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn optimum_beats_random_valid_placements(seed in 0u64..1000, picks in prop::collection::vec(0usize..64, 1..12)) {
        let g = paper();
        let v = single(&g, 3, seed);
        let p = random_placement(&g, &v, &picks);
        prop_assume!(validate(&p, &v, &g).is_empty());
        let r = solve(&g, &v, &SolveOptions::default()).unwrap();
        let power = evaluate_power(&p, &v, &g).unwrap();
        prop_assert!(r.power.total <= power.total);
        prop_assert!(lower_bound(&Placement::new(), &v, &g).unwrap() <= power.total);
    }

    #[test]
    fn moving_a_vm_onto_its_neighbours_host_never_adds_network_power(
        seed in 0u64..1000, picks in prop::collection::vec(0usize..64, 1..12)
    ) {
        let g = paper();
        let v = single(&g, 2, seed);
        let p = random_placement(&g, &v, &picks);
        prop_assume!(validate(&p, &v, &g).is_empty());
        let before = evaluate_power(&p, &v, &g).unwrap();
        // Chains: put the last VM of the first request next to its predecessor.
        let r = &v[0];
        let last = r.vms.last().unwrap();
        let prev = p.get(r.vms[r.vms.len() - 2].vm_ref()).unwrap();
        let mut moved = p.clone();
        moved.insert(last.vm_ref(), prev);
        prop_assume!(validate(&moved, &v, &g).is_empty());
        let after = evaluate_power(&moved, &v, &g).unwrap();
        prop_assert!(after.network <= before.network);
    }
}
