//! Fixed-point resolution used by the evaluator and the solver.
//!
//! Workloads are resolved to 1e-6 GFLOPS and bitrates to 1 kbps (1e-6 Gbps).
//! Node loads are accumulated as integers, so the power of a placement does
//! not depend on the order in which VMs or flows are visited.

/// Integer units per GFLOPS.
pub const UNITS_PER_GFLOPS: f64 = 1e6;
/// Integer units per Gbps.
pub const UNITS_PER_GBPS: f64 = 1e6;

pub fn gflops_to_units(gflops: f64) -> i64 {
    (gflops * UNITS_PER_GFLOPS).round() as i64
}

pub fn units_to_gflops(units: i64) -> f64 {
    units as f64 / UNITS_PER_GFLOPS
}

pub fn mbps_to_units(mbps: f64) -> i64 {
    (mbps * UNITS_PER_GBPS / 1e3).round() as i64
}

pub fn units_to_gbps(units: i64) -> f64 {
    units as f64 / UNITS_PER_GBPS
}

/// Workload rounded to the evaluator resolution, in GFLOPS.
pub fn quantize_gflops(gflops: f64) -> f64 {
    units_to_gflops(gflops_to_units(gflops))
}

/// Bitrate rounded to the evaluator resolution, in Gbps.
pub fn quantize_mbps_to_gbps(mbps: f64) -> f64 {
    units_to_gbps(mbps_to_units(mbps))
}

/// Terms of [`stable_sum`] per unit.
pub const SUM_QUANTA: f64 = 1e12;

/// Sum of `values`, each rounded to a multiple of `1 / SUM_QUANTA`. The
/// integer accumulation makes the result independent of order and grouping,
/// so a sum of part sums equals the sum of all terms.
pub fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let q: i128 = values.into_iter().map(|v| (v * SUM_QUANTA).round() as i128).sum();
    q as f64 / SUM_QUANTA
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_at_resolution() {
        assert_eq!(gflops_to_units(13.5), 13_500_000);
        assert_eq!(mbps_to_units(10.0), 10_000);
        assert_eq!(units_to_gbps(10_000), 0.01);
        assert_eq!(quantize_gflops(2.0000004), 2.0);
    }

    #[test]
    fn stable_sum_ignores_order() {
        let a = [0.1, 1e16, 0.3, -1e16, 7.25];
        let mut b = a;
        b.reverse();
        assert_eq!(stable_sum(a), stable_sum(b));
    }

    #[test]
    fn stable_sum_is_additive() {
        let a = [86.8, 0.1 + 0.2, 1.0 / 3.0, 12.69];
        let whole = (stable_sum(a) * SUM_QUANTA).round();
        let parts = (stable_sum(a[..2].iter().copied()) * SUM_QUANTA).round()
            + (stable_sum(a[2..].iter().copied()) * SUM_QUANTA).round();
        assert_eq!(whole, parts);
    }
}
