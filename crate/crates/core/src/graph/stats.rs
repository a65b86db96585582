use std::fmt;
use std::ops::Add;

use serde::Serialize;

use super::{TensorKind, WorkloadGraph};

const MIB: f64 = (1u64 << 20) as f64;

/// Workload scale summary: weight and activation footprints plus operation count.
///
/// `act_mb` sums every non-weight tensor (inputs, intermediates, outputs); the
/// peak-live footprint is a residency concern and is reported there.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StatsReport {
    pub weight_mb: f64,
    pub act_mb: f64,
    pub gflops: f64,
}

impl Add for StatsReport {
    type Output = StatsReport;

    fn add(self, rhs: StatsReport) -> StatsReport {
        StatsReport {
            weight_mb: self.weight_mb + rhs.weight_mb,
            act_mb: self.act_mb + rhs.act_mb,
            gflops: self.gflops + rhs.gflops,
        }
    }
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:>10.2} {:>10.2} {:>10.4}",
            self.weight_mb, self.act_mb, self.gflops
        )
    }
}

pub fn tensor_stats(graph: &WorkloadGraph) -> StatsReport {
    let (mut weight, mut act) = (0u64, 0u64);
    for t in &graph.tensors {
        match t.kind {
            TensorKind::Weight => weight += t.footprint_bytes(),
            _ => act += t.footprint_bytes(),
        }
    }
    let flops: u64 = graph.nodes.iter().map(|n| n.total_flops()).sum();
    StatsReport {
        weight_mb: weight as f64 / MIB,
        act_mb: act as f64 / MIB,
        gflops: flops as f64 / 1e9,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_workload;

    #[test]
    fn one_mib_square_weight() {
        let g = parse_workload(
            r#"{"name": "w", "tensors": [{"id": "w", "dims": [1024, 1024], "kind": "weight"}]}"#,
        )
        .unwrap();
        let s = tensor_stats(&g);
        assert_eq!(s.weight_mb, 4.0);
        assert_eq!(s.act_mb, 0.0);
        assert_eq!(s.gflops, 0.0);
    }

    #[test]
    fn no_weights() {
        let g = parse_workload(
            r#"{"name": "a", "tensors": [{"id": "x", "dims": [256, 1024], "kind": "input"}]}"#,
        )
        .unwrap();
        let s = tensor_stats(&g);
        assert_eq!(s.weight_mb, 0.0);
        assert_eq!(s.act_mb, 1.0);
    }

    #[test]
    fn gemm_gflops() {
        let g = parse_workload(
            r#"{"name": "g",
            "tensors": [{"id": "a", "dims": [128, 128], "kind": "input"},
                        {"id": "b", "dims": [128, 128], "kind": "weight"},
                        {"id": "c", "dims": [128, 128], "kind": "output"}],
            "nodes": [{"id": "mm", "op_class": "GEMM", "inputs": ["a", "b"], "outputs": ["c"],
                       "attrs": {"m": 128, "n": 128, "k": 128}}]}"#,
        )
        .unwrap();
        let s = tensor_stats(&g);
        assert!((s.gflops - 2.0 * 128f64.powi(3) / 1e9).abs() < 1e-15);
        assert!((s.gflops - 0.004194304).abs() < 1e-12);
    }

    #[test]
    fn class_flop_conventions() {
        let g = parse_workload(
            r#"{"name": "mix",
            "tensors": [{"id": "x", "dims": [10], "kind": "input"},
                        {"id": "a", "dims": [10], "kind": "activation"},
                        {"id": "b", "dims": [10], "kind": "activation"},
                        {"id": "c", "dims": [5], "kind": "activation"},
                        {"id": "d", "dims": [5], "kind": "activation"},
                        {"id": "e", "dims": [5], "kind": "output"}],
            "nodes": [{"id": "n0", "op_class": "Elementwise", "inputs": ["x", "x"], "outputs": ["a"]},
                      {"id": "n1", "op_class": "Softmax", "inputs": ["a"], "outputs": ["b"]},
                      {"id": "n2", "op_class": "Reduce", "inputs": ["b"], "outputs": ["c"]},
                      {"id": "n3", "op_class": "Resample", "inputs": ["c"], "outputs": ["d"]},
                      {"id": "n4", "op_class": "Concat", "inputs": ["d"], "outputs": ["e"]}]}"#,
        )
        .unwrap();
        let flops: Vec<u64> = g.nodes.iter().map(|n| n.flops).collect();
        assert_eq!(flops, vec![10, 20, 20, 20, 0]);
    }
}
