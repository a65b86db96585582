//! Per-level traffic, energy breakdown, and the memory-side latency proxy.

mod tech;
mod traffic;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{OpClass, WorkloadGraph};
use crate::mapper::MappingDecision;
use crate::residency::ResidencyTrace;

pub use tech::{ComputeParams, LevelParams, OpEnergy, TechParams, DEFAULT_TECH_TOML};
pub use traffic::{layer_l1_traffic, tiled_l1_traffic, L1Traffic};

const PICO: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("tech parameter file: {0}")]
    TechFormat(String),
    #[error("cannot read tech parameter file `{path}`: {message}")]
    TechIo { path: String, message: String },
    #[error("invalid tech parameters: {0}")]
    TechInvalid(String),
}

/// Bytes per hierarchy level. L1 fields count the L1↔LLC boundary (`l1_write`
/// fills L1, `l1_read` drains it); LLC fields add DRAM fills and writebacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct TrafficBreakdown {
    pub l1_read: u64,
    pub l1_write: u64,
    pub llc_read: u64,
    pub llc_write: u64,
    pub dram_read: u64,
    pub dram_write: u64,
}

impl TrafficBreakdown {
    pub fn scaled(&self, k: u64) -> TrafficBreakdown {
        TrafficBreakdown {
            l1_read: self.l1_read * k,
            l1_write: self.l1_write * k,
            llc_read: self.llc_read * k,
            llc_write: self.llc_write * k,
            dram_read: self.dram_read * k,
            dram_write: self.dram_write * k,
        }
    }

    pub fn dram_total(&self) -> u64 {
        self.dram_read + self.dram_write
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EnergyBreakdown {
    pub e_l1: f64,
    pub e_llc: f64,
    pub e_dram: f64,
    pub e_core: f64,
    pub e_leakage: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LatencyProxy {
    pub t_l1: f64,
    pub t_llc: f64,
    pub t_dram: f64,
    pub t_mem: f64,
}

/// Operation counts per operator class, indexed by [`OpClass::index`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct OpCounts(pub [f64; OpClass::ALL.len()]);

impl OpCounts {
    /// Counts every node's own work under its class and fused epilogues under theirs.
    pub fn from_graph(graph: &WorkloadGraph) -> OpCounts {
        let mut c = OpCounts::default();
        for n in &graph.nodes {
            c.0[n.op_class.index()] += n.flops as f64;
            for f in &n.epilogue {
                c.0[f.op_class.index()] += f.flops as f64;
            }
        }
        c
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Capacities that leak during `t_mem`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capacities {
    pub l1: u64,
    pub llc: u64,
    pub dram: u64,
}

fn level_energy(read: u64, write: u64, p: &LevelParams) -> f64 {
    (read as f64 * p.read_pj_per_byte + write as f64 * p.write_pj_per_byte) * PICO
}

pub fn energy(
    traffic: &TrafficBreakdown,
    ops: &OpCounts,
    tech: &TechParams,
    capacities: Capacities,
    t_mem: f64,
) -> EnergyBreakdown {
    let e_l1 = level_energy(traffic.l1_read, traffic.l1_write, &tech.l1);
    let e_llc = level_energy(traffic.llc_read, traffic.llc_write, &tech.llc);
    let e_dram = level_energy(traffic.dram_read, traffic.dram_write, &tech.dram);
    let e_core = OpClass::ALL
        .iter()
        .map(|&c| ops.0[c.index()] * tech.compute.pj_per_op.get(c))
        .sum::<f64>()
        * PICO;
    let e_leakage = [
        (&tech.l1, capacities.l1),
        (&tech.llc, capacities.llc),
        (&tech.dram, capacities.dram),
    ]
    .iter()
    .map(|(p, cap)| p.leakage_pw_per_byte * *cap as f64 * t_mem)
    .sum::<f64>()
        * PICO;
    EnergyBreakdown {
        e_l1,
        e_llc,
        e_dram,
        e_core,
        e_leakage,
        total: e_l1 + e_llc + e_dram + e_core + e_leakage,
    }
}

pub fn latency_proxy(traffic: &TrafficBreakdown, tech: &TechParams) -> LatencyProxy {
    let t_l1 = (traffic.l1_read + traffic.l1_write) as f64 / tech.l1.bandwidth_bytes_per_s;
    let t_llc = (traffic.llc_read + traffic.llc_write) as f64 / tech.llc.bandwidth_bytes_per_s;
    let t_dram = (traffic.dram_read + traffic.dram_write) as f64 / tech.dram.bandwidth_bytes_per_s;
    LatencyProxy {
        t_l1,
        t_llc,
        t_dram,
        t_mem: t_l1.max(t_llc).max(t_dram),
    }
}

/// Compute service time at peak vector throughput.
pub fn compute_time(ops: &OpCounts, tech: &TechParams) -> f64 {
    ops.total() / tech.compute.peak_ops_per_s()
}

/// Combines per-layer L1 traffic with the LLC↔DRAM totals of a residency trace.
///
/// Every L1 fill is sourced from the LLC and every drain lands there; DRAM fills
/// are written into the LLC and writebacks are read out of it.
pub fn aggregate_traffic(
    graph: &WorkloadGraph,
    decisions: &[MappingDecision],
    trace: &ResidencyTrace,
) -> TrafficBreakdown {
    debug_assert_eq!(decisions.len(), graph.nodes.len());
    let mut l1 = L1Traffic::default();
    for (i, d) in decisions.iter().enumerate() {
        l1 += layer_l1_traffic(graph, i, d);
    }
    let t = TrafficBreakdown {
        l1_read: l1.drain,
        l1_write: l1.fill,
        llc_read: l1.fill + trace.dram_write,
        llc_write: l1.drain + trace.dram_read,
        dram_read: trace.dram_read,
        dram_write: trace.dram_write,
    };
    assert!(t.llc_read >= l1.fill, "LLC must source every L1 fill");
    t
}

/// Everything the cost model derives for one hierarchy configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointCost {
    pub traffic: TrafficBreakdown,
    pub energy: EnergyBreakdown,
    pub latency: LatencyProxy,
    pub t_compute: f64,
    /// max(t_compute, t_mem).
    pub roofline_total: f64,
}

pub fn evaluate_point(
    graph: &WorkloadGraph,
    decisions: &[MappingDecision],
    trace: &ResidencyTrace,
    ops: &OpCounts,
    tech: &TechParams,
    l1_capacity: u64,
    llc_capacity: u64,
) -> PointCost {
    let traffic = aggregate_traffic(graph, decisions, trace);
    let latency = latency_proxy(&traffic, tech);
    let caps = Capacities {
        l1: l1_capacity,
        llc: llc_capacity,
        dram: tech.dram_capacity_bytes,
    };
    let energy = energy(&traffic, ops, tech, caps, latency.t_mem);
    let t_compute = compute_time(ops, tech);
    PointCost {
        traffic,
        energy,
        latency,
        t_compute,
        roofline_total: t_compute.max(latency.t_mem),
    }
}
