//! Capacity-grid sweeps over (L1, LLC), Pareto extraction, and regime labels.

mod pareto;
mod regime;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rayon::prelude::*;

use crate::costmodel::{
    evaluate_point, EnergyBreakdown, LatencyProxy, OpCounts, TechParams, TrafficBreakdown,
};
use crate::graph::{topological_order, Schedule, WorkloadGraph};
use crate::mapper::{
    apply_fusion, map_graph, AnnealingParams, FusionRecord, MapperError, MapperPolicy,
    MappingDecision, TileCostWeights,
};
use crate::residency::{live_intervals, simulate_residency, LiveInterval, ResidencyTrace};

pub use pareto::{dominates, pareto_front, pareto_indices};
pub use regime::{
    classify_regime, classify_row, Regime, RegimeEvidence, RegimeLabel, RegimeThresholds,
};

pub const KIB: u64 = 1 << 10;
pub const MIB: u64 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("workload footprint of {footprint} B exceeds the DRAM capacity of {capacity} B")]
    DramOverflow { footprint: u64, capacity: u64 },
    #[error("at L1 = {l1} B: {source}")]
    Mapper {
        l1: u64,
        #[source]
        source: MapperError,
    },
    #[error("invalid sweep grid: {0}")]
    InvalidGrid(String),
    #[error("invalid tile cost weights: {0}")]
    InvalidWeights(String),
    #[error("cannot start worker pool: {0}")]
    Workers(String),
}

impl SweepError {
    /// Errors produced by the model itself, as opposed to bad configuration.
    pub fn is_model_error(&self) -> bool {
        matches!(
            self,
            SweepError::DramOverflow { .. } | SweepError::Mapper { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub l1_points: Vec<u64>,
    pub llc_points: Vec<u64>,
    /// (L1, LLC) reference cell used for normalization.
    pub baseline: (u64, u64),
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            l1_points: [16, 32, 64, 128, 256].iter().map(|k| k * KIB).collect(),
            llc_points: [16, 32, 64].iter().map(|m| m * MIB).collect(),
            baseline: (32 * KIB, 16 * MIB),
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<(), SweepError> {
        for (name, pts) in [
            ("l1_points", &self.l1_points),
            ("llc_points", &self.llc_points),
        ] {
            if pts.is_empty() {
                return Err(SweepError::InvalidGrid(format!("{name} is empty")));
            }
            if pts[0] == 0 || pts.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SweepError::InvalidGrid(format!(
                    "{name} must be positive and strictly increasing"
                )));
            }
        }
        if !self.l1_points.contains(&self.baseline.0) || !self.llc_points.contains(&self.baseline.1)
        {
            return Err(SweepError::InvalidGrid(
                "baseline is not a grid cell".into(),
            ));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.l1_points.len() * self.llc_points.len()
    }

    pub fn baseline_index(&self) -> (usize, usize) {
        (
            self.l1_points
                .iter()
                .position(|&c| c == self.baseline.0)
                .unwrap_or(0),
            self.llc_points
                .iter()
                .position(|&c| c == self.baseline.1)
                .unwrap_or(0),
        )
    }

    /// Sub-grid of `n` L1 points by `m` LLC points that still contains the baseline.
    pub fn window(&self, n: usize, m: usize) -> Result<SweepGrid, SweepError> {
        self.validate()?;
        let (bi, bj) = self.baseline_index();
        let pick = |pts: &[u64], b: usize, k: usize, name: &str| {
            if k == 0 || k > pts.len() {
                return Err(SweepError::InvalidGrid(format!(
                    "{name} window of {k} does not fit {} points",
                    pts.len()
                )));
            }
            let start = b.min(pts.len() - k);
            Ok(pts[start..start + k].to_vec())
        };
        Ok(SweepGrid {
            l1_points: pick(&self.l1_points, bi, n, "L1")?,
            llc_points: pick(&self.llc_points, bj, m, "LLC")?,
            baseline: self.baseline,
        })
    }
}

/// Mapper and cost-model settings shared by every cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub struct ModelSettings {
    pub policy: MapperPolicy,
    pub annealing: AnnealingParams,
    pub weights: TileCostWeights,
    pub tech: TechParams,
}


#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub l1: u64,
    pub llc: u64,
    pub energy: EnergyBreakdown,
    pub traffic: TrafficBreakdown,
    pub latency: LatencyProxy,
    pub t_compute: f64,
    pub roofline_total: f64,
    /// FNV-1a hash of the per-layer mapping decisions at this L1.
    pub mapping_digest: u64,
}

/// A workload after fusion and scheduling, ready to be evaluated at any capacity.
#[derive(Debug, Clone)]
pub struct PreparedWorkload {
    pub graph: WorkloadGraph,
    pub fusions: Vec<FusionRecord>,
    pub schedule: Schedule,
    pub intervals: Vec<LiveInterval>,
    pub ops: OpCounts,
}

impl PreparedWorkload {
    pub fn new(graph: &WorkloadGraph, policy: &MapperPolicy) -> PreparedWorkload {
        let (graph, fusions) = if policy.fusion_enabled {
            apply_fusion(graph)
        } else {
            (graph.clone(), Vec::new())
        };
        let schedule = topological_order(&graph);
        let intervals = live_intervals(&graph, &schedule);
        let ops = OpCounts::from_graph(&graph);
        PreparedWorkload {
            graph,
            fusions,
            schedule,
            intervals,
            ops,
        }
    }

    pub fn map_at(&self, l1: u64, s: &ModelSettings) -> Result<Vec<MappingDecision>, SweepError> {
        map_graph(
            &self.graph,
            &self.fusions,
            l1,
            &s.policy,
            &s.annealing,
            &s.weights,
        )
        .map_err(|source| SweepError::Mapper { l1, source })
    }

    pub fn residency_at(&self, llc: u64) -> ResidencyTrace {
        simulate_residency(&self.graph, &self.schedule, &self.intervals, llc)
    }

    pub fn point(
        &self,
        l1: u64,
        llc: u64,
        decisions: &[MappingDecision],
        trace: &ResidencyTrace,
        tech: &TechParams,
    ) -> SweepPoint {
        let c = evaluate_point(&self.graph, decisions, trace, &self.ops, tech, l1, llc);
        SweepPoint {
            l1,
            llc,
            energy: c.energy,
            traffic: c.traffic,
            latency: c.latency,
            t_compute: c.t_compute,
            roofline_total: c.roofline_total,
            mapping_digest: mapping_digest(decisions),
        }
    }
}

pub fn mapping_digest(decisions: &[MappingDecision]) -> u64 {
    let bytes = serde_json::to_vec(decisions).expect("decisions serialize");
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn check_inputs(graph: &WorkloadGraph, s: &ModelSettings) -> Result<(), SweepError> {
    let footprint = graph.total_footprint_bytes();
    if footprint > s.tech.dram_capacity_bytes {
        return Err(SweepError::DramOverflow {
            footprint,
            capacity: s.tech.dram_capacity_bytes,
        });
    }
    s.weights.validate().map_err(SweepError::InvalidWeights)?;
    s.policy
        .validate()
        .map_err(|source| SweepError::Mapper { l1: 0, source })?;
    Ok(())
}

/// Evaluates one configuration directly.
pub fn evaluate_config(
    graph: &WorkloadGraph,
    l1: u64,
    llc: u64,
    s: &ModelSettings,
) -> Result<SweepPoint, SweepError> {
    check_inputs(graph, s)?;
    let w = PreparedWorkload::new(graph, &s.policy);
    let decisions = w.map_at(l1, s)?;
    let trace = w.residency_at(llc);
    Ok(w.point(l1, llc, &decisions, &trace, &s.tech))
}

/// Evaluates every grid cell, L1-major, using `workers` threads (0: all cores).
///
/// Mapping depends only on L1 and residency only on LLC, so each is computed
/// once per axis value; each cell then combines the two. Results do not depend
/// on the worker count.
pub fn run_sweep(
    graph: &WorkloadGraph,
    grid: &SweepGrid,
    s: &ModelSettings,
    workers: usize,
) -> Result<Vec<SweepPoint>, SweepError> {
    grid.validate()?;
    check_inputs(graph, s)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SweepError::Workers(e.to_string()))?;
    pool.install(|| {
        let w = PreparedWorkload::new(graph, &s.policy);
        let mappings: Vec<Vec<MappingDecision>> = grid
            .l1_points
            .par_iter()
            .map(|&l1| w.map_at(l1, s))
            .collect::<Result<_, _>>()?;
        let traces: Vec<ResidencyTrace> = grid
            .llc_points
            .par_iter()
            .map(|&llc| w.residency_at(llc))
            .collect();
        let n_llc = grid.llc_points.len();
        Ok((0..grid.cells())
            .into_par_iter()
            .map(|c| {
                let (i, j) = (c / n_llc, c % n_llc);
                w.point(
                    grid.l1_points[i],
                    grid.llc_points[j],
                    &mappings[i],
                    &traces[j],
                    &s.tech,
                )
            })
            .collect())
    })
}

/// Lowest-energy cell; ties go to the smaller LLC, then the smaller L1.
pub fn best_point(points: &[SweepPoint]) -> Option<&SweepPoint> {
    points.iter().min_by(|a, b| {
        a.energy
            .total
            .total_cmp(&b.energy.total)
            .then(a.llc.cmp(&b.llc))
            .then(a.l1.cmp(&b.l1))
    })
}

pub fn find_point(points: &[SweepPoint], l1: u64, llc: u64) -> Option<&SweepPoint> {
    points.iter().find(|p| p.l1 == l1 && p.llc == llc)
}
