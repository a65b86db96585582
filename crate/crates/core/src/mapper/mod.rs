//! Per-layer mapping: stationary dataflow choice, fusion, and L1 tiling.

mod anneal;
mod fusion;
mod tiling;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NodeIdx, WorkloadGraph};

pub use anneal::{
    anneal_tiling, anneal_tiling_with_stats, initial_tile, tile_ladder, AnnealOutcome,
    AnnealingParams,
};
pub use fusion::{apply_fusion, FusionRecord};
pub use tiling::{
    induced_input_tile, tile_cost, tile_count, tile_footprint, FeasibilityReport, LayerShape,
    TileCostWeights, TileTerms, TiledLayer, TilingConfig,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapperError {
    #[error("no feasible L1 tiling for layer `{layer}` with an effective L1 budget of {l1_eff} B")]
    NoFeasibleTiling { layer: String, l1_eff: u64 },
    #[error("invalid mapper policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid annealing parameters: {0}")]
    InvalidAnnealing(String),
    #[error("layer `{layer}`: {reason}")]
    InvalidLayer { layer: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stationary {
    #[serde(rename = "WS")]
    WeightStationary,
    #[serde(rename = "OS")]
    OutputStationary,
    #[serde(rename = "NA")]
    NotApplicable,
}

impl fmt::Display for Stationary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stationary::WeightStationary => "WS",
            Stationary::OutputStationary => "OS",
            Stationary::NotApplicable => "-",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapperPolicy {
    /// Weight-stationary threshold as a fraction of the effective L1 budget.
    pub rho: f64,
    /// L1 bytes reserved for bookkeeping; the remainder is the tiling budget.
    pub l1_bookkeeping_bytes: u64,
    pub fusion_enabled: bool,
    /// Rescale the tile-objective weights per layer so each term is 1 at the start tile.
    pub normalize_cost_terms: bool,
}

impl Default for MapperPolicy {
    fn default() -> Self {
        MapperPolicy {
            rho: 0.5,
            l1_bookkeeping_bytes: 1024,
            fusion_enabled: true,
            normalize_cost_terms: true,
        }
    }
}

impl MapperPolicy {
    pub fn validate(&self) -> Result<(), MapperError> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(MapperError::InvalidPolicy("rho must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Effective L1 tiling budget for a given L1 capacity.
    pub fn l1_eff(&self, l1_capacity: u64) -> Result<u64, MapperError> {
        if self.l1_bookkeeping_bytes >= l1_capacity {
            return Err(MapperError::InvalidPolicy(format!(
                "bookkeeping reserve of {} B does not leave room in a {} B L1",
                self.l1_bookkeeping_bytes, l1_capacity
            )));
        }
        Ok(l1_capacity - self.l1_bookkeeping_bytes)
    }
}

/// WS iff `weight_bytes < rho · l1_eff` (strict).
///
/// Evaluated as a ratio so that scaling both sizes by the same factor can never
/// flip the decision.
pub fn select_stationary(weight_bytes: u64, l1_eff: u64, policy: &MapperPolicy) -> Stationary {
    debug_assert!(l1_eff > 0);
    if (weight_bytes as f64) / (l1_eff as f64) < policy.rho {
        Stationary::WeightStationary
    } else {
        Stationary::OutputStationary
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MappingDecision {
    pub node: String,
    pub stationary: Stationary,
    pub tiling: Option<TilingConfig>,
    /// Set when this node absorbed its consumer (the consumer's id).
    pub fused_into: Option<String>,
}

/// Loop-nest description of `node` if it is a tiled operator.
pub fn layer_shape(
    graph: &WorkloadGraph,
    node: NodeIdx,
) -> Result<Option<LayerShape>, MapperError> {
    let n = &graph.nodes[node];
    if let Some(c) = n.conv() {
        return LayerShape::conv(*c)
            .map(Some)
            .map_err(|e| MapperError::InvalidLayer {
                layer: n.id.clone(),
                reason: e.to_string(),
            });
    }
    Ok(n.gemm().map(|g| LayerShape::Gemm(*g)))
}

/// Element size used for a tiled layer's footprints (its first input's).
pub fn layer_element_bytes(graph: &WorkloadGraph, node: NodeIdx) -> u64 {
    let n = &graph.nodes[node];
    n.inputs
        .first()
        .or(n.outputs.first())
        .map(|&t| u64::from(graph.tensor(t).element_bytes))
        .unwrap_or(4)
}

/// Seed for one tiling search, mixed from the global seed, the node id, and the
/// L1 capacity so that results do not depend on evaluation order.
pub fn derive_seed(global: u64, node_id: &str, l1_capacity: u64) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET;
    for b in global
        .to_le_bytes()
        .iter()
        .chain(node_id.as_bytes())
        .chain(&l1_capacity.to_le_bytes())
    {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mapping decisions for every node of an (already fused) graph at one L1 capacity.
///
/// Returned in node declaration order.
pub fn map_graph(
    graph: &WorkloadGraph,
    fusions: &[FusionRecord],
    l1_capacity: u64,
    policy: &MapperPolicy,
    sa: &AnnealingParams,
    weights: &TileCostWeights,
) -> Result<Vec<MappingDecision>, MapperError> {
    policy.validate()?;
    sa.validate()?;
    let l1_eff = policy.l1_eff(l1_capacity)?;
    let mut out = Vec::with_capacity(graph.nodes.len());
    for (i, node) in graph.nodes.iter().enumerate() {
        let fused_into = fusions
            .iter()
            .find(|r| r.producer == node.id)
            .map(|r| r.consumer.clone());
        let (stationary, tiling) = match layer_shape(graph, i)? {
            Some(shape) => {
                let e = layer_element_bytes(graph, i);
                let stationary = select_stationary(shape.weight_elements() * e, l1_eff, policy);
                let layer = TiledLayer {
                    shape,
                    element_bytes: e,
                    stationary,
                };
                let params = AnnealingParams {
                    seed: derive_seed(sa.seed, &node.id, l1_capacity),
                    ..*sa
                };
                let tile = anneal_tiling(
                    &layer,
                    &node.id,
                    l1_eff,
                    &params,
                    weights,
                    policy.normalize_cost_terms,
                )?;
                (stationary, Some(tile))
            }
            None => (Stationary::NotApplicable, None),
        };
        out.push(MappingDecision {
            node: node.id.clone(),
            stationary,
            tiling,
            fused_into,
        });
    }
    Ok(out)
}
