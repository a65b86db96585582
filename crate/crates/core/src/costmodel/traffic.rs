//! L1↔LLC boundary traffic per layer.
//!
//! Accounting contract for tiled layers, with `n_ci`, `n_co`, `n_sp` the number
//! of input-channel, output-channel and spatial blocks (GEMM: `k`, `n`, `m`):
//!
//! * inputs are re-read once per output-channel block, halo included;
//! * WS loads the whole kernel once; OS reloads each kernel tile for every
//!   spatial block;
//! * OS accumulates partial sums in place and writes the output once; WS walks
//!   input-channel blocks outermost, so partial sums are written `n_ci` times and
//!   read back `n_ci − 1` times.
//!
//! Streamed operators read each input once and write each output once.

use serde::Serialize;

use crate::graph::{NodeIdx, WorkloadGraph};
use crate::mapper::{
    induced_input_tile, layer_element_bytes, layer_shape, LayerShape, MappingDecision, Stationary,
    TiledLayer, TilingConfig,
};

/// Bytes crossing the L1↔LLC boundary: `fill` flows LLC→L1, `drain` flows L1→LLC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct L1Traffic {
    pub fill: u64,
    pub drain: u64,
}

impl std::ops::AddAssign for L1Traffic {
    fn add_assign(&mut self, rhs: L1Traffic) {
        self.fill += rhs.fill;
        self.drain += rhs.drain;
    }
}

/// Splits `extent` into blocks of `tile`: (number of blocks, size of the last block).
fn blocks(extent: u64, tile: u64) -> (u64, u64) {
    let n = extent.div_ceil(tile);
    (n, extent - (n - 1) * tile)
}

pub fn tiled_l1_traffic(layer: &TiledLayer, tile: &TilingConfig) -> L1Traffic {
    let e = layer.element_bytes;
    let ws = layer.stationary != Stationary::OutputStationary;
    match (layer.shape, *tile) {
        (
            LayerShape::Conv {
                attrs,
                h_out,
                w_out,
            },
            TilingConfig::Conv {
                c_in_t,
                c_out_t,
                h_out_t,
                w_out_t,
            },
        ) => {
            let (n_ci, _) = blocks(attrs.c_in, c_in_t);
            let (n_co, _) = blocks(attrs.c_out, c_out_t);
            let (n_h, last_h) = blocks(h_out, h_out_t);
            let (n_w, last_w) = blocks(w_out, w_out_t);
            // Σ over spatial tiles of the induced input rows/cols, edge tiles included.
            let rows = (n_h - 1) * induced_input_tile(h_out_t, 1, &attrs).0
                + induced_input_tile(last_h, 1, &attrs).0;
            let cols = (n_w - 1) * induced_input_tile(1, w_out_t, &attrs).1
                + induced_input_tile(1, last_w, &attrs).1;
            let input = n_co * attrs.c_in * rows * cols * e;
            let kernel = attrs.weight_elements() * e;
            let weights = if ws { kernel } else { kernel * n_h * n_w };
            let out = attrs.c_out * h_out * w_out * e;
            psum(input + weights, out, n_ci, ws)
        }
        (LayerShape::Gemm(g), TilingConfig::Gemm { m_t, n_t, k_t }) => {
            let (n_m, _) = blocks(g.m, m_t);
            let (n_n, _) = blocks(g.n, n_t);
            let (n_k, _) = blocks(g.k, k_t);
            let input = n_n * g.m * g.k * e;
            let b = g.k * g.n * e;
            let weights = if ws { b } else { b * n_m };
            let out = g.m * g.n * e;
            psum(input + weights, out, n_k, ws)
        }
        _ => panic!("tile kind does not match layer kind"),
    }
}

fn psum(operand_reads: u64, out: u64, n_reduce: u64, ws: bool) -> L1Traffic {
    if ws {
        L1Traffic {
            fill: operand_reads + (n_reduce - 1) * out,
            drain: n_reduce * out,
        }
    } else {
        L1Traffic {
            fill: operand_reads,
            drain: out,
        }
    }
}

/// L1 boundary traffic of one node under its mapping decision.
pub fn layer_l1_traffic(
    graph: &WorkloadGraph,
    node: NodeIdx,
    decision: &MappingDecision,
) -> L1Traffic {
    if let (Ok(Some(shape)), Some(tile)) = (layer_shape(graph, node), decision.tiling) {
        let layer = TiledLayer {
            shape,
            element_bytes: layer_element_bytes(graph, node),
            stationary: decision.stationary,
        };
        return tiled_l1_traffic(&layer, &tile);
    }
    let n = &graph.nodes[node];
    let mut inputs = n.inputs.clone();
    inputs.sort_unstable();
    inputs.dedup();
    L1Traffic {
        fill: inputs
            .iter()
            .map(|&t| graph.tensor(t).footprint_bytes())
            .sum(),
        drain: n
            .outputs
            .iter()
            .map(|&t| graph.tensor(t).footprint_bytes())
            .sum(),
    }
}
