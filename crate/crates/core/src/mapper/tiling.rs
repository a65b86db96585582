//! L1 tile geometry, feasibility, and the surrogate tile objective.

use serde::{Deserialize, Serialize};

use crate::costmodel::{tiled_l1_traffic, L1Traffic};
use crate::graph::{ConvAttrs, GemmAttrs, GraphError};

use super::Stationary;

/// Blocking factors of one tiled layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TilingConfig {
    Conv {
        c_in_t: u64,
        c_out_t: u64,
        h_out_t: u64,
        w_out_t: u64,
    },
    Gemm {
        m_t: u64,
        n_t: u64,
        k_t: u64,
    },
}

impl TilingConfig {
    pub fn dims(&self) -> Vec<u64> {
        match *self {
            TilingConfig::Conv {
                c_in_t,
                c_out_t,
                h_out_t,
                w_out_t,
            } => vec![c_in_t, c_out_t, h_out_t, w_out_t],
            TilingConfig::Gemm { m_t, n_t, k_t } => vec![m_t, n_t, k_t],
        }
    }
}

impl std::fmt::Display for TilingConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            TilingConfig::Conv {
                c_in_t,
                c_out_t,
                h_out_t,
                w_out_t,
            } => write!(f, "cin={c_in_t} cout={c_out_t} h={h_out_t} w={w_out_t}"),
            TilingConfig::Gemm { m_t, n_t, k_t } => write!(f, "m={m_t} n={n_t} k={k_t}"),
        }
    }
}

/// Loop-nest shape of a tiled operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerShape {
    Conv {
        attrs: ConvAttrs,
        h_out: u64,
        w_out: u64,
    },
    Gemm(GemmAttrs),
}

impl LayerShape {
    pub fn conv(attrs: ConvAttrs) -> Result<Self, GraphError> {
        let (h_out, w_out) = attrs.output_dims()?;
        Ok(LayerShape::Conv {
            attrs,
            h_out,
            w_out,
        })
    }

    /// Upper bound of every blocking factor, in state order.
    pub fn extents(&self) -> Vec<u64> {
        match *self {
            LayerShape::Conv {
                attrs,
                h_out,
                w_out,
            } => vec![attrs.c_in, attrs.c_out, h_out, w_out],
            LayerShape::Gemm(g) => vec![g.m, g.n, g.k],
        }
    }

    /// Builds a tile from blocking factors in state order.
    pub fn tile(&self, dims: &[u64]) -> TilingConfig {
        match self {
            LayerShape::Conv { .. } => TilingConfig::Conv {
                c_in_t: dims[0],
                c_out_t: dims[1],
                h_out_t: dims[2],
                w_out_t: dims[3],
            },
            LayerShape::Gemm(_) => TilingConfig::Gemm {
                m_t: dims[0],
                n_t: dims[1],
                k_t: dims[2],
            },
        }
    }

    /// The single tile covering the whole layer.
    pub fn full_tile(&self) -> TilingConfig {
        self.tile(&self.extents())
    }

    /// Footprint of the stationary-eligible operand (conv kernel or GEMM `B`), in elements.
    pub fn weight_elements(&self) -> u64 {
        match *self {
            LayerShape::Conv { attrs, .. } => attrs.weight_elements(),
            LayerShape::Gemm(g) => g.k * g.n,
        }
    }

    pub fn flops(&self) -> u64 {
        match *self {
            LayerShape::Conv {
                attrs,
                h_out,
                w_out,
            } => 2 * attrs.c_in * attrs.c_out * attrs.k_h * attrs.k_w * h_out * w_out,
            LayerShape::Gemm(g) => 2 * g.m * g.n * g.k,
        }
    }
}

/// A Conv/GEMM operator together with the mapping context its tiling depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TiledLayer {
    pub shape: LayerShape,
    pub element_bytes: u64,
    pub stationary: Stationary,
}

impl TiledLayer {
    pub fn weight_bytes(&self) -> u64 {
        self.shape.weight_elements() * self.element_bytes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeasibilityReport {
    pub s_in: u64,
    pub s_ker: u64,
    pub s_out: u64,
    pub bytes_total: u64,
    pub feasible: bool,
    /// Induced input tile extents (conv only; zero for GEMM).
    pub h_in_tile: u64,
    pub w_in_tile: u64,
}

/// Input rows/cols a conv output tile reads: `min(in, stride·(t−1) + k + 2·pad)`.
pub fn induced_input_tile(h_out_t: u64, w_out_t: u64, attrs: &ConvAttrs) -> (u64, u64) {
    let axis = |t: u64, k: u64, extent: u64| extent.min(attrs.stride * (t - 1) + k + 2 * attrs.pad);
    (
        axis(h_out_t, attrs.k_h, attrs.h_in),
        axis(w_out_t, attrs.k_w, attrs.w_in),
    )
}

/// Per-tile L1 footprint `(S_in + S_ker + S_out)·e` against the effective budget.
pub fn tile_footprint(
    tile: &TilingConfig,
    shape: &LayerShape,
    element_bytes: u64,
    l1_eff: u64,
) -> FeasibilityReport {
    let (s_in, s_ker, s_out, h_in_tile, w_in_tile) = match (*tile, *shape) {
        (
            TilingConfig::Conv {
                c_in_t,
                c_out_t,
                h_out_t,
                w_out_t,
            },
            LayerShape::Conv { attrs, .. },
        ) => {
            let (h_in_tile, w_in_tile) = induced_input_tile(h_out_t, w_out_t, &attrs);
            (
                c_in_t * h_in_tile * w_in_tile,
                c_in_t * c_out_t * attrs.k_h * attrs.k_w,
                c_out_t * h_out_t * w_out_t,
                h_in_tile,
                w_in_tile,
            )
        }
        (TilingConfig::Gemm { m_t, n_t, k_t }, LayerShape::Gemm(_)) => {
            (m_t * k_t, k_t * n_t, m_t * n_t, 0, 0)
        }
        _ => panic!("tile kind does not match layer kind"),
    };
    let bytes_total = (s_in + s_ker + s_out) * element_bytes;
    FeasibilityReport {
        s_in,
        s_ker,
        s_out,
        bytes_total,
        feasible: bytes_total <= l1_eff,
        h_in_tile,
        w_in_tile,
    }
}

/// Number of tiles implied by a blocking: product of per-dimension ceilings.
pub fn tile_count(tile: &TilingConfig, shape: &LayerShape) -> u64 {
    tile.dims()
        .iter()
        .zip(shape.extents())
        .map(|(&t, e)| e.div_ceil(t))
        .product()
}

/// Weights of the three terms of the tile objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TileCostWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for TileCostWeights {
    fn default() -> Self {
        TileCostWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.1,
        }
    }
}

impl TileCostWeights {
    pub fn validate(&self) -> Result<(), String> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if ok(self.alpha) && ok(self.beta) && ok(self.gamma) {
            Ok(())
        } else {
            Err("tile cost weights must be finite and non-negative".into())
        }
    }
}

/// The three raw terms of the objective for one tile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileTerms {
    pub compute: f64,
    pub bytes: f64,
    pub tiles: f64,
}

impl TileTerms {
    pub fn evaluate(tile: &TilingConfig, layer: &TiledLayer) -> TileTerms {
        let L1Traffic { fill, drain } = tiled_l1_traffic(layer, tile);
        TileTerms {
            compute: layer.shape.flops() as f64,
            bytes: (fill + drain) as f64,
            tiles: tile_count(tile, &layer.shape) as f64,
        }
    }

    pub fn weighted(&self, w: &TileCostWeights) -> f64 {
        w.alpha * self.compute + w.beta * self.bytes + w.gamma * self.tiles
    }

    /// Rescales `w` so that each term of `self` contributes exactly its weight.
    pub fn normalize(&self, w: &TileCostWeights) -> TileCostWeights {
        let scale = |weight: f64, term: f64| if term > 0.0 { weight / term } else { weight };
        TileCostWeights {
            alpha: scale(w.alpha, self.compute),
            beta: scale(w.beta, self.bytes),
            gamma: scale(w.gamma, self.tiles),
        }
    }
}

/// `J(t) = α·Compute + β·Bytes + γ·N_tiles`, or `+∞` for tiles that do not fit.
pub fn tile_cost(
    tile: &TilingConfig,
    layer: &TiledLayer,
    l1_eff: u64,
    weights: &TileCostWeights,
) -> f64 {
    if !tile_footprint(tile, &layer.shape, layer.element_bytes, l1_eff).feasible {
        return f64::INFINITY;
    }
    TileTerms::evaluate(tile, layer).weighted(weights)
}
