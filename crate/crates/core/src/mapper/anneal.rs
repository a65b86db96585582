//! Simulated-annealing search over L1 blocking factors.
//!
//! Each blocking dimension moves along a geometric ladder `1, 2, 4, …` capped by
//! the layer extent (the extent itself is always the top rung). The search starts
//! from the full-layer tile, shrinks it rung by rung until it fits, then runs a
//! fixed geometric cooling schedule whose temperatures are expressed relative to
//! the starting cost, so one set of hyperparameters serves every layer.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tiling::{tile_cost, TileCostWeights, TileTerms, TiledLayer, TilingConfig};
use super::MapperError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnealingParams {
    /// Initial temperature as a multiple of the starting state's cost.
    pub t0_factor: f64,
    /// Stop temperature as a fraction of the initial temperature.
    pub t_min_factor: f64,
    /// Geometric cooling factor applied after every `l_iters` moves.
    pub alpha_t: f64,
    /// Moves per temperature.
    pub l_iters: u32,
    /// Ladder rungs moved per perturbation.
    pub delta: u32,
    /// Base seed; mixed with node id and L1 capacity per search. Set from the
    /// engine's global seed rather than the `[annealing]` table.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for AnnealingParams {
    fn default() -> Self {
        AnnealingParams {
            t0_factor: 1e3,
            t_min_factor: 1e-3,
            alpha_t: 0.9,
            l_iters: 50,
            delta: 1,
            seed: 0,
        }
    }
}

impl AnnealingParams {
    pub fn validate(&self) -> Result<(), MapperError> {
        let bad = |m: &str| Err(MapperError::InvalidAnnealing(m.to_string()));
        if !(self.t0_factor.is_finite() && self.t0_factor > 0.0) {
            return bad("t0_factor must be positive");
        }
        if !(self.t_min_factor > 0.0 && self.t_min_factor < 1.0) {
            return bad("t_min_factor must lie in (0, 1) so that T0 > T_min > 0");
        }
        if !(self.alpha_t > 0.0 && self.alpha_t < 1.0) {
            return bad("alpha_t must lie in (0, 1)");
        }
        if self.l_iters == 0 {
            return bad("l_iters must be >= 1");
        }
        if self.delta == 0 {
            return bad("delta must be >= 1");
        }
        Ok(())
    }
}

/// Candidate blocking factors for one dimension: powers of two below `extent`, then `extent`.
pub fn tile_ladder(extent: u64) -> Vec<u64> {
    let mut rungs = Vec::new();
    let mut v = 1u64;
    while v < extent {
        rungs.push(v);
        v *= 2;
    }
    rungs.push(extent);
    rungs
}

/// Result of one tiling search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealOutcome {
    pub tile: TilingConfig,
    pub cost: f64,
    /// Weights actually used by the objective (after per-layer normalization).
    pub weights: TileCostWeights,
    pub evaluations: u64,
}

/// Ladder state: one rung index per blocking dimension.
struct LadderSpace<'a> {
    layer: &'a TiledLayer,
    ladders: Vec<Vec<u64>>,
}

impl LadderSpace<'_> {
    fn tile(&self, rungs: &[usize]) -> TilingConfig {
        let dims: Vec<u64> = rungs
            .iter()
            .zip(&self.ladders)
            .map(|(&r, l)| l[r])
            .collect();
        self.layer.shape.tile(&dims)
    }
}

/// Initial feasible tile: start from the whole layer and step the currently
/// largest blocking factor down one rung until the tile fits.
pub fn initial_tile(layer: &TiledLayer, l1_eff: u64) -> Option<TilingConfig> {
    let space = LadderSpace {
        layer,
        ladders: layer.shape.extents().into_iter().map(tile_ladder).collect(),
    };
    initial_rungs(&space, l1_eff).map(|r| space.tile(&r))
}

fn initial_rungs(space: &LadderSpace<'_>, l1_eff: u64) -> Option<Vec<usize>> {
    let mut rungs: Vec<usize> = space.ladders.iter().map(|l| l.len() - 1).collect();
    let probe = TileCostWeights {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
    };
    loop {
        if tile_cost(&space.tile(&rungs), space.layer, l1_eff, &probe).is_finite() {
            return Some(rungs);
        }
        let shrink = (0..rungs.len())
            .filter(|&d| rungs[d] > 0)
            .max_by(|&a, &b| {
                let (va, vb) = (space.ladders[a][rungs[a]], space.ladders[b][rungs[b]]);
                // Larger value wins; on ties the lower dimension index wins.
                va.cmp(&vb).then(b.cmp(&a))
            })?;
        rungs[shrink] -= 1;
    }
}

/// Best feasible tiling found by simulated annealing.
pub fn anneal_tiling(
    layer: &TiledLayer,
    layer_id: &str,
    l1_eff: u64,
    sa: &AnnealingParams,
    weights: &TileCostWeights,
    normalize: bool,
) -> Result<TilingConfig, MapperError> {
    anneal_tiling_with_stats(layer, layer_id, l1_eff, sa, weights, normalize).map(|o| o.tile)
}

pub fn anneal_tiling_with_stats(
    layer: &TiledLayer,
    layer_id: &str,
    l1_eff: u64,
    sa: &AnnealingParams,
    weights: &TileCostWeights,
    normalize: bool,
) -> Result<AnnealOutcome, MapperError> {
    sa.validate()?;
    let space = LadderSpace {
        layer,
        ladders: layer.shape.extents().into_iter().map(tile_ladder).collect(),
    };
    let mut x = initial_rungs(&space, l1_eff).ok_or_else(|| MapperError::NoFeasibleTiling {
        layer: layer_id.to_string(),
        l1_eff,
    })?;

    let weights = if normalize {
        TileTerms::evaluate(&space.tile(&x), layer).normalize(weights)
    } else {
        *weights
    };
    let cost = |rungs: &[usize]| tile_cost(&space.tile(rungs), layer, l1_eff, &weights);

    let mut f = cost(&x);
    let mut best = x.clone();
    let mut best_cost = f;
    let mut evaluations = 1u64;

    let mut rng = ChaCha8Rng::seed_from_u64(sa.seed);
    let mut t = sa.t0_factor * f;
    let t_min = sa.t_min_factor * t;
    let delta = sa.delta as usize;
    let ndim = x.len();
    let mut y = x.clone();
    while t > t_min {
        for _ in 0..sa.l_iters {
            y.copy_from_slice(&x);
            let d = rng.gen_range(0..ndim);
            let top = space.ladders[d].len() - 1;
            y[d] = if rng.gen_bool(0.5) {
                (y[d] + delta).min(top)
            } else {
                y[d].saturating_sub(delta)
            };
            let g = cost(&y);
            evaluations += 1;
            let diff = g - f;
            if diff <= 0.0 || rng.gen::<f64>() < (-diff / t).exp() {
                x.copy_from_slice(&y);
                f = g;
                if f < best_cost {
                    best.copy_from_slice(&x);
                    best_cost = f;
                }
            }
        }
        t *= sa.alpha_t;
    }

    Ok(AnnealOutcome {
        tile: space.tile(&best),
        cost: best_cost,
        weights,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ConvAttrs;
    use crate::mapper::tiling::{tile_footprint, LayerShape};
    use crate::mapper::Stationary;

    fn layer(c_in: u64, c_out: u64, hw: u64, k: u64) -> TiledLayer {
        TiledLayer {
            shape: LayerShape::conv(ConvAttrs {
                k_h: k,
                k_w: k,
                stride: 1,
                pad: k / 2,
                c_in,
                c_out,
                h_in: hw,
                w_in: hw,
            })
            .unwrap(),
            element_bytes: 4,
            stationary: Stationary::WeightStationary,
        }
    }

    #[test]
    fn ladder_shapes() {
        assert_eq!(tile_ladder(1), vec![1]);
        assert_eq!(tile_ladder(8), vec![1, 2, 4, 8]);
        assert_eq!(tile_ladder(12), vec![1, 2, 4, 8, 12]);
    }

    #[test]
    fn whole_layer_fits() {
        let l = layer(4, 4, 4, 3);
        let out = anneal_tiling_with_stats(
            &l,
            "small",
            1 << 20,
            &AnnealingParams::default(),
            &TileCostWeights::default(),
            true,
        )
        .unwrap();
        assert_eq!(out.tile, l.shape.full_tile());
    }

    #[test]
    fn no_feasible_tiling_below_twelve_bytes() {
        let l = layer(8, 8, 8, 1);
        let err = anneal_tiling(
            &l,
            "tiny",
            11,
            &AnnealingParams::default(),
            &TileCostWeights::default(),
            true,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            MapperError::NoFeasibleTiling { l1_eff: 11, .. }
        ));
        assert!(anneal_tiling(
            &l,
            "tiny",
            12,
            &AnnealingParams::default(),
            &TileCostWeights::default(),
            true
        )
        .is_ok());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let l = layer(64, 128, 32, 3);
        let sa = AnnealingParams {
            seed: 7,
            ..Default::default()
        };
        let run =
            || anneal_tiling(&l, "x", 16 * 1024, &sa, &TileCostWeights::default(), true).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn result_is_feasible_and_no_worse_than_start() {
        let l = layer(96, 80, 28, 3);
        let l1_eff = 31 * 1024;
        let out = anneal_tiling_with_stats(
            &l,
            "x",
            l1_eff,
            &AnnealingParams::default(),
            &TileCostWeights::default(),
            true,
        )
        .unwrap();
        assert!(tile_footprint(&out.tile, &l.shape, 4, l1_eff).feasible);
        let start = initial_tile(&l, l1_eff).unwrap();
        assert!(out.cost <= tile_cost(&start, &l, l1_eff, &out.weights));
        // Normalized start state: each term equals its weight.
        let start_cost = tile_cost(&start, &l, l1_eff, &out.weights);
        assert!((start_cost - 2.1).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_params() {
        let sa = AnnealingParams {
            alpha_t: 1.0,
            ..Default::default()
        };
        assert!(sa.validate().is_err());
        let sa = AnnealingParams {
            t_min_factor: 1.5,
            ..Default::default()
        };
        assert!(sa.validate().is_err());
    }
}
