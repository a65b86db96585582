//! Capacity-response regimes read off the LLC axis of a sweep.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{SweepGrid, SweepPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeThresholds {
    /// Relative tolerance to the row minimum that counts as saturated.
    pub saturation_tolerance: f64,
    /// Relative DRAM-energy drop between adjacent LLC points that counts as capacity-gated.
    pub capacity_drop: f64,
    /// DRAM share of total energy at the largest capacities that counts as persistent.
    pub dram_fraction: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds {
            saturation_tolerance: 0.05,
            capacity_drop: 0.4,
            dram_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeLabel {
    EarlySaturating,
    CapacityGated,
    PersistentDram,
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegimeLabel::EarlySaturating => "EarlySaturating",
            RegimeLabel::CapacityGated => "CapacityGated",
            RegimeLabel::PersistentDram => "PersistentDram",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeEvidence {
    pub dram_fraction_at_max: f64,
    pub max_adjacent_drop: f64,
    /// LLC capacities (from, to) of the largest drop, if any drop occurred.
    pub drop_step: Option<(u64, u64)>,
    pub saturation_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Regime {
    pub l1: u64,
    pub label: RegimeLabel,
    pub evidence: RegimeEvidence,
}

fn cell(points: &[SweepPoint], l1: u64, llc: u64) -> &SweepPoint {
    points
        .iter()
        .find(|p| p.l1 == l1 && p.llc == llc)
        .expect("points cover the full grid")
}

/// Regime along the LLC axis at one L1 capacity. The DRAM fraction is always
/// read at the largest (L1, LLC) cell.
pub fn classify_row(
    points: &[SweepPoint],
    grid: &SweepGrid,
    l1: u64,
    th: &RegimeThresholds,
) -> Regime {
    let row: Vec<&SweepPoint> = grid
        .llc_points
        .iter()
        .map(|&c| cell(points, l1, c))
        .collect();
    let min_total = row
        .iter()
        .map(|p| p.energy.total)
        .fold(f64::INFINITY, f64::min);
    let saturation_index = row
        .iter()
        .position(|p| p.energy.total <= min_total * (1.0 + th.saturation_tolerance))
        .unwrap_or(0);

    let mut max_adjacent_drop = 0.0;
    let mut drop_step = None;
    for w in row.windows(2) {
        let (a, b) = (w[0].energy.e_dram, w[1].energy.e_dram);
        let drop = if a > 0.0 { (a - b) / a } else { 0.0 };
        if drop > max_adjacent_drop {
            max_adjacent_drop = drop;
            drop_step = Some((w[0].llc, w[1].llc));
        }
    }

    let max = cell(
        points,
        *grid.l1_points.last().expect("non-empty grid"),
        *grid.llc_points.last().expect("non-empty grid"),
    );
    let dram_fraction_at_max = if max.energy.total > 0.0 {
        max.energy.e_dram / max.energy.total
    } else {
        0.0
    };

    let label = if dram_fraction_at_max >= th.dram_fraction {
        RegimeLabel::PersistentDram
    } else if max_adjacent_drop >= th.capacity_drop {
        RegimeLabel::CapacityGated
    } else {
        RegimeLabel::EarlySaturating
    };
    Regime {
        l1,
        label,
        evidence: RegimeEvidence {
            dram_fraction_at_max,
            max_adjacent_drop,
            drop_step,
            saturation_index,
        },
    }
}

/// Regime at the baseline L1 capacity.
pub fn classify_regime(points: &[SweepPoint], grid: &SweepGrid, th: &RegimeThresholds) -> Regime {
    classify_row(points, grid, grid.baseline.0, th)
}
