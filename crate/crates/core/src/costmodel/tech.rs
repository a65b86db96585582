use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::OpClass;

use super::CostError;

/// Bundled representative parameters (`data/tech_default.toml`).
pub const DEFAULT_TECH_TOML: &str = include_str!("../../data/tech_default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelParams {
    pub read_pj_per_byte: f64,
    pub write_pj_per_byte: f64,
    pub bandwidth_bytes_per_s: f64,
    pub leakage_pw_per_byte: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpEnergy {
    pub conv: f64,
    pub gemm: f64,
    pub elementwise: f64,
    pub activation: f64,
    pub transform: f64,
    pub reduce: f64,
    pub softmax: f64,
    pub reshape: f64,
    pub data_movement: f64,
}

impl OpEnergy {
    pub fn get(&self, class: OpClass) -> f64 {
        match class {
            OpClass::Conv => self.conv,
            OpClass::Gemm => self.gemm,
            OpClass::Elementwise => self.elementwise,
            OpClass::Activation => self.activation,
            OpClass::Transform => self.transform,
            OpClass::Reduce => self.reduce,
            OpClass::Softmax => self.softmax,
            OpClass::Reshape => self.reshape,
            OpClass::DataMovement => self.data_movement,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeParams {
    pub lanes: u32,
    pub clock_hz: f64,
    pub ops_per_lane_per_cycle: u32,
    pub pj_per_op: OpEnergy,
}

impl ComputeParams {
    pub fn peak_ops_per_s(&self) -> f64 {
        f64::from(self.lanes) * self.clock_hz * f64::from(self.ops_per_lane_per_cycle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechParams {
    pub dram_capacity_bytes: u64,
    pub l1: LevelParams,
    pub llc: LevelParams,
    pub dram: LevelParams,
    pub compute: ComputeParams,
}

impl Default for TechParams {
    fn default() -> Self {
        TechParams::from_toml(DEFAULT_TECH_TOML).expect("bundled tech parameters are valid")
    }
}

impl TechParams {
    pub fn from_toml(text: &str) -> Result<Self, CostError> {
        let tech: TechParams =
            toml::from_str(text).map_err(|e| CostError::TechFormat(e.to_string()))?;
        tech.validate()?;
        Ok(tech)
    }

    pub fn load(path: &Path) -> Result<Self, CostError> {
        let text = std::fs::read_to_string(path).map_err(|e| CostError::TechIo {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CostError> {
        let bad = |m: String| Err(CostError::TechInvalid(m));
        for (name, level) in [("l1", &self.l1), ("llc", &self.llc), ("dram", &self.dram)] {
            let coeffs = [
                level.read_pj_per_byte,
                level.write_pj_per_byte,
                level.leakage_pw_per_byte,
            ];
            if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) {
                return bad(format!(
                    "{name}: energy and leakage coefficients must be >= 0"
                ));
            }
            if !(level.bandwidth_bytes_per_s.is_finite() && level.bandwidth_bytes_per_s > 0.0) {
                return bad(format!("{name}: bandwidth must be > 0"));
            }
        }
        if OpClass::ALL.iter().any(|&c| {
            !self.compute.pj_per_op.get(c).is_finite() || self.compute.pj_per_op.get(c) < 0.0
        }) {
            return bad("compute.pj_per_op entries must be >= 0".into());
        }
        if self.compute.lanes == 0
            || self.compute.ops_per_lane_per_cycle == 0
            || !(self.compute.clock_hz > 0.0)
        {
            return bad("compute throughput parameters must be > 0".into());
        }
        Ok(())
    }
}
