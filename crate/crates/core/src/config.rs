//! Engine configuration file (TOML).
//!
//! ```toml
//! seed = 0
//! out_dir = "out"
//! tech = "tech.toml"          # optional; bundled defaults when absent
//! emit_trace = false
//! emit_roofline_total = false
//!
//! [grid]
//! l1_points = ["16KB", "32KB", "64KB", "128KB", "256KB"]
//! llc_points = ["16MB", "32MB", "64MB"]
//! baseline = ["32KB", "16MB"]
//!
//! [mapper]       # rho, l1_bookkeeping_bytes, fusion_enabled, normalize_cost_terms
//! [annealing]    # t0_factor, t_min_factor, alpha_t, l_iters, delta
//! [tile_cost]    # alpha, beta, gamma
//! [regime]       # saturation_tolerance, capacity_drop, dram_fraction
//! ```
//!
//! Every table and key is optional; unknown keys are rejected. A relative
//! `tech` path is resolved against the config file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::costmodel::{CostError, TechParams};
use crate::mapper::{AnnealingParams, MapperPolicy, TileCostWeights};
use crate::sweep::{ModelSettings, RegimeThresholds, SweepGrid};
use crate::units::Capacity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {message}")]
    Io { path: String, message: String },
    #[error("config `{path}`: {message}")]
    Format { path: String, message: String },
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Tech(#[from] CostError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    l1_points: Option<Vec<Capacity>>,
    llc_points: Option<Vec<Capacity>>,
    baseline: Option<(Capacity, Capacity)>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    tech: Option<PathBuf>,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    workers: Option<usize>,
    emit_trace: Option<bool>,
    emit_roofline_total: Option<bool>,
    grid: Option<GridSection>,
    #[serde(default)]
    mapper: MapperPolicy,
    #[serde(default)]
    annealing: AnnealingParams,
    #[serde(default)]
    tile_cost: TileCostWeights,
    #[serde(default)]
    regime: RegimeThresholds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Resolved tech file, or `None` for the bundled parameters.
    pub tech_path: Option<PathBuf>,
    pub settings: ModelSettings,
    pub grid: SweepGrid,
    pub regime: RegimeThresholds,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// 0 selects the available parallelism.
    pub workers: usize,
    pub emit_trace: bool,
    pub emit_roofline_total: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig::from_toml("", Path::new(".")).expect("empty config is valid")
    }
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<EngineConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        EngineConfig::from_toml(&text, base).map_err(|e| match e {
            ConfigError::Format { message, .. } => ConfigError::Format {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    /// Parses config text; relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<EngineConfig, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Format {
            path: "<text>".into(),
            message: e.to_string(),
        })?;
        let tech_path = raw
            .tech
            .map(|p| if p.is_relative() { base_dir.join(p) } else { p });
        let tech = match &tech_path {
            Some(p) => TechParams::load(p)?,
            None => TechParams::default(),
        };

        let mut grid = SweepGrid::default();
        if let Some(g) = raw.grid {
            let bytes = |v: Vec<Capacity>| v.into_iter().map(|c| c.0).collect();
            if let Some(v) = g.l1_points {
                grid.l1_points = bytes(v);
            }
            if let Some(v) = g.llc_points {
                grid.llc_points = bytes(v);
            }
            if let Some((a, b)) = g.baseline {
                grid.baseline = (a.0, b.0);
            }
        }
        grid.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;

        raw.mapper
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        raw.annealing
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        raw.tile_cost
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("tile_cost: {e}")))?;
        let r = &raw.regime;
        if [r.saturation_tolerance, r.capacity_drop, r.dram_fraction]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(ConfigError::Invalid(
                "regime thresholds must be >= 0".into(),
            ));
        }

        let seed = raw.seed.unwrap_or(0);
        Ok(EngineConfig {
            tech_path,
            settings: ModelSettings {
                policy: raw.mapper,
                annealing: AnnealingParams {
                    seed,
                    ..raw.annealing
                },
                weights: raw.tile_cost,
                tech,
            },
            grid,
            regime: raw.regime,
            seed,
            out_dir: raw.out_dir.unwrap_or_else(|| PathBuf::from("out")),
            workers: raw.workers.unwrap_or(0),
            emit_trace: raw.emit_trace.unwrap_or(false),
            emit_roofline_total: raw.emit_roofline_total.unwrap_or(false),
        })
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.settings.annealing.seed = seed;
    }
}
