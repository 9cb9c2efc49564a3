//! Experiment configuration.
//!
//! TOML with one table per sub-configuration; dotted keys such as
//! `array.L = 8` work at top level. Any key left out keeps its default, and
//! the single-letter names `D`, `L`, `K`, `B`, `Z` are accepted for the
//! matching long names.

use std::path::{Path, PathBuf};

use dmabeam::array::ArrayConfig;
use dmabeam::beampattern::AngleGrid;
use dmabeam::channel::ChannelConfig;
use dmabeam::codebook::layer_count;
use dmabeam::efficiency::{LinkConfig, PowerModel};
use dmabeam::mapping::{MappingMethod, RotationPolicy, DEFAULT_ROTATIONS};
use serde::{Deserialize, Serialize};
use toml::Value;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConfig {
    /// Sector half-width, degrees.
    pub range_deg: f64,
    pub step_deg: f64,
    /// Layers to report; every layer when empty.
    pub layers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub p_in_dbm: Vec<f64>,
    /// Codebook layer used for selection; the last layer when absent.
    pub layer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random draw derives from it.
    pub seed: u64,
    pub users: usize,
    pub output_dir: PathBuf,
    pub mapping: MappingMethod,
    pub rotation: RotationPolicy,
    pub array: ArrayConfig,
    /// Comparison phased array.
    pub phased: ArrayConfig,
    pub grid: AngleGrid,
    pub coverage: CoverageConfig,
    pub channel: ChannelConfig,
    pub link: LinkConfig,
    pub power: PowerModel,
    pub sweep: SweepConfig,
}

/// `start, start+step, …` up to and including `stop`.
pub fn linspace_step(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| start + i as f64 * step).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            users: 200,
            output_dir: PathBuf::from("out"),
            mapping: MappingMethod::Euclidean,
            rotation: RotationPolicy::brute_force(DEFAULT_ROTATIONS),
            array: ArrayConfig::reference_dma(),
            phased: ArrayConfig::reference_phased(),
            grid: AngleGrid::default(),
            coverage: CoverageConfig {
                range_deg: 60.0,
                step_deg: 0.5,
                layers: Vec::new(),
            },
            channel: ChannelConfig::default(),
            link: LinkConfig::default(),
            power: PowerModel::default(),
            sweep: SweepConfig {
                p_in_dbm: linspace_step(-10.0, 40.0, 2.5),
                layer: None,
            },
        }
    }
}

const ALIASES: &[(&str, &str, &str)] = &[
    ("array", "D", "waveguides"),
    ("array", "L", "elements_per_guide"),
    ("phased", "D", "waveguides"),
    ("phased", "L", "elements_per_guide"),
    ("channel", "K", "subcarriers"),
    ("channel", "B", "bandwidth_hz"),
    ("link", "B", "bandwidth_hz"),
    ("rotation", "Z", "rotations"),
];

fn normalize_aliases(v: &mut Value) -> CliResult<()> {
    let Some(top) = v.as_table_mut() else {
        return Ok(());
    };
    for (section, short, long) in ALIASES {
        if let Some(Value::Table(t)) = top.get_mut(*section) {
            if let Some(x) = t.remove(*short) {
                if t.contains_key(*long) {
                    return Err(CliError::Config(format!("{section}.{short} and {section}.{long} both set")));
                }
                t.insert((*long).to_string(), x);
            }
        }
    }
    Ok(())
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        let mut user: Value = text
            .parse::<toml::Table>()
            .map(Value::Table)
            .map_err(|e| CliError::Config(e.to_string()))?;
        normalize_aliases(&mut user)?;
        let mut base = Value::try_from(Self::default()).map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut base, user);
        let cfg: Self = base.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        let cfg_err = |e: dmabeam::Error| CliError::Config(e.to_string());
        self.array.validate().map_err(cfg_err)?;
        self.phased.validate().map_err(cfg_err)?;
        self.rotation.validate().map_err(cfg_err)?;
        self.grid.validate().map_err(cfg_err)?;
        self.channel.validate().map_err(cfg_err)?;
        self.link.validate().map_err(cfg_err)?;
        self.power.validate().map_err(cfg_err)?;
        if self.array.kind != dmabeam::array::ArrayKind::Dma {
            return Err(CliError::Config("array.kind must be dma".into()));
        }
        if self.phased.kind != dmabeam::array::ArrayKind::Phased {
            return Err(CliError::Config("phased.kind must be phased".into()));
        }
        let layers = layer_count(self.array.elements_per_guide).map_err(cfg_err)?;
        for &l in &self.coverage.layers {
            if l == 0 || l > layers {
                return Err(CliError::Config(format!("coverage layer {l} outside 1..={layers}")));
            }
        }
        if let Some(l) = self.sweep.layer {
            if l == 0 || l > layers {
                return Err(CliError::Config(format!("sweep layer {l} outside 1..={layers}")));
            }
        }
        if !(self.coverage.range_deg > 0.0 && self.coverage.range_deg <= 90.0 && self.coverage.step_deg > 0.0) {
            return Err(CliError::Config("coverage needs range in (0, 90] and a positive step".into()));
        }
        if self.sweep.p_in_dbm.is_empty() || self.sweep.p_in_dbm.iter().any(|p| !p.is_finite()) {
            return Err(CliError::Config("sweep.p_in_dbm must be a nonempty list of finite values".into()));
        }
        if self.users == 0 {
            return Err(CliError::Config("users must be at least 1".into()));
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        layer_count(self.array.elements_per_guide).expect("validated")
    }

    pub fn sweep_layer(&self) -> usize {
        self.sweep.layer.unwrap_or_else(|| self.layers())
    }

    pub fn coverage_layers(&self) -> Vec<usize> {
        if self.coverage.layers.is_empty() {
            (1..=self.layers()).collect()
        } else {
            self.coverage.layers.clone()
        }
    }

    /// Channel settings with the master seed applied.
    pub fn seeded_channel(&self) -> ChannelConfig {
        ChannelConfig {
            seed: self.seed,
            ..self.channel.clone()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved configuration, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        crate::manifest::sha256_hex(c.to_toml().as_bytes())
    }
}
