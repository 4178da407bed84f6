//! One TOML document holding every stage's defaults. Unknown keys are
//! rejected and values are range-checked when the file is loaded.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{ConvertParams, MAX_RESOLUTION, MIN_RESOLUTION};
use crate::filters::FilterConfig;
use crate::mesh::RemeshParams;
use crate::sampling::{SdfParams, DEFAULT_DIHEDRAL_DEG, DEFAULT_SALIENT_COUNT};
use crate::texbake::{BakeParams, DEFAULT_WEIGHT_EXPONENT};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config field {field}: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    /// Coarse resolution for hierarchical re-extraction after conversion; 0 disables it.
    pub hierarchical_coarse: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocessConfig {
    /// Run subdivide-and-smooth on converted meshes.
    pub subdivide: bool,
    pub remesh: RemeshParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub uniform: usize,
    pub salient: usize,
    pub dihedral_deg: f64,
    /// Also write the volume / near-surface / surface SDF sets.
    pub sdf: bool,
    pub sdf_params: SdfParams,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            uniform: 200_000,
            salient: DEFAULT_SALIENT_COUNT,
            dihedral_deg: DEFAULT_DIHEDRAL_DEG,
            sdf: false,
            sdf_params: SdfParams::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub resolution: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { resolution: 768 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BakeConfig {
    pub atlas_resolution: usize,
    pub gutter: usize,
    pub upsample_to: usize,
    pub weight_exponent: f64,
}

impl Default for BakeConfig {
    fn default() -> Self {
        BakeConfig { atlas_resolution: 2048, gutter: 4, upsample_to: 2048, weight_exponent: DEFAULT_WEIGHT_EXPONENT }
    }
}

impl BakeConfig {
    pub fn params(&self) -> BakeParams {
        BakeParams { upsample_to: self.upsample_to, weight_exponent: self.weight_exponent }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Worker threads; 0 uses every core. `S13D_THREADS` caps it further.
    pub workers: usize,
    pub seed: u64,
    pub filters: FilterConfig,
    pub convert: ConvertParams,
    pub decode: DecodeConfig,
    pub postprocess: PostprocessConfig,
    pub sampling: SamplingConfig,
    pub render: RenderConfig,
    pub bake: BakeConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            workers: 0,
            seed: 0,
            filters: FilterConfig::default(),
            convert: ConvertParams::default(),
            decode: DecodeConfig::default(),
            postprocess: PostprocessConfig::default(),
            sampling: SamplingConfig::default(),
            render: RenderConfig::default(),
            bake: BakeConfig::default(),
        }
    }
}

fn check(ok: bool, field: &'static str, message: impl FnOnce() -> String) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Invalid { field, message: message() })
    }
}

fn unit_interval(v: f64, field: &'static str) -> Result<(), ConfigError> {
    check((0.0..=1.0).contains(&v), field, || format!("{v} is outside [0, 1]"))
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        let cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// Checks every value against the preconditions of the stage that uses it.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let f = &self.filters;
        check((64..=4096).contains(&f.render_resolution), "filters.render_resolution", || {
            format!("{} is outside [64, 4096]", f.render_resolution)
        })?;
        unit_interval(f.dark_value, "filters.dark_value")?;
        unit_interval(f.bright_value, "filters.bright_value")?;
        check(f.dark_value < f.bright_value, "filters.dark_value", || "must be below bright_value".into())?;
        check(f.min_entropy_bits >= 0.0, "filters.min_entropy_bits", || "must be non-negative".into())?;
        unit_interval(f.match_tolerance, "filters.match_tolerance")?;
        unit_interval(f.single_surface_ratio, "filters.single_surface_ratio")?;
        unit_interval(f.min_coverage, "filters.min_coverage")?;
        unit_interval(f.obtuse_fraction, "filters.obtuse_fraction")?;
        check(f.bottom_percent <= 100, "filters.bottom_percent", || format!("{} exceeds 100", f.bottom_percent))?;

        let c = &self.convert;
        check((MIN_RESOLUTION..=MAX_RESOLUTION).contains(&c.resolution), "convert.resolution", || {
            format!("{} is outside [{MIN_RESOLUTION}, {MAX_RESOLUTION}]", c.resolution)
        })?;
        check(c.wn_threshold > 0.0 && c.wn_threshold < 1.0, "convert.wn_threshold", || {
            format!("{} is outside (0, 1)", c.wn_threshold)
        })?;
        check(c.distance_cap_voxels >= 1.0, "convert.distance_cap_voxels", || "must be at least 1".into())?;

        let h = self.decode.hierarchical_coarse;
        if h != 0 {
            let ratio = c.resolution / h.max(1);
            check(
                h >= 4 && c.resolution % h == 0 && ratio.is_power_of_two() && ratio > 1,
                "decode.hierarchical_coarse",
                || format!("{h} must divide convert.resolution {} by a power of two", c.resolution),
            )?;
        }

        let r = &self.postprocess.remesh;
        check(r.smooth_lambda > 0.0 && r.smooth_lambda <= 1.0, "postprocess.remesh.smooth_lambda", || {
            format!("{} is outside (0, 1]", r.smooth_lambda)
        })?;
        check(r.subdivision_rounds <= 4, "postprocess.remesh.subdivision_rounds", || "at most 4 rounds".into())?;

        let s = &self.sampling;
        check((0.0..=180.0).contains(&s.dihedral_deg), "sampling.dihedral_deg", || {
            format!("{} is outside [0, 180]", s.dihedral_deg)
        })?;
        check(s.sdf_params.band > 0.0 && s.sdf_params.band < 1.0, "sampling.sdf_params.band", || {
            format!("{} is outside (0, 1)", s.sdf_params.band)
        })?;

        check((64..=4096).contains(&self.render.resolution), "render.resolution", || {
            format!("{} is outside [64, 4096]", self.render.resolution)
        })?;

        let b = &self.bake;
        check((16..=8192).contains(&b.atlas_resolution), "bake.atlas_resolution", || {
            format!("{} is outside [16, 8192]", b.atlas_resolution)
        })?;
        check(b.gutter * 4 < b.atlas_resolution, "bake.gutter", || "too wide for the atlas".into())?;
        check((8..=8192).contains(&b.upsample_to), "bake.upsample_to", || format!("{} is outside [8, 8192]", b.upsample_to))?;
        check(b.weight_exponent > 0.0, "bake.weight_exponent", || "must be positive".into())?;
        Ok(())
    }
}
