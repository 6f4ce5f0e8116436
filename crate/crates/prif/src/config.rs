//! Run configuration shared by every subcommand, with desk and paper presets.

use std::path::Path;

use prif_core::geometry::{DEFAULT_FOV_DEG, DEFAULT_RIG_RADIUS, DEFAULT_TARGET_RADIUS};
use prif_core::model::{
    AutoDecodeConfig, ExtractOptions, PrifConfig, TrainConfig, DEFAULT_LATENT_DIM,
};
use prif_core::pose::PoseOptimConfig;
use prif_core::rays::EncodingMode;
use prif_core::sdf::SphereTraceConfig;
use serde::{Deserialize, Serialize};

use crate::error::{IoError, IoResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Depth 6, width 128, 10 cameras at 100×100, 30 epochs.
    #[default]
    Desk,
    /// Depth 10, width 512, 50 cameras at 200×200, 100 epochs.
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigConfig {
    pub cameras: usize,
    pub resolution: u32,
    /// Camera distance from the origin.
    pub radius: f64,
    pub fov_deg: f64,
    /// Radius the mesh is normalized to.
    pub target_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: EncodingMode,
    pub depth: usize,
    pub width: usize,
    /// Latent size used when training on more than one shape.
    pub latent_dim: usize,
    pub separate_mask: bool,
    pub color: bool,
}

impl ModelConfig {
    pub fn prif_config(&self, num_shapes: usize) -> PrifConfig {
        PrifConfig {
            mode: self.mode,
            depth: self.depth,
            width: self.width,
            latent_dim: if num_shapes > 1 { self.latent_dim } else { 0 },
            num_shapes,
            separate_mask: self.separate_mask,
            color: self.color,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdfConfig {
    pub samples: usize,
    pub depth: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractConfig {
    pub mask_threshold: f64,
    /// Gradient threshold; `null` keeps every foreground ray.
    pub delta: Option<f64>,
}

impl ExtractConfig {
    pub fn options(&self) -> ExtractOptions {
        ExtractOptions {
            mask_threshold: self.mask_threshold,
            delta: self.delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoDecodeSettings {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSettings {
    pub steps: usize,
    pub lr: f64,
    pub resolution: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Points per side of the Chamfer protocol.
    pub n_eval: usize,
}

/// Every tunable of the pipeline. Command-line flags override fields after
/// the preset and an optional config file have been applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub threads: Option<usize>,
    pub deterministic: bool,
    pub rig: RigConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sdf: SdfConfig,
    pub sphere_trace: SphereTraceConfig,
    pub extract: ExtractConfig,
    pub auto_decode: AutoDecodeSettings,
    pub pose: PoseSettings,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (cameras, resolution, depth, width, epochs, samples) = match preset {
            Preset::Desk => (10, 100, 6, 128, 30, 100_000),
            Preset::Paper => (50, 200, 10, 512, 100, 500_000),
        };
        let ad = AutoDecodeConfig::default();
        let pose = PoseOptimConfig::default();
        let extract = ExtractOptions::default();
        Self {
            preset,
            seed: 0,
            threads: None,
            deterministic: false,
            rig: RigConfig {
                cameras,
                resolution,
                radius: DEFAULT_RIG_RADIUS,
                fov_deg: DEFAULT_FOV_DEG,
                target_radius: DEFAULT_TARGET_RADIUS,
            },
            model: ModelConfig {
                mode: EncodingMode::PerpFoot,
                depth,
                width,
                latent_dim: DEFAULT_LATENT_DIM,
                separate_mask: false,
                color: false,
            },
            train: TrainConfig {
                epochs,
                ..TrainConfig::default()
            },
            sdf: SdfConfig {
                samples,
                depth,
                width,
            },
            sphere_trace: SphereTraceConfig::default(),
            extract: ExtractConfig {
                mask_threshold: extract.mask_threshold,
                delta: extract.delta,
            },
            auto_decode: AutoDecodeSettings {
                steps: ad.steps,
                lr: ad.lr,
                batch_size: ad.batch_size,
            },
            pose: PoseSettings {
                steps: pose.steps,
                lr: pose.lr,
                resolution: 64,
            },
            eval: EvalConfig { n_eval: 30_000 },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train
        }
    }

    pub fn auto_decode_config(&self) -> AutoDecodeConfig {
        AutoDecodeConfig {
            steps: self.auto_decode.steps,
            lr: self.auto_decode.lr,
            batch_size: self.auto_decode.batch_size,
            seed: self.seed,
        }
    }

    pub fn pose_config(&self) -> PoseOptimConfig {
        PoseOptimConfig {
            steps: self.pose.steps,
            lr: self.pose.lr,
        }
    }

    pub fn fov_y(&self) -> f64 {
        self.rig.fov_deg.to_radians()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> IoResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::from_json(&text).map_err(|e| IoError::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> IoResult<()> {
        std::fs::write(path, self.to_json()).map_err(|e| IoError::io(path, e))
    }
}
