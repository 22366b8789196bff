//! Declarative run configuration: one file describes grid, depth axis, scene,
//! noise, solver settings, and outputs. Unknown keys are rejected so typos in
//! parameter names fail loudly instead of silently running defaults.

use serde::{Deserialize, Serialize};

use crate::field::{DepthAxis, OpticalGrid};
use crate::regularizer::{DiffusionKind, DiffusionParams};
use crate::simulate::{NoiseSpec, Particle, ParticleModel, Scene};
use crate::solver::{Normalization, Projection, SolverConfig};
use crate::{HoloError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub depth: DepthConfig,
    pub scene: SceneConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub pixel_pitch_um: f64,
    pub wavelength_um: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthConfig {
    pub z0_um: f64,
    pub dz_um: f64,
    pub nz: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// Particles as [cx_um, cy_um, z_um, diameter_um].
    pub particles: Vec<[f64; 4]>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_rim_gain")]
    pub rim_gain: f64,
}

fn default_model() -> String {
    "ring".into()
}

fn default_rim_gain() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub gaussian_fraction: f64,
    pub photons_per_pixel: f64,
    pub seed: u64,
    pub enabled: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { gaussian_fraction: 0.01, photons_per_pixel: 5000.0, seed: 0, enabled: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tau: f64,
    pub k0: f64,
    pub epsilon: f64,
    pub stop_threshold: f64,
    pub max_iters: usize,
    pub step_init: f64,
    pub step_decay: f64,
    /// "hwnld" or "tv"
    pub kind: String,
    /// "none", "p99", or "grad_max"
    pub normalize: String,
    /// "complex", "real", or "nonpos"
    pub projection: String,
    /// Diffusion time per accepted iteration; 0 couples it to the data step.
    pub diffusion_time: f64,
    /// Explicit sub-step size for decoupled diffusion.
    pub diffusion_substep: f64,
    /// Per-iteration soft threshold (normalized scale); 0 disables.
    pub shrink: f64,
    /// Reweighting fraction δ for the shrink; 0 = uniform threshold.
    pub shrink_reweight: f64,
    /// Scale of the z-partial inside the regularizer gradient. Unset uses
    /// pixel_pitch / depth spacing.
    pub z_scale: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            tau: 1.0,
            k0: 1.0 / 3.0,
            epsilon: 1e-8,
            stop_threshold: 1e-5,
            max_iters: 2000,
            step_init: 1.0,
            step_decay: 0.5,
            kind: "hwnld".into(),
            normalize: "p99".into(),
            projection: "complex".into(),
            diffusion_time: 0.0,
            diffusion_substep: 0.005,
            shrink: 0.0,
            shrink_reweight: 0.0,
            z_scale: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    pub directory: String,
    pub emit_png: bool,
    pub emit_slices: bool,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self { directory: "out".into(), emit_png: false, emit_slices: false }
    }
}

impl RunConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HoloError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<OpticalGrid> {
        OpticalGrid::new(
            self.grid.nx,
            self.grid.ny,
            self.grid.pixel_pitch_um,
            self.grid.wavelength_um,
        )
    }

    pub fn depth(&self) -> Result<DepthAxis> {
        DepthAxis::new(self.depth.z0_um, self.depth.dz_um, self.depth.nz)
    }

    pub fn scene(&self) -> Result<Scene> {
        let grid = self.grid()?;
        let particles = self
            .scene
            .particles
            .iter()
            .map(|&[cx, cy, z, d]| Particle::new(cx, cy, z, d))
            .collect();
        Ok(Scene { grid, particles })
    }

    pub fn particle_model(&self) -> Result<ParticleModel> {
        match self.scene.model.as_str() {
            "disk" => Ok(ParticleModel::Disk),
            "ring" => Ok(ParticleModel::Ring),
            other => Err(HoloError::Config(format!(
                "scene.model must be \"disk\" or \"ring\", got \"{other}\""
            ))),
        }
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            gaussian_fraction: self.noise.gaussian_fraction,
            photons_per_pixel: self.noise.photons_per_pixel,
            rng_seed: self.noise.seed,
            enabled: self.noise.enabled,
        }
    }

    pub fn diffusion_params(&self) -> Result<DiffusionParams> {
        let kind = match self.solver.kind.as_str() {
            "hwnld" => DiffusionKind::Hwnld,
            "tv" => DiffusionKind::Tv,
            other => {
                return Err(HoloError::Config(format!(
                    "solver.kind must be \"hwnld\" or \"tv\", got \"{other}\""
                )))
            }
        };
        Ok(DiffusionParams {
            k0: self.solver.k0,
            epsilon: self.solver.epsilon,
            z_scale: self
                .solver
                .z_scale
                .unwrap_or(self.grid.pixel_pitch_um / self.depth.dz_um),
            kind,
        })
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let cfg = SolverConfig {
            tau: self.solver.tau,
            diffusion: self.diffusion_params()?,
            stop_threshold: self.solver.stop_threshold,
            max_iters: self.solver.max_iters,
            step_init: self.solver.step_init,
            step_decay: self.solver.step_decay,
            projection: match self.solver.projection.as_str() {
                "complex" => Projection::Complex,
                "real" => Projection::Real,
                "nonpos" => Projection::NonPositive,
                other => {
                    return Err(HoloError::Config(format!(
                        "unknown projection {other:?}; expected complex, real, or nonpos"
                    )))
                }
            },
            diffusion_time: self.solver.diffusion_time,
            diffusion_substep: self.solver.diffusion_substep,
            shrink: self.solver.shrink,
            shrink_reweight: self.solver.shrink_reweight,
            normalization: match self.solver.normalize.as_str() {
                "none" => Normalization::None,
                "p99" => Normalization::Percentile99,
                "grad_max" => Normalization::GradientMax,
                other => {
                    return Err(HoloError::Config(format!(
                        "unknown normalization {other:?}; expected none, p99, or grad_max"
                    )))
                }
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
