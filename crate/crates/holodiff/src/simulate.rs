//! Particle scenes and synthetic in-line holograms.
//!
//! A particle at distance z perturbs the unit plane wave at its own object
//! plane; the sensor records |1 + H|² where H is the multi-slice forward
//! propagation of all perturbations. The squared term and the conjugate
//! (twin-image) term are kept, so the simulated data is not the solver's
//! linearized model. Shot noise (Poisson) and read noise (Gaussian) follow.

use ndarray::Array2;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::field::{ComplexField, DepthAxis, OpticalGrid, Volume};
use crate::propagation::Propagator;
use crate::{HoloError, Result};

/// Spherical scattering particle, positions and diameter in μm.
/// `refractive_index` is carried as metadata only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub cx: f64,
    pub cy: f64,
    pub z: f64,
    pub diameter: f64,
    pub refractive_index: f64,
}

impl Particle {
    pub fn new(cx: f64, cy: f64, z: f64, diameter: f64) -> Self {
        Self { cx, cy, z, diameter, refractive_index: 1.58 }
    }
}

/// How a particle is rasterized at its object plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParticleModel {
    /// Opaque disk: -1 inside the radius, anti-aliased edge.
    Disk,
    /// Opaque disk plus a bright one-pixel rim just outside the edge,
    /// mimicking the edge-bright appearance of a scattering particle.
    Ring,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub grid: OpticalGrid,
    pub particles: Vec<Particle>,
}

/// Noise model: photon (Poisson) noise first, then additive Gaussian read
/// noise with σ anchored to the mean hologram value.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub gaussian_fraction: f64,
    pub photons_per_pixel: f64,
    pub rng_seed: u64,
    pub enabled: bool,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { gaussian_fraction: 0.01, photons_per_pixel: 5000.0, rng_seed: 0, enabled: true }
    }
}

/// Recorded intensity pattern, non-negative.
#[derive(Debug, Clone)]
pub struct Hologram {
    pub grid: OpticalGrid,
    pub values: Array2<f64>,
}

/// Fraction of the pixel cell (i, j) covered by the disk, by 16x16
/// subsampling. Pixel (i, j) spans [i, i+1) x [j, j+1) in pitch units.
fn coverage(i: usize, j: usize, cx_px: f64, cy_px: f64, r_px: f64) -> f64 {
    const S: usize = 16;
    let r2 = r_px * r_px;
    // Fully inside / outside short-circuit on the cell corners.
    let mut hit = 0u32;
    for (dx, dy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
        let ddx = i as f64 + dx - cx_px;
        let ddy = j as f64 + dy - cy_px;
        if ddx * ddx + ddy * ddy <= r2 {
            hit += 1;
        }
    }
    let center_in = {
        let ddx = i as f64 + 0.5 - cx_px;
        let ddy = j as f64 + 0.5 - cy_px;
        ddx * ddx + ddy * ddy <= r2
    };
    if hit == 4 && center_in {
        return 1.0;
    }
    let mut count = 0usize;
    for sy in 0..S {
        let y = j as f64 + (sy as f64 + 0.5) / S as f64 - cy_px;
        for sx in 0..S {
            let x = i as f64 + (sx as f64 + 0.5) / S as f64 - cx_px;
            if x * x + y * y <= r2 {
                count += 1;
            }
        }
    }
    count as f64 / (S * S) as f64
}

/// Rasterize the object-plane field perturbation of one particle.
///
/// Disk: -coverage inside the radius so the total field 1 + mask is an
/// opaque absorber. Ring: additionally a +rim_gain·coverage annulus of one
/// pixel width just outside the edge.
pub fn particle_mask(
    p: &Particle,
    grid: OpticalGrid,
    model: ParticleModel,
    rim_gain: f64,
) -> Result<ComplexField> {
    let pitch = grid.pixel_pitch;
    let r_px = 0.5 * p.diameter / pitch;
    let (cx_px, cy_px) = (p.cx / pitch, p.cy / pitch);
    let outer = if model == ParticleModel::Ring { r_px + 1.0 } else { r_px };
    let (w, h) = (grid.nx as f64, grid.ny as f64);
    if cx_px - outer < 0.0 || cx_px + outer > w || cy_px - outer < 0.0 || cy_px + outer > h {
        return Err(HoloError::InvalidParameter(format!(
            "particle at ({}, {}) μm with diameter {} μm extends beyond the grid",
            p.cx, p.cy, p.diameter
        )));
    }
    if !(p.diameter > 0.0) || !(p.z > 0.0) {
        return Err(HoloError::InvalidParameter(format!(
            "particle needs positive diameter and z, got d {} z {}",
            p.diameter, p.z
        )));
    }
    let mut out = ComplexField::zeros(grid);
    let lo_x = ((cx_px - outer - 1.0).floor().max(0.0)) as usize;
    let hi_x = ((cx_px + outer + 1.0).ceil().min(w)) as usize;
    let lo_y = ((cy_px - outer - 1.0).floor().max(0.0)) as usize;
    let hi_y = ((cy_px + outer + 1.0).ceil().min(h)) as usize;
    for j in lo_y..hi_y {
        for i in lo_x..hi_x {
            let inside = coverage(i, j, cx_px, cy_px, r_px);
            let mut v = -inside;
            if model == ParticleModel::Ring {
                let ring = coverage(i, j, cx_px, cy_px, outer) - inside;
                v += rim_gain * ring;
            }
            out.values[[j, i]] = Complex64::new(v, 0.0);
        }
    }
    Ok(out)
}

/// Place every particle's mask on its nearest depth slice; coincident masks
/// superpose additively.
pub fn build_scene_volume(
    scene: &Scene,
    depth: DepthAxis,
    model: ParticleModel,
    rim_gain: f64,
) -> Result<Volume> {
    let mut vol = Volume::zeros(scene.grid, depth);
    for p in &scene.particles {
        let slice = depth.snap(p.z)?;
        let mask = particle_mask(p, scene.grid, model, rim_gain)?;
        let mut target = vol.values.index_axis_mut(ndarray::Axis(0), slice);
        target += &mask.values;
    }
    Ok(vol)
}

/// Record the intensity |1 + H|² of the unit plane wave plus the propagated
/// scene field.
pub fn form_hologram(propagator: &Propagator, vol: &Volume) -> Result<Hologram> {
    let h = propagator.forward(vol)?;
    let values = h.values.mapv(|v| (Complex64::new(1.0, 0.0) + v).norm_sqr());
    Ok(Hologram { grid: vol.grid, values })
}

/// Photon (Poisson) noise followed by Gaussian read noise, clamped at zero.
/// Deterministic for a given seed; identity when `enabled` is false.
pub fn add_noise(h: &Hologram, spec: &NoiseSpec) -> Result<Hologram> {
    if !spec.enabled {
        return Ok(h.clone());
    }
    if !(spec.gaussian_fraction >= 0.0) || !(spec.photons_per_pixel > 0.0) {
        return Err(HoloError::InvalidParameter(
            "noise spec needs gaussian_fraction >= 0 and photons_per_pixel > 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mean = h.values.mean().unwrap_or(0.0);
    let sigma = spec.gaussian_fraction * mean;
    let gauss = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).map_err(|e| {
        HoloError::InvalidParameter(format!("bad gaussian sigma: {e}"))
    })?;
    let mut values = h.values.clone();
    for v in values.iter_mut() {
        let lam = *v * spec.photons_per_pixel;
        let photon = if lam > 0.0 {
            Poisson::new(lam)
                .map_err(|e| HoloError::InvalidParameter(format!("bad poisson mean: {e}")))?
                .sample(&mut rng)
                / spec.photons_per_pixel
        } else {
            0.0
        };
        let read = if sigma > 0.0 { gauss.sample(&mut rng) } else { 0.0 };
        *v = (photon + read).max(0.0);
    }
    Ok(Hologram { grid: h.grid, values })
}
