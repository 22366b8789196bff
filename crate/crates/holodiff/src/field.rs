//! Grids, complex fields, volumes, and the discrete 3D differential operators
//! shared by the regularizer and the focus metrics.
//!
//! All lengths are in micrometers. Gradients use forward differences with a
//! replicate (Neumann) boundary; the divergence is the exact negative adjoint,
//! so `<grad u, p> = -<u, div p>` holds to machine precision. The z-partial is
//! scaled by `pixel_pitch / depth_spacing` to bring it to the same magnitude
//! order as the lateral partials.

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::{HoloError, Result};

/// Lateral sampling geometry plus illumination wavelength (all in μm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalGrid {
    pub nx: usize,
    pub ny: usize,
    pub pixel_pitch: f64,
    pub wavelength: f64,
}

impl OpticalGrid {
    pub fn new(nx: usize, ny: usize, pixel_pitch: f64, wavelength: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(HoloError::InvalidParameter(format!(
                "grid must be at least 2x2, got {nx}x{ny}"
            )));
        }
        if !(pixel_pitch > 0.0) || !(wavelength > 0.0) {
            return Err(HoloError::InvalidParameter(format!(
                "pixel_pitch and wavelength must be positive, got {pixel_pitch} and {wavelength}"
            )));
        }
        Ok(Self { nx, ny, pixel_pitch, wavelength })
    }

    /// FFT-ordered spatial frequency along x for bin `i`, cycles/μm.
    /// Covers [-1/(2 pitch), +1/(2 pitch)) with spacing 1/(nx pitch).
    pub fn fx(&self, i: usize) -> f64 {
        fft_freq(i, self.nx, self.pixel_pitch)
    }

    /// FFT-ordered spatial frequency along y for bin `j`, cycles/μm.
    pub fn fy(&self, j: usize) -> f64 {
        fft_freq(j, self.ny, self.pixel_pitch)
    }

    /// Physical extent (width, height) in μm.
    pub fn extent(&self) -> (f64, f64) {
        (self.nx as f64 * self.pixel_pitch, self.ny as f64 * self.pixel_pitch)
    }
}

fn fft_freq(i: usize, n: usize, pitch: f64) -> f64 {
    let half = n / 2;
    let k = if i < n - half { i as i64 } else { i as i64 - n as i64 };
    k as f64 / (n as f64 * pitch)
}

/// Reconstruction z-range: nearest slice distance, spacing, slice count (μm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthAxis {
    pub z0: f64,
    pub dz: f64,
    pub nz: usize,
}

impl DepthAxis {
    pub fn new(z0: f64, dz: f64, nz: usize) -> Result<Self> {
        if !(dz > 0.0) || nz < 1 {
            return Err(HoloError::InvalidParameter(format!(
                "depth axis needs dz > 0 and nz >= 1, got dz {dz}, nz {nz}"
            )));
        }
        Ok(Self { z0, dz, nz })
    }

    /// Distance of slice `i` (0-based) from the sensor.
    pub fn z(&self, i: usize) -> f64 {
        self.z0 + i as f64 * self.dz
    }

    /// Nearest slice index for a distance, or an error if it falls outside
    /// the covered range.
    pub fn snap(&self, z: f64) -> Result<usize> {
        let last = self.z(self.nz - 1);
        if z < self.z0 - 0.5 * self.dz || z > last + 0.5 * self.dz {
            return Err(HoloError::InvalidParameter(format!(
                "z = {z} μm outside depth range [{}, {last}] μm",
                self.z0
            )));
        }
        let i = ((z - self.z0) / self.dz).round() as i64;
        Ok(i.clamp(0, self.nz as i64 - 1) as usize)
    }
}

/// One 2D complex amplitude slice on a grid.
#[derive(Debug, Clone)]
pub struct ComplexField {
    pub grid: OpticalGrid,
    pub values: Array2<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: OpticalGrid) -> Self {
        Self { grid, values: Array2::zeros((grid.ny, grid.nx)) }
    }

    pub fn from_values(grid: OpticalGrid, values: Array2<Complex64>) -> Result<Self> {
        if values.dim() != (grid.ny, grid.nx) {
            return Err(HoloError::ShapeMismatch(format!(
                "field values {:?} do not match grid {}x{}",
                values.dim(),
                grid.ny,
                grid.nx
            )));
        }
        Ok(Self { grid, values })
    }

    /// Sum of squared moduli.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// A z-stack of complex slices: the unknown of the reconstruction problem.
#[derive(Debug, Clone)]
pub struct Volume {
    pub grid: OpticalGrid,
    pub depth: DepthAxis,
    /// Layout (nz, ny, nx).
    pub values: Array3<Complex64>,
}

impl Volume {
    pub fn zeros(grid: OpticalGrid, depth: DepthAxis) -> Self {
        Self { grid, depth, values: Array3::zeros((depth.nz, grid.ny, grid.nx)) }
    }

    pub fn from_values(grid: OpticalGrid, depth: DepthAxis, values: Array3<Complex64>) -> Result<Self> {
        if values.dim() != (depth.nz, grid.ny, grid.nx) {
            return Err(HoloError::ShapeMismatch(format!(
                "volume values {:?} do not match {}x{}x{}",
                values.dim(),
                depth.nz,
                grid.ny,
                grid.nx
            )));
        }
        Ok(Self { grid, depth, values })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// A real-valued voxel grid with the same geometry as a [`Volume`].
#[derive(Debug, Clone)]
pub struct ScalarVolume {
    pub grid: OpticalGrid,
    pub depth: DepthAxis,
    /// Layout (nz, ny, nx).
    pub values: Array3<f64>,
}

impl ScalarVolume {
    pub fn zeros(grid: OpticalGrid, depth: DepthAxis) -> Self {
        Self { grid, depth, values: Array3::zeros((depth.nz, grid.ny, grid.nx)) }
    }

    pub fn same_shape(&self, other: &ScalarVolume) -> bool {
        self.values.dim() == other.values.dim()
    }
}

/// Per-voxel complex modulus.
pub fn magnitude(v: &Volume) -> ScalarVolume {
    ScalarVolume {
        grid: v.grid,
        depth: v.depth,
        values: v.values.mapv(|c| c.norm()),
    }
}

/// Scaled forward-difference gradient with replicate boundary.
///
/// `gx`, `gy` are plain forward differences in index units (zero at the last
/// column/row); `gz` is the forward difference along the slice index scaled
/// by `z_scale` (zero at the last slice, and identically zero for nz = 1).
pub fn gradient3d(v: &ScalarVolume, z_scale: f64) -> Result<(ScalarVolume, ScalarVolume, ScalarVolume)> {
    if !(z_scale >= 0.0) {
        return Err(HoloError::InvalidParameter(format!("z_scale must be non-negative, got {z_scale}")));
    }
    let (nz, ny, nx) = v.values.dim();
    let mut gx = ScalarVolume::zeros(v.grid, v.depth);
    let mut gy = ScalarVolume::zeros(v.grid, v.depth);
    let mut gz = ScalarVolume::zeros(v.grid, v.depth);
    let a = &v.values;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx - 1 {
                gx.values[[k, j, i]] = a[[k, j, i + 1]] - a[[k, j, i]];
            }
        }
        for j in 0..ny - 1 {
            for i in 0..nx {
                gy.values[[k, j, i]] = a[[k, j + 1, i]] - a[[k, j, i]];
            }
        }
    }
    for k in 0..nz.saturating_sub(1) {
        for j in 0..ny {
            for i in 0..nx {
                gz.values[[k, j, i]] = z_scale * (a[[k + 1, j, i]] - a[[k, j, i]]);
            }
        }
    }
    Ok((gx, gy, gz))
}

/// Negative adjoint of [`gradient3d`]: backward differences with the matching
/// boundary terms, z component scaled by the same `z_scale`.
pub fn divergence3d(
    gx: &ScalarVolume,
    gy: &ScalarVolume,
    gz: &ScalarVolume,
    z_scale: f64,
) -> Result<ScalarVolume> {
    if !gx.same_shape(gy) || !gx.same_shape(gz) {
        return Err(HoloError::ShapeMismatch(format!(
            "gradient components differ in shape: {:?} / {:?} / {:?}",
            gx.values.dim(),
            gy.values.dim(),
            gz.values.dim()
        )));
    }
    let (nz, ny, nx) = gx.values.dim();
    let mut out = ScalarVolume::zeros(gx.grid, gx.depth);
    let o = &mut out.values;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                // Backward difference; first sample enters with +, the value
                // feeding the last (zeroed) forward difference leaves with -.
                let mut d = 0.0;
                if i < nx - 1 {
                    d += gx.values[[k, j, i]];
                }
                if i > 0 {
                    d -= gx.values[[k, j, i - 1]];
                }
                if j < ny - 1 {
                    d += gy.values[[k, j, i]];
                }
                if j > 0 {
                    d -= gy.values[[k, j - 1, i]];
                }
                if k < nz - 1 {
                    d += z_scale * gz.values[[k, j, i]];
                }
                if k > 0 {
                    d -= z_scale * gz.values[[k - 1, j, i]];
                }
                o[[k, j, i]] = d;
            }
        }
    }
    Ok(out)
}
