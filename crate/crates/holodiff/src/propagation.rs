//! Fresnel transfer-function propagation and the multi-slice forward
//! operator with its adjoint.
//!
//! Propagation is done in the frequency domain: the field is FFT'd, multiplied
//! by the paraxial transfer function exp(jkz) exp(-jπλz(fx²+fy²)), and
//! transformed back. The kernel is a pure phase, so propagation is unitary and
//! the grid and pitch are preserved for every distance. FFTs use the unitary
//! normalization (1/√N each way) so energy checks hold directly.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::field::{ComplexField, DepthAxis, OpticalGrid, Volume};
use crate::{HoloError, Result};

/// Frequency-domain Fresnel transfer function for one distance.
#[derive(Debug, Clone)]
pub struct PropagationKernel {
    pub grid: OpticalGrid,
    pub z: f64,
    pub values: Array2<Complex64>,
}

/// Build the Fresnel transfer function for a signed distance z (μm):
/// exp(j 2π z / λ) · exp(-j π λ z (fx² + fy²)) on the FFT-ordered lattice.
pub fn make_kernel(grid: OpticalGrid, z: f64) -> PropagationKernel {
    let lambda = grid.wavelength;
    let global = 2.0 * PI * z / lambda;
    let mut values = Array2::zeros((grid.ny, grid.nx));
    for j in 0..grid.ny {
        let fy2 = grid.fy(j) * grid.fy(j);
        for i in 0..grid.nx {
            let fx2 = grid.fx(i) * grid.fx(i);
            let phase = global - PI * lambda * z * (fx2 + fy2);
            values[[j, i]] = Complex64::from_polar(1.0, phase);
        }
    }
    PropagationKernel { grid, z, values }
}

/// Cached FFT plans and propagation kernels for one grid.
///
/// Kernels are keyed on the distance bit pattern; a plain in-line hologram
/// pipeline only ever touches the nz depth-axis distances and their negatives.
pub struct Propagator {
    grid: OpticalGrid,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    kernels: RefCell<HashMap<u64, Arc<PropagationKernel>>>,
    scratch: RefCell<Vec<Complex64>>,
}

impl Propagator {
    pub fn new(grid: OpticalGrid) -> Self {
        let mut planner = FftPlanner::new();
        let fwd_x = planner.plan_fft_forward(grid.nx);
        let inv_x = planner.plan_fft_inverse(grid.nx);
        let fwd_y = planner.plan_fft_forward(grid.ny);
        let inv_y = planner.plan_fft_inverse(grid.ny);
        Self {
            grid,
            fwd_x,
            inv_x,
            fwd_y,
            inv_y,
            kernels: RefCell::new(HashMap::new()),
            scratch: RefCell::new(Vec::new()),
        }
    }

    pub fn grid(&self) -> OpticalGrid {
        self.grid
    }

    pub fn kernel(&self, z: f64) -> Arc<PropagationKernel> {
        self.kernels
            .borrow_mut()
            .entry(z.to_bits())
            .or_insert_with(|| Arc::new(make_kernel(self.grid, z)))
            .clone()
    }

    /// Unitary 2D FFT in place. `inverse` selects the conjugate transform.
    fn fft2(&self, data: &mut Array2<Complex64>, inverse: bool) {
        let (ny, nx) = data.dim();
        let (row_fft, col_fft) = if inverse {
            (&self.inv_x, &self.inv_y)
        } else {
            (&self.fwd_x, &self.fwd_y)
        };
        let mut scratch = self.scratch.borrow_mut();
        scratch.resize(
            row_fft
                .get_inplace_scratch_len()
                .max(col_fft.get_inplace_scratch_len())
                .max(ny),
            Complex64::default(),
        );
        for mut row in data.rows_mut() {
            let slice = row.as_slice_mut().expect("row-major layout");
            row_fft.process_with_scratch(slice, &mut scratch);
        }
        let mut col = vec![Complex64::default(); ny];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = data[[j, i]];
            }
            col_fft.process_with_scratch(&mut col, &mut scratch);
            for j in 0..ny {
                data[[j, i]] = col[j];
            }
        }
        let norm = 1.0 / ((nx * ny) as f64).sqrt();
        data.mapv_inplace(|v| v * norm);
    }

    /// Propagate a field by a signed distance z (μm).
    pub fn propagate(&self, field: &ComplexField, z: f64) -> Result<ComplexField> {
        self.check_grid(field.grid)?;
        let mut values = field.values.clone();
        self.propagate_in_place(&mut values, z, false);
        Ok(ComplexField { grid: self.grid, values })
    }

    /// Core frequency-domain step. With `conjugate_kernel` the conjugate
    /// transpose of the propagation operator is applied (exact adjoint, which
    /// for a unit-modulus kernel equals propagation by -z).
    fn propagate_in_place(&self, values: &mut Array2<Complex64>, z: f64, conjugate_kernel: bool) {
        self.fft2(values, false);
        let kernel = self.kernel(z);
        if conjugate_kernel {
            Zip::from(&mut *values).and(&kernel.values).for_each(|v, k| *v *= k.conj());
        } else {
            Zip::from(&mut *values).and(&kernel.values).for_each(|v, k| *v *= k);
        }
        self.fft2(values, true);
    }

    /// Multi-slice forward model: sum over slices of the slice propagated by
    /// its own depth-axis distance. Linear in the volume.
    pub fn forward(&self, vol: &Volume) -> Result<ComplexField> {
        self.check_grid(vol.grid)?;
        let mut acc = Array2::<Complex64>::zeros((self.grid.ny, self.grid.nx));
        let mut slice = Array2::<Complex64>::zeros((self.grid.ny, self.grid.nx));
        for k in 0..vol.depth.nz {
            slice.assign(&vol.values.index_axis(ndarray::Axis(0), k));
            self.propagate_in_place(&mut slice, vol.depth.z(k), false);
            acc += &slice;
        }
        Ok(ComplexField { grid: self.grid, values: acc })
    }

    /// Exact adjoint of [`Propagator::forward`]: back-propagate the field to
    /// every depth slice with the conjugate kernel.
    pub fn adjoint(&self, field: &ComplexField, depth: DepthAxis) -> Result<Volume> {
        self.check_grid(field.grid)?;
        let mut vol = Volume::zeros(self.grid, depth);
        for k in 0..depth.nz {
            let mut slice = field.values.clone();
            self.propagate_in_place(&mut slice, depth.z(k), true);
            vol.values.index_axis_mut(ndarray::Axis(0), k).assign(&slice);
        }
        Ok(vol)
    }

    fn check_grid(&self, grid: OpticalGrid) -> Result<()> {
        if grid != self.grid {
            return Err(HoloError::ShapeMismatch(format!(
                "field grid {}x{} does not match propagator grid {}x{}",
                grid.ny, grid.nx, self.grid.ny, self.grid.nx
            )));
        }
        Ok(())
    }
}
