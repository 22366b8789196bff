//! In-line digital holography: hologram synthesis of scattering particles and
//! 3D volume reconstruction from a single 2D hologram.
//!
//! The reconstruction minimizes a regularized least-squares objective with an
//! iterative shrinkage/thresholding loop. The regularizer is a 3D
//! hybrid-Weickert nonlinear diffusion step applied to the full reconstruction
//! stack, which diffuses out defocused particle images while preserving the
//! in-focus slice, so particles can be localized along the optical axis even
//! when they overlap laterally.
//!
//! Pipeline: [`simulate`] builds a hologram from a particle scene,
//! [`solver`] reconstructs the complex volume, [`metrics`] extracts per-slice
//! focus curves and peak positions.

pub mod config;
pub mod field;
pub mod io;
pub mod metrics;
pub mod propagation;
pub mod regularizer;
pub mod simulate;
pub mod solver;

mod error;

pub use error::HoloError;

pub type Result<T> = std::result::Result<T, HoloError>;
