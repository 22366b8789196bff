//! Iterative shrinkage/thresholding reconstruction.
//!
//! The hologram is linearized by removing its mean background, leaving
//! y' ≈ 2 Re{A x} where A is the multi-slice Fresnel forward operator. Each
//! iteration takes a gradient step on the data term by back-propagating the
//! residual, applies one nonlinear diffusion step, and accepts the iterate
//! only if the objective ½‖y' - 2Re{Ax}‖² + τ Φ(x) decreased; otherwise the
//! step size is cut and the trial repeated. The loop stops when the relative
//! objective change falls below the threshold.

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::field::{ComplexField, DepthAxis, Volume};
use crate::propagation::Propagator;
use crate::regularizer::{diffusion_step, penalty, DiffusionParams};
use crate::simulate::Hologram;
use crate::{HoloError, Result};

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Regularization weight τ; also scales the diffusion time t = τ·step.
    pub tau: f64,
    pub diffusion: DiffusionParams,
    /// Relative objective change below which the loop stops.
    pub stop_threshold: f64,
    pub max_iters: usize,
    pub step_init: f64,
    /// Multiplicative step cut on a rejected trial, in (0, 1).
    pub step_decay: f64,
    /// How to scale the initial iterate so k0 is meaningful independent of
    /// the hologram's absolute level. The scale is inverted on output.
    pub normalization: Normalization,
    /// Constraint projection applied after every data step (and after
    /// diffusion when a sign constraint is active). Absorbing scenes have
    /// real, non-positive object masks; projecting onto that set stops
    /// defocus energy from hiding in the phase or in sign-alternating
    /// ringing lobes.
    pub projection: Projection,
    /// Diffusion time applied per accepted iteration. Zero couples the
    /// diffusion time to the data step (t = τ·step); a positive value runs a
    /// fixed amount of diffusion each iteration in explicit sub-steps, so
    /// regularization keeps acting even once the data step is small.
    pub diffusion_time: f64,
    /// Sub-step size for decoupled diffusion; must satisfy the explicit
    /// stability bound dt ≲ ε / 6 for the flux limiter 1/(|∇|x|| + ε).
    pub diffusion_substep: f64,
    /// Per-iteration soft-threshold moving every voxel toward zero — the
    /// shrinkage half of iterative shrinkage/thresholding. Absolute amount
    /// in the normalized iterate scale; zero disables it.
    pub shrink: f64,
    /// Reweighting scale δ for the shrink, as a fraction of the current
    /// maximum modulus. When positive, voxel v is shrunk by
    /// shrink·δ/(|x_v| + δ): weak voxels are thresholded at the full rate
    /// while established structure is barely touched, which converges to a
    /// sparser volume than a uniform threshold. Zero applies the uniform
    /// threshold.
    pub shrink_reweight: f64,
}

/// Constraint set the iterate is projected onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    /// No constraint.
    Complex,
    /// Drop the imaginary part.
    Real,
    /// Drop the imaginary part and clamp the real part to ≤ 0, matching an
    /// absorbing (opaque) particle mask.
    NonPositive,
}

impl Projection {
    fn apply(self, x: &mut Volume) {
        match self {
            Projection::Complex => {}
            Projection::Real => {
                x.values.mapv_inplace(|v| Complex64::new(v.re, 0.0));
            }
            Projection::NonPositive => {
                x.values.mapv_inplace(|v| Complex64::new(v.re.min(0.0), 0.0));
            }
        }
    }
}

/// Initial-iterate scaling convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Use the back-propagated volume as-is.
    None,
    /// Scale so the 99th-percentile modulus is 1.
    Percentile99,
    /// Scale so the strongest 3D gradient of the modulus is 1; k0 then
    /// selects the preservation threshold as a fraction of the strongest
    /// edge in the initial stack.
    GradientMax,
}

impl SolverConfig {
    pub fn defaults(diffusion: DiffusionParams) -> Self {
        Self {
            tau: 1.0,
            diffusion,
            stop_threshold: 1e-5,
            max_iters: 2000,
            step_init: 1.0,
            step_decay: 0.5,
            normalization: Normalization::Percentile99,
            projection: Projection::Complex,
            diffusion_time: 0.0,
            diffusion_substep: 0.005,
            shrink: 0.0,
            shrink_reweight: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0)
            || !(self.stop_threshold > 0.0)
            || self.max_iters < 1
            || !(self.step_init > 0.0)
            || !(self.step_decay > 0.0 && self.step_decay < 1.0)
            || !(self.diffusion_time >= 0.0)
            || !(self.diffusion_substep > 0.0)
            || !(self.shrink >= 0.0)
            || !(self.shrink_reweight >= 0.0)
        {
            return Err(HoloError::InvalidParameter(format!(
                "bad solver config: tau {}, stop {}, max_iters {}, step_init {}, step_decay {}",
                self.tau, self.stop_threshold, self.max_iters, self.step_init, self.step_decay
            )));
        }
        self.diffusion.validate()
    }
}

/// One accepted iteration of the solve loop.
#[derive(Debug, Clone, Copy)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub data_term: f64,
    pub penalty_term: f64,
    pub step_size: f64,
    /// |obj(i) - obj(i-1)| / obj(i-1), the stopping quantity.
    pub delta_obj: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    pub converged: bool,
    /// Step size collapsed without any acceptable decrease.
    pub stalled: bool,
}

impl ConvergenceTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,objective,data_term,penalty_term,step_size,delta_obj\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                r.iter, r.objective, r.data_term, r.penalty_term, r.step_size, r.delta_obj
            ));
        }
        out
    }
}

/// Background-removed hologram data for the linear model y' ≈ 2 Re{A x}.
#[derive(Debug, Clone)]
pub struct LinearizedMeasurement {
    pub y_prime: Array2<f64>,
    pub background: f64,
}

/// Remove the mean background; the DC and quadratic hologram terms barely
/// affect the linear reconstruction.
pub fn linearize(h: &Hologram) -> LinearizedMeasurement {
    let background = h.values.mean().unwrap_or(0.0);
    LinearizedMeasurement { y_prime: &h.values - background, background }
}

/// r = y' - 2 Re{forward(x)}.
pub fn data_residual(
    propagator: &Propagator,
    m: &LinearizedMeasurement,
    x: &Volume,
) -> Result<Array2<f64>> {
    let h = propagator.forward(x)?;
    if m.y_prime.dim() != h.values.dim() {
        return Err(HoloError::ShapeMismatch(format!(
            "measurement {:?} vs forward model {:?}",
            m.y_prime.dim(),
            h.values.dim()
        )));
    }
    let mut r = m.y_prime.clone();
    Zip::from(&mut r).and(&h.values).for_each(|rv, hv| *rv -= 2.0 * hv.re);
    Ok(r)
}

/// Objective of the regularized least-squares problem:
/// (total, data_term, penalty_term).
pub fn objective(
    propagator: &Propagator,
    m: &LinearizedMeasurement,
    x: &Volume,
    cfg: &SolverConfig,
) -> Result<(f64, f64, f64)> {
    let r = data_residual(propagator, m, x)?;
    let data_term = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
    let penalty_term = if cfg.tau > 0.0 {
        cfg.tau * penalty(x, &cfg.diffusion)?
    } else {
        0.0
    };
    let total = data_term + penalty_term;
    if !total.is_finite() {
        return Err(HoloError::NonFinite("objective".into()));
    }
    Ok((total, data_term, penalty_term))
}

/// Move a voxel toward zero by θ, zeroing it when |v| ≤ θ.
fn soft_threshold(v: Complex64, theta: f64) -> Complex64 {
    let n = v.norm();
    if n <= theta {
        Complex64::new(0.0, 0.0)
    } else {
        v * (1.0 - theta / n)
    }
}

fn lift(grid: crate::field::OpticalGrid, r: &Array2<f64>) -> ComplexField {
    ComplexField {
        grid,
        values: r.mapv(|v| Complex64::new(v, 0.0)),
    }
}

fn percentile99(x: &Volume) -> f64 {
    let mut mags: Vec<f64> = x.values.iter().map(|v| v.norm()).collect();
    let idx = ((mags.len() as f64) * 0.99) as usize;
    let idx = idx.min(mags.len() - 1);
    let (_, v, _) = mags.select_nth_unstable_by(idx, |a, b| a.partial_cmp(b).unwrap());
    *v
}

/// Back-propagate the linearized hologram to every slice; optionally scale so
/// the 99th-percentile modulus is 1. Returns the volume and the applied scale.
pub fn initialize(
    propagator: &Propagator,
    m: &LinearizedMeasurement,
    depth: DepthAxis,
    cfg: &SolverConfig,
) -> Result<(Volume, f64)> {
    let field = lift(propagator.grid(), &m.y_prime);
    let mut x0 = propagator.adjoint(&field, depth)?;
    let reference = match cfg.normalization {
        Normalization::None => 0.0,
        Normalization::Percentile99 => percentile99(&x0),
        Normalization::GradientMax => {
            let m = crate::field::magnitude(&x0);
            let (gx, gy, gz) = crate::field::gradient3d(&m, cfg.diffusion.z_scale)?;
            let mut max = 0.0f64;
            for ((&a, &b), &c) in gx.values.iter().zip(gy.values.iter()).zip(gz.values.iter()) {
                max = max.max((a * a + b * b + c * c).sqrt());
            }
            max
        }
    };
    let mut scale = 1.0;
    if reference > 0.0 {
        scale = 1.0 / reference;
        x0.values.mapv_inplace(|v| v * scale);
    }
    Ok((x0, scale))
}

/// Run the IST loop. Returns the final accepted iterate (de-normalized) and
/// the full per-iteration trace.
pub fn solve(
    propagator: &Propagator,
    m: &LinearizedMeasurement,
    depth: DepthAxis,
    cfg: &SolverConfig,
) -> Result<(Volume, ConvergenceTrace)> {
    cfg.validate()?;
    // With τ = 0 there is no diffusion and no penalty; use the raw step size
    // so the loop is a plain Landweber iteration on the data term. The
    // measurement must be rescaled the same way as the iterate so the data
    // model stays consistent under normalization.
    let (mut x0, scale) = initialize(propagator, m, depth, cfg)?;
    cfg.projection.apply(&mut x0);
    let m_scaled = LinearizedMeasurement {
        y_prime: m.y_prime.mapv(|v| v * scale),
        background: m.background,
    };

    let mut accepted = x0;
    let (mut obj, _, _) = objective(propagator, &m_scaled, &accepted, cfg)?;
    let mut step = cfg.step_init;
    let min_step = cfg.step_init * 1e-14;
    let mut trace = ConvergenceTrace::default();

    let mut iter = 0;
    'outer: while iter < cfg.max_iters {
        iter += 1;
        let residual = data_residual(propagator, &m_scaled, &accepted)?;
        let direction = propagator.adjoint(&lift(propagator.grid(), &residual), depth)?;
        // Reweighting scale from the accepted iterate; fixed across the
        // backtracking retries of this iteration.
        let shrink_delta = if cfg.shrink > 0.0 && cfg.shrink_reweight > 0.0 {
            let max_mod = accepted.values.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
            cfg.shrink_reweight * max_mod
        } else {
            0.0
        };
        loop {
            let t = if cfg.tau > 0.0 { cfg.tau * step } else { step };
            let mut trial = accepted.clone();
            Zip::from(&mut trial.values)
                .and(&direction.values)
                .for_each(|x, &d| *x += t * d);
            cfg.projection.apply(&mut trial);
            if cfg.shrink > 0.0 {
                if shrink_delta > 0.0 {
                    Zip::from(&mut trial.values).and(&accepted.values).for_each(|v, &a| {
                        let theta = cfg.shrink * shrink_delta / (a.norm() + shrink_delta);
                        *v = soft_threshold(*v, theta);
                    });
                } else {
                    trial.values.mapv_inplace(|v| soft_threshold(v, cfg.shrink));
                }
            }
            // An unstable diffusion step blows up the trial; treat it like an
            // objective increase and let backtracking shrink the step.
            let trial = if cfg.tau > 0.0 {
                let diffused = if cfg.diffusion_time > 0.0 {
                    let n = (cfg.diffusion_time / cfg.diffusion_substep).round().max(1.0) as usize;
                    let dt = cfg.diffusion_time / n as f64;
                    let mut v = Ok(trial);
                    for _ in 0..n {
                        v = match v {
                            Ok(cur) => diffusion_step(&cur, &cfg.diffusion, dt),
                            err => err,
                        };
                    }
                    v
                } else {
                    diffusion_step(&trial, &cfg.diffusion, t)
                };
                match diffused {
                    Ok(mut v) => {
                        cfg.projection.apply(&mut v);
                        v
                    }
                    Err(HoloError::NonFinite(_)) => {
                        step *= cfg.step_decay;
                        if step < min_step {
                            trace.stalled = true;
                            break 'outer;
                        }
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            } else {
                trial
            };
            // An exact fixed point (trial identical to the accepted iterate)
            // is convergence, not a failed decrease; delta = 0 stops the loop.
            match objective(propagator, &m_scaled, &trial, cfg) {
                Ok((total, dt, pt)) if total < obj || trial.values == accepted.values => {
                    let delta = if obj > 0.0 { (total - obj).abs() / obj } else { 0.0 };
                    accepted = trial;
                    obj = total;
                    trace.records.push(TraceRecord {
                        iter,
                        objective: obj,
                        data_term: dt,
                        penalty_term: pt,
                        step_size: step,
                        delta_obj: delta,
                    });
                    if delta < cfg.stop_threshold {
                        trace.converged = true;
                    }
                    break;
                }
                Ok(_) | Err(HoloError::NonFinite(_)) => {
                    step *= cfg.step_decay;
                    if step < min_step {
                        trace.stalled = true;
                        break 'outer;
                    }
                }
                Err(e) => return Err(e),
            }
        }
        if trace.converged {
            break;
        }
    }

    if scale != 1.0 && scale > 0.0 {
        let inv = 1.0 / scale;
        accepted.values.mapv_inplace(|v| v * inv);
    }
    Ok((accepted, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::OpticalGrid;
    use crate::propagation::Propagator;
    use crate::regularizer::DiffusionKind;
    use crate::simulate::{
        build_scene_volume, form_hologram, Particle, ParticleModel, Scene,
    };
    use ndarray::Array3;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> OpticalGrid {
        OpticalGrid::new(n, n, 2.0, 0.66).unwrap()
    }

    fn diffusion(z_scale: f64) -> DiffusionParams {
        DiffusionParams { k0: 1.0 / 3.0, epsilon: 1e-8, z_scale, kind: DiffusionKind::Hwnld }
    }

    fn cfg(z_scale: f64) -> SolverConfig {
        SolverConfig::defaults(diffusion(z_scale))
    }

    fn uniform_hologram(g: OpticalGrid, level: f64) -> Hologram {
        Hologram { grid: g, values: Array2::from_elem((g.ny, g.nx), level) }
    }

    #[test]
    fn linearize_uniform_hologram_is_zero() {
        let g = grid(16);
        let m = linearize(&uniform_hologram(g, 1.7));
        assert!((m.background - 1.7).abs() < 1e-12);
        assert!(m.y_prime.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn linearized_mean_is_zero() {
        let g = grid(32);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let values = Array2::from_shape_fn((32, 32), |_| rng.gen_range(0.5..1.5));
        let m = linearize(&Hologram { grid: g, values });
        assert!(m.y_prime.mean().unwrap().abs() < 1e-12);
    }

    #[test]
    fn weak_scene_linearization_close_to_twice_real_field() {
        // |H| ≪ 1 for a small particle, so y' ≈ 2 Re H.
        let g = grid(256);
        let depth = DepthAxis::new(4338.0, 20.0, 101).unwrap();
        let scene = Scene { grid: g, particles: vec![Particle::new(256.0, 256.0, 5338.0, 15.0)] };
        let vol = build_scene_volume(&scene, depth, ParticleModel::Disk, 0.5).unwrap();
        let p = Propagator::new(g);
        let h = form_hologram(&p, &vol).unwrap();
        let m = linearize(&h);
        let field = p.forward(&vol).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        Zip::from(&m.y_prime).and(&field.values).for_each(|&y, f| {
            num += (y - 2.0 * f.re).powi(2);
            den += (2.0 * f.re).powi(2);
        });
        let rel = (num / den).sqrt();
        assert!(rel <= 0.05, "relative deviation {rel}");
    }

    #[test]
    fn residual_at_zero_volume_is_measurement() {
        let g = grid(16);
        let depth = DepthAxis::new(500.0, 50.0, 3).unwrap();
        let p = Propagator::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values = Array2::from_shape_fn((16, 16), |_| rng.gen_range(0.5..1.5));
        let m = linearize(&Hologram { grid: g, values });
        let r = data_residual(&p, &m, &Volume::zeros(g, depth)).unwrap();
        for (a, b) in r.iter().zip(m.y_prime.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn residual_is_affine_in_volume() {
        let g = grid(16);
        let depth = DepthAxis::new(500.0, 50.0, 4).unwrap();
        let p = Propagator::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = linearize(&Hologram {
            grid: g,
            values: Array2::from_shape_fn((16, 16), |_| rng.gen_range(0.5..1.5)),
        });
        let mk = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Volume {
                grid: g,
                depth,
                values: Array3::from_shape_fn((4, 16, 16), |_| {
                    Complex64::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1))
                }),
            }
        };
        let x1 = mk(7);
        let x2 = mk(8);
        let r1 = data_residual(&p, &m, &x1).unwrap();
        let r2 = data_residual(&p, &m, &x2).unwrap();
        let mut dvol = Volume::zeros(g, depth);
        Zip::from(&mut dvol.values).and(&x1.values).and(&x2.values).for_each(|d, &a, &b| {
            *d = a - b;
        });
        let fd = p.forward(&dvol).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        Zip::from(&r1).and(&r2).and(&fd.values).for_each(|&a, &b, f| {
            num += ((a - b) + 2.0 * f.re).powi(2);
            den += (2.0 * f.re).powi(2);
        });
        assert!((num / den).sqrt() < 1e-12);
    }

    #[test]
    fn residual_small_at_ground_truth() {
        let g = grid(128);
        let depth = DepthAxis::new(4338.0, 20.0, 21).unwrap();
        let scene = Scene { grid: g, particles: vec![Particle::new(128.0, 128.0, 4538.0, 15.0)] };
        let vol = build_scene_volume(&scene, depth, ParticleModel::Disk, 0.5).unwrap();
        let p = Propagator::new(g);
        let m = linearize(&form_hologram(&p, &vol).unwrap());
        let r = data_residual(&p, &m, &vol).unwrap();
        let rn: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let yn: f64 = m.y_prime.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(rn * 10.0 < yn, "residual {rn} vs measurement {yn}");
    }

    #[test]
    fn objective_anchors() {
        let g = grid(16);
        let depth = DepthAxis::new(500.0, 50.0, 3).unwrap();
        let p = Propagator::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = linearize(&Hologram {
            grid: g,
            values: Array2::from_shape_fn((16, 16), |_| rng.gen_range(0.5..1.5)),
        });
        let zero = Volume::zeros(g, depth);
        let c = cfg(0.1);
        let (total, data, pen) = objective(&p, &m, &zero, &c).unwrap();
        let half_norm: f64 = 0.5 * m.y_prime.iter().map(|v| v * v).sum::<f64>();
        assert!((total - half_norm).abs() / half_norm < 1e-12);
        assert_eq!(pen, 0.0);
        assert_eq!(total, data + pen);

        // τ scaling: doubling τ doubles penalty_term, data unchanged.
        let mut x = zero.clone();
        x.values[[1, 4, 4]] = Complex64::new(0.5, 0.2);
        let c1 = SolverConfig { tau: 1.5, ..c };
        let c2 = SolverConfig { tau: 3.0, ..c };
        let (_, d1, p1) = objective(&p, &m, &x, &c1).unwrap();
        let (_, d2, p2) = objective(&p, &m, &x, &c2).unwrap();
        assert_eq!(d1, d2);
        assert!((p2 - 2.0 * p1).abs() / p1 < 1e-12);
        let c0 = SolverConfig { tau: 0.0, ..c };
        let (t0, d0, p0) = objective(&p, &m, &x, &c0).unwrap();
        assert_eq!(p0, 0.0);
        assert_eq!(t0, d0);
    }

    #[test]
    fn initialize_zero_measurement_gives_zero_volume() {
        let g = grid(16);
        let depth = DepthAxis::new(500.0, 50.0, 3).unwrap();
        let p = Propagator::new(g);
        let m = linearize(&uniform_hologram(g, 1.0));
        let (x0, scale) = initialize(&p, &m, depth, &cfg(0.1)).unwrap();
        assert_eq!(scale, 1.0);
        assert!(x0.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn initialize_single_slice_is_back_propagation() {
        let g = grid(32);
        let depth = DepthAxis::new(800.0, 20.0, 1).unwrap();
        let p = Propagator::new(g);
        let scene = Scene { grid: g, particles: vec![Particle::new(32.0, 32.0, 800.0, 8.0)] };
        let vol = build_scene_volume(&scene, depth, ParticleModel::Disk, 0.5).unwrap();
        let m = linearize(&form_hologram(&p, &vol).unwrap());
        let c = SolverConfig { normalization: Normalization::None, ..cfg(0.1) };
        let (x0, scale) = initialize(&p, &m, depth, &c).unwrap();
        assert_eq!(scale, 1.0);
        let lifted = ComplexField { grid: g, values: m.y_prime.mapv(|v| Complex64::new(v, 0.0)) };
        let bp = p.propagate(&lifted, -800.0).unwrap();
        let num: f64 = (&x0.values.index_axis(ndarray::Axis(0), 0).to_owned() - &bp.values)
            .iter()
            .map(|v| v.norm_sqr())
            .sum();
        assert!(num.sqrt() / bp.energy().sqrt() < 1e-10);
    }

    #[test]
    fn normalization_sets_p99_to_one() {
        let g = grid(32);
        let depth = DepthAxis::new(800.0, 40.0, 4).unwrap();
        let p = Propagator::new(g);
        let scene = Scene { grid: g, particles: vec![Particle::new(32.0, 32.0, 840.0, 10.0)] };
        let vol = build_scene_volume(&scene, depth, ParticleModel::Disk, 0.5).unwrap();
        let m = linearize(&form_hologram(&p, &vol).unwrap());
        let (x0, _) = initialize(&p, &m, depth, &cfg(0.05)).unwrap();
        let mut mags: Vec<f64> = x0.values.iter().map(|v| v.norm()).collect();
        mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let p99 = mags[((mags.len() as f64) * 0.99) as usize];
        assert!((p99 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_measurement_converges_immediately() {
        let g = grid(16);
        let depth = DepthAxis::new(500.0, 50.0, 3).unwrap();
        let p = Propagator::new(g);
        let m = linearize(&uniform_hologram(g, 1.0));
        let (x, trace) = solve(&p, &m, depth, &cfg(0.1)).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.records.len(), 1);
        assert!(x.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn accepted_objective_strictly_decreasing() {
        let g = grid(64);
        let depth = DepthAxis::new(1000.0, 40.0, 8).unwrap();
        let p = Propagator::new(g);
        let scene = Scene { grid: g, particles: vec![Particle::new(64.0, 64.0, 1120.0, 10.0)] };
        let vol = build_scene_volume(&scene, depth, ParticleModel::Ring, 0.5).unwrap();
        let m = linearize(&form_hologram(&p, &vol).unwrap());
        let c = SolverConfig { max_iters: 40, ..cfg(2.0 / 40.0) };
        let (_, trace) = solve(&p, &m, depth, &c).unwrap();
        assert!(trace.records.len() > 1);
        for w in trace.records.windows(2) {
            assert!(w[1].objective < w[0].objective);
            let recomputed = (w[1].objective - w[0].objective).abs() / w[0].objective;
            assert!((recomputed - w[1].delta_obj).abs() <= f64::EPSILON * recomputed.max(1.0));
        }
    }

    #[test]
    fn landweber_mode_residual_non_increasing() {
        // τ = 0, no diffusion: gradient iteration on ½‖y' - 2Re{Ax}‖² with a
        // step below 1/‖B‖² (B = 2Re∘A, ‖B‖² estimated by power iteration).
        let g = grid(32);
        let depth = DepthAxis::new(600.0, 60.0, 4).unwrap();
        let p = Propagator::new(g);
        let scene = Scene { grid: g, particles: vec![Particle::new(32.0, 32.0, 660.0, 8.0)] };
        let vol = build_scene_volume(&scene, depth, ParticleModel::Disk, 0.5).unwrap();
        let m = linearize(&form_hologram(&p, &vol).unwrap());

        // Power iteration for the operator norm of x -> Bᵀ B x.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut v = Volume {
            grid: g,
            depth,
            values: Array3::from_shape_fn((4, 32, 32), |_| {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            }),
        };
        let mut norm2 = 0.0;
        for _ in 0..30 {
            let f = p.forward(&v).unwrap();
            let re = f.values.mapv(|c| Complex64::new(2.0 * c.re, 0.0));
            let back = p.adjoint(&ComplexField { grid: g, values: re.mapv(|c| 2.0 * c) }, depth).unwrap();
            let n: f64 = back.values.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            norm2 = n / v.values.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let inv = 1.0 / n.sqrt();
            v = Volume { grid: g, depth, values: back.values.mapv(|c| c * inv) };
        }

        let c = SolverConfig {
            tau: 0.0,
            step_init: 0.9 / norm2,
            max_iters: 25,
            stop_threshold: 1e-14,
            normalization: Normalization::None,
            ..cfg(1.0)
        };
        let (_, trace) = solve(&p, &m, depth, &c).unwrap();
        assert!(trace.records.len() >= 10, "only {} accepted steps", trace.records.len());
        for w in trace.records.windows(2) {
            assert!(w[1].data_term <= w[0].data_term * (1.0 + 1e-12));
            // With step fixed below 1/‖B‖² no backtracking should trigger.
            assert_eq!(w[1].step_size, w[0].step_size);
        }
    }

    #[test]
    fn solve_is_deterministic() {
        let g = grid(32);
        let depth = DepthAxis::new(600.0, 60.0, 4).unwrap();
        let p = Propagator::new(g);
        let scene = Scene { grid: g, particles: vec![Particle::new(32.0, 32.0, 660.0, 8.0)] };
        let vol = build_scene_volume(&scene, depth, ParticleModel::Disk, 0.5).unwrap();
        let m = linearize(&form_hologram(&p, &vol).unwrap());
        let c = SolverConfig { max_iters: 10, ..cfg(2.0 / 60.0) };
        let (x1, t1) = solve(&p, &m, depth, &c).unwrap();
        let (x2, t2) = solve(&p, &m, depth, &c).unwrap();
        assert_eq!(x1.values, x2.values);
        assert_eq!(t1.records.len(), t2.records.len());
    }
}
