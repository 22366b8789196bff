//! Per-slice focus curves, peak localization against ground truth, and the
//! classical hologram resolution limits.

use crate::field::{gradient3d, magnitude, DepthAxis, OpticalGrid, Volume};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    MaxIntensity,
    MaxGradient,
}

/// One value per reconstruction slice.
#[derive(Debug, Clone)]
pub struct SliceCurve {
    pub depth: DepthAxis,
    pub values: Vec<f64>,
    pub kind: CurveKind,
}

impl SliceCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slice_index,z_um,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{:.6},{:.17e}\n", i, self.depth.z(i), v));
        }
        out
    }

    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            // ties break toward the lower index
            if best.map_or(true, |(_, bv)| v > bv) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Maximum of |slice|² per slice.
pub fn max_intensity_curve(x: &Volume) -> SliceCurve {
    let values = (0..x.depth.nz)
        .map(|k| {
            x.values
                .index_axis(ndarray::Axis(0), k)
                .iter()
                .map(|c| c.norm_sqr())
                .fold(0.0, f64::max)
        })
        .collect();
    SliceCurve { depth: x.depth, values, kind: CurveKind::MaxIntensity }
}

/// Maximum of the scaled 3D gradient magnitude of |x| per slice — the same
/// operator the regularizer uses, so the focus metric and the diffusion see
/// one definition of "edge".
pub fn max_gradient_curve(x: &Volume, z_scale: f64) -> Result<SliceCurve> {
    let m = magnitude(x);
    let (gx, gy, gz) = gradient3d(&m, z_scale)?;
    let values = (0..x.depth.nz)
        .map(|k| {
            let a = gx.values.index_axis(ndarray::Axis(0), k);
            let b = gy.values.index_axis(ndarray::Axis(0), k);
            let c = gz.values.index_axis(ndarray::Axis(0), k);
            let mut best = 0.0f64;
            ndarray::Zip::from(&a).and(&b).and(&c).for_each(|&x, &y, &z| {
                best = best.max((x * x + y * y + z * z).sqrt());
            });
            best
        })
        .collect();
    Ok(SliceCurve { depth: x.depth, values, kind: CurveKind::MaxGradient })
}

/// Pick the `expected_count` largest local maxima at pairwise distance of at
/// least `min_separation_slices`, ties toward the lower index. Returns fewer
/// indices (sorted ascending) if the curve has fewer eligible peaks.
pub fn localize(curve: &SliceCurve, expected_count: usize, min_separation_slices: usize) -> Vec<usize> {
    let v = &curve.values;
    let n = v.len();
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = if i > 0 { v[i - 1] } else { f64::NEG_INFINITY };
            let right = if i + 1 < n { v[i + 1] } else { f64::NEG_INFINITY };
            v[i] >= left && v[i] >= right && v[i] > 0.0
        })
        .collect();
    // larger value first, then lower index
    candidates.sort_by(|&a, &b| {
        v[b].partial_cmp(&v[a]).unwrap().then_with(|| a.cmp(&b))
    });
    let mut picked: Vec<usize> = Vec::new();
    for i in candidates {
        if picked.len() == expected_count {
            break;
        }
        if picked.iter().all(|&p| p.abs_diff(i) >= min_separation_slices.max(1)) {
            picked.push(i);
        }
    }
    picked.sort_unstable();
    picked
}

/// Per-particle localization outcome, slices 0-based.
#[derive(Debug, Clone)]
pub struct LocalizationRecord {
    pub true_slice: usize,
    pub detected_slice: Option<usize>,
    pub slice_error: Option<i64>,
    pub detected_z_um: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LocalizationReport {
    pub records: Vec<LocalizationRecord>,
    pub all_detected: bool,
}

/// Match detected peaks to expected ground-truth slices: each true slice is
/// paired with the nearest detected peak, greedily in order of distance.
pub fn localization_report(
    curve: &SliceCurve,
    true_slices: &[usize],
    min_separation_slices: usize,
) -> LocalizationReport {
    let detected = localize(curve, true_slices.len(), min_separation_slices);
    let mut used = vec![false; detected.len()];
    let mut records: Vec<LocalizationRecord> = true_slices
        .iter()
        .map(|&t| LocalizationRecord {
            true_slice: t,
            detected_slice: None,
            slice_error: None,
            detected_z_um: None,
        })
        .collect();
    // nearest-pair greedy assignment
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (ri, &t) in true_slices.iter().enumerate() {
        for (di, &d) in detected.iter().enumerate() {
            pairs.push((t.abs_diff(d), ri, di));
        }
    }
    pairs.sort_unstable();
    let mut assigned = vec![false; records.len()];
    for (_, ri, di) in pairs {
        if assigned[ri] || used[di] {
            continue;
        }
        assigned[ri] = true;
        used[di] = true;
        let d = detected[di];
        records[ri].detected_slice = Some(d);
        records[ri].slice_error = Some(d as i64 - records[ri].true_slice as i64);
        records[ri].detected_z_um = Some(curve.depth.z(d));
    }
    let all_detected = records.iter().all(|r| r.detected_slice.is_some());
    LocalizationReport { records, all_detected }
}

impl LocalizationReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("particles = {}\n", self.records.len()));
        out.push_str(&format!("all_detected = {}\n", self.all_detected));
        for (i, r) in self.records.iter().enumerate() {
            out.push_str(&format!("particle{}.true_slice = {}\n", i, r.true_slice));
            match r.detected_slice {
                Some(d) => {
                    out.push_str(&format!("particle{}.detected_slice = {}\n", i, d));
                    out.push_str(&format!("particle{}.slice_error = {}\n", i, r.slice_error.unwrap()));
                    out.push_str(&format!(
                        "particle{}.detected_z_um = {:.3}\n",
                        i,
                        r.detected_z_um.unwrap()
                    ));
                }
                None => out.push_str(&format!("particle{}.detected_slice = none\n", i)),
            }
        }
        out
    }
}

/// Classical lateral and axial resolution of a hologram of aperture
/// d = ny·pitch at distance z: (λz/2d, 2λz²/d²), in μm.
pub fn resolution_limits(grid: OpticalGrid, z: f64) -> (f64, f64) {
    let d = grid.ny as f64 * grid.pixel_pitch;
    let lateral = grid.wavelength * z / (2.0 * d);
    let axial = 2.0 * grid.wavelength * z * z / (d * d);
    (lateral, axial)
}
