//! On-disk formats: little-endian f32 raw rasters with plain-text sidecar
//! headers, CSV curves/traces, optional PNG previews, and run manifests.
//!
//! A hologram is stored as `<stem>.f32` plus `<stem>.meta`; a volume stores
//! interleaved (re, im) pairs slice by slice. The sidecar carries everything
//! needed to reinterpret the payload: dimensions, pitch, wavelength, depth
//! axis, scale factor, and format version. Values round-trip bit exactly
//! (payloads are f32; producers write f32-quantized data to begin with).

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::field::{DepthAxis, OpticalGrid, Volume};
use crate::simulate::Hologram;
use crate::{HoloError, Result};

pub const FORMAT_VERSION: u32 = 1;

fn meta_path(stem: &Path) -> PathBuf {
    stem.with_extension("meta")
}

fn raw_path(stem: &Path) -> PathBuf {
    stem.with_extension("f32")
}

fn write_f32(path: &Path, data: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

fn read_f32(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != expected * 4 {
        return Err(HoloError::Format(format!(
            "{} has {} bytes, expected {}",
            path.display(),
            bytes.len(),
            expected * 4
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn parse_meta(text: &str) -> Result<std::collections::BTreeMap<String, String>> {
    let mut map = std::collections::BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            HoloError::Format(format!("sidecar line {}: expected key = value", n + 1))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn meta_get<'a>(
    map: &'a std::collections::BTreeMap<String, String>,
    key: &str,
) -> Result<&'a str> {
    map.get(key)
        .map(|s| s.as_str())
        .ok_or_else(|| HoloError::Format(format!("sidecar missing key {key}")))
}

fn meta_parse<T: std::str::FromStr>(
    map: &std::collections::BTreeMap<String, String>,
    key: &str,
) -> Result<T> {
    meta_get(map, key)?
        .parse()
        .map_err(|_| HoloError::Format(format!("sidecar key {key} unparsable")))
}

/// Write hologram payload and sidecar under `stem` (extension replaced).
pub fn write_hologram(stem: &Path, h: &Hologram) -> Result<()> {
    let data: Vec<f32> = h.values.iter().map(|&v| v as f32).collect();
    write_f32(&raw_path(stem), &data)?;
    let mut meta = String::new();
    let _ = writeln!(meta, "format_version = {FORMAT_VERSION}");
    let _ = writeln!(meta, "kind = hologram");
    let _ = writeln!(meta, "nx = {}", h.grid.nx);
    let _ = writeln!(meta, "ny = {}", h.grid.ny);
    let _ = writeln!(meta, "pixel_pitch_um = {}", h.grid.pixel_pitch);
    let _ = writeln!(meta, "wavelength_um = {}", h.grid.wavelength);
    let _ = writeln!(meta, "dtype = f32le");
    let _ = writeln!(meta, "layout = row_major_yx");
    fs::write(meta_path(stem), meta)?;
    Ok(())
}

pub fn read_hologram(stem: &Path) -> Result<Hologram> {
    let map = parse_meta(&fs::read_to_string(meta_path(stem))?)?;
    if meta_get(&map, "kind")? != "hologram" {
        return Err(HoloError::Format("sidecar kind is not hologram".into()));
    }
    let nx: usize = meta_parse(&map, "nx")?;
    let ny: usize = meta_parse(&map, "ny")?;
    let grid = OpticalGrid::new(nx, ny, meta_parse(&map, "pixel_pitch_um")?, meta_parse(&map, "wavelength_um")?)?;
    let data = read_f32(&raw_path(stem), nx * ny)?;
    let values = Array2::from_shape_vec((ny, nx), data.iter().map(|&v| v as f64).collect())
        .map_err(|e| HoloError::Format(e.to_string()))?;
    Ok(Hologram { grid, values })
}

/// Write a complex volume: interleaved (re, im) f32 pairs, slice-major.
pub fn write_volume(stem: &Path, v: &Volume, scale: f64) -> Result<()> {
    let mut data = Vec::with_capacity(v.values.len() * 2);
    for c in v.values.iter() {
        data.push(c.re as f32);
        data.push(c.im as f32);
    }
    write_f32(&raw_path(stem), &data)?;
    let mut meta = String::new();
    let _ = writeln!(meta, "format_version = {FORMAT_VERSION}");
    let _ = writeln!(meta, "kind = volume");
    let _ = writeln!(meta, "nx = {}", v.grid.nx);
    let _ = writeln!(meta, "ny = {}", v.grid.ny);
    let _ = writeln!(meta, "nz = {}", v.depth.nz);
    let _ = writeln!(meta, "pixel_pitch_um = {}", v.grid.pixel_pitch);
    let _ = writeln!(meta, "wavelength_um = {}", v.grid.wavelength);
    let _ = writeln!(meta, "z0_um = {}", v.depth.z0);
    let _ = writeln!(meta, "dz_um = {}", v.depth.dz);
    let _ = writeln!(meta, "scale = {scale}");
    let _ = writeln!(meta, "dtype = f32le_complex_interleaved");
    let _ = writeln!(meta, "layout = slice_major_zyx");
    fs::write(meta_path(stem), meta)?;
    Ok(())
}

pub fn read_volume(stem: &Path) -> Result<(Volume, f64)> {
    let map = parse_meta(&fs::read_to_string(meta_path(stem))?)?;
    if meta_get(&map, "kind")? != "volume" {
        return Err(HoloError::Format("sidecar kind is not volume".into()));
    }
    let nx: usize = meta_parse(&map, "nx")?;
    let ny: usize = meta_parse(&map, "ny")?;
    let nz: usize = meta_parse(&map, "nz")?;
    let grid = OpticalGrid::new(nx, ny, meta_parse(&map, "pixel_pitch_um")?, meta_parse(&map, "wavelength_um")?)?;
    let depth = DepthAxis::new(meta_parse(&map, "z0_um")?, meta_parse(&map, "dz_um")?, nz)?;
    let scale: f64 = meta_parse(&map, "scale")?;
    let data = read_f32(&raw_path(stem), nx * ny * nz * 2)?;
    let complex: Vec<Complex64> = data
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0] as f64, c[1] as f64))
        .collect();
    let values = Array3::from_shape_vec((nz, ny, nx), complex)
        .map_err(|e| HoloError::Format(e.to_string()))?;
    Ok((Volume { grid, depth, values }, scale))
}

/// 8-bit grayscale preview, min-max normalized. Display only.
pub fn write_png_normalized(path: &Path, values: &Array2<f64>) -> Result<()> {
    let (ny, nx) = values.dim();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u8> = values
        .iter()
        .map(|&v| (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u8)
        .collect();
    let img = image::GrayImage::from_raw(nx as u32, ny as u32, pixels)
        .ok_or_else(|| HoloError::Format("png buffer size mismatch".into()))?;
    img.save(path).map_err(|e| HoloError::Format(e.to_string()))?;
    Ok(())
}

/// Run manifest: config echo plus content hash, enough to rerun the exact
/// experiment.
pub fn write_manifest(dir: &Path, config_text: &str, seed: u64) -> Result<()> {
    use sha2::{Digest, Sha256};
    let hash = hex::encode(Sha256::digest(config_text.as_bytes()));
    let mut manifest = String::new();
    let _ = writeln!(manifest, "format_version = {FORMAT_VERSION}");
    let _ = writeln!(manifest, "tool_version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(manifest, "config_sha256 = {hash}");
    let _ = writeln!(manifest, "seed = {seed}");
    fs::write(dir.join("manifest.txt"), manifest)?;
    fs::write(dir.join("config_echo.cfg"), config_text)?;
    Ok(())
}
