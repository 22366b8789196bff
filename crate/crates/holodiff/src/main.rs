//! Command-line pipeline: simulate a hologram, reconstruct the 3D volume,
//! analyze focus curves and particle positions, or run all three at once.
//!
//! Exit codes: 0 success, 2 config error, 3 I/O error, 4 solver did not
//! converge.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use holodiff::config::RunConfig;
use holodiff::field::magnitude;
use holodiff::io;
use holodiff::metrics::{localization_report, max_gradient_curve, max_intensity_curve};
use holodiff::propagation::Propagator;
use holodiff::simulate::{add_noise, build_scene_volume, form_hologram};
use holodiff::solver::{linearize, solve};
use holodiff::HoloError;

const PRESET_SINGLE15: &str = include_str!("../presets/single15.cfg");
const PRESET_SINGLE40: &str = include_str!("../presets/single40.cfg");
const PRESET_OVERLAP3: &str = include_str!("../presets/overlap3.cfg");

#[derive(Parser)]
#[command(name = "holodiff", version, about = "In-line hologram simulation and 3D particle reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Run configuration file (TOML-style sections)
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario instead of --config
    #[arg(long, value_parser = ["single15", "single40", "overlap3"])]
    preset: Option<String>,
    /// Output directory (overrides outputs.directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise seed (overrides noise.seed)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a hologram from the configured particle scene
    Simulate(CommonArgs),
    /// Reconstruct a volume from an existing hologram file
    Reconstruct {
        #[command(flatten)]
        common: CommonArgs,
        /// Hologram file stem (reads <stem>.f32 and <stem>.meta)
        #[arg(long)]
        hologram: PathBuf,
    },
    /// Compute focus curves and a localization report from a volume file
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
        /// Volume file stem (reads <stem>.f32 and <stem>.meta)
        #[arg(long)]
        volume: PathBuf,
    },
    /// simulate + reconstruct + analyze into one run directory
    Pipeline(CommonArgs),
}

fn exit_code_for(e: &HoloError) -> u8 {
    match e {
        HoloError::Config(_) | HoloError::InvalidParameter(_) => 2,
        HoloError::Io(_) | HoloError::Format(_) => 3,
        _ => 2,
    }
}

fn load_config(common: &CommonArgs) -> Result<(RunConfig, String), HoloError> {
    let text = match (&common.config, &common.preset) {
        (Some(path), None) => std::fs::read_to_string(path)?,
        (None, Some(name)) => match name.as_str() {
            "single15" => PRESET_SINGLE15.to_string(),
            "single40" => PRESET_SINGLE40.to_string(),
            "overlap3" => PRESET_OVERLAP3.to_string(),
            _ => unreachable!("clap validates presets"),
        },
        _ => {
            return Err(HoloError::Config(
                "exactly one of --config or --preset is required".into(),
            ))
        }
    };
    let mut cfg = RunConfig::from_str(&text)?;
    if let Some(seed) = common.seed {
        cfg.noise.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.outputs.directory = out.display().to_string();
    }
    // echo reflects the effective settings, overrides included
    let effective = cfg.to_toml();
    Ok((cfg, effective))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, HoloError> {
    let dir = PathBuf::from(&cfg.outputs.directory);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn cmd_simulate(cfg: &RunConfig, config_text: &str, dir: &Path) -> Result<(), HoloError> {
    let grid = cfg.grid()?;
    let depth = cfg.depth()?;
    let scene = cfg.scene()?;
    let model = cfg.particle_model()?;
    let vol = build_scene_volume(&scene, depth, model, cfg.scene.rim_gain)?;
    let propagator = Propagator::new(grid);
    let clean = form_hologram(&propagator, &vol)?;
    let noisy = add_noise(&clean, &cfg.noise_spec())?;
    io::write_hologram(&dir.join("hologram"), &noisy)?;
    io::write_manifest(dir, config_text, cfg.noise.seed)?;
    if cfg.outputs.emit_png {
        io::write_png_normalized(&dir.join("hologram.png"), &noisy.values)?;
    }
    eprintln!("wrote {}", dir.join("hologram.f32").display());
    Ok(())
}

fn cmd_reconstruct(cfg: &RunConfig, dir: &Path, hologram_stem: &Path) -> Result<bool, HoloError> {
    let grid = cfg.grid()?;
    let depth = cfg.depth()?;
    let hologram = io::read_hologram(hologram_stem)?;
    if hologram.grid != grid {
        return Err(HoloError::Config(format!(
            "hologram grid {}x{} (pitch {}) does not match config grid {}x{} (pitch {})",
            hologram.grid.ny,
            hologram.grid.nx,
            hologram.grid.pixel_pitch,
            grid.ny,
            grid.nx,
            grid.pixel_pitch
        )));
    }
    let solver_cfg = cfg.solver_config()?;
    let propagator = Propagator::new(grid);
    let m = linearize(&hologram);
    let (volume, trace) = solve(&propagator, &m, depth, &solver_cfg)?;
    io::write_volume(&dir.join("volume"), &volume, 1.0)?;
    std::fs::write(dir.join("trace.csv"), trace.to_csv())?;
    eprintln!(
        "{} after {} accepted iterations",
        if trace.converged { "converged" } else { "did not converge" },
        trace.records.len()
    );
    Ok(trace.converged)
}

fn cmd_analyze(cfg: &RunConfig, dir: &Path, volume_stem: &Path) -> Result<(), HoloError> {
    let (volume, _scale) = io::read_volume(volume_stem)?;
    let z_scale = volume.grid.pixel_pitch / volume.depth.dz;
    let intensity = max_intensity_curve(&volume);
    let gradient = max_gradient_curve(&volume, z_scale)?;
    std::fs::write(dir.join("max_intensity.csv"), intensity.to_csv())?;
    std::fs::write(dir.join("max_gradient.csv"), gradient.to_csv())?;

    // ground truth from the configured scene; curves-only if absent
    let true_slices: Vec<usize> = {
        let depth = volume.depth;
        cfg.scene
            .particles
            .iter()
            .filter_map(|&[_, _, z, _]| depth.snap(z).ok())
            .collect()
    };
    if true_slices.is_empty() {
        eprintln!("warning: no particles in config scene; skipping localization report");
    } else {
        let report = localization_report(&gradient, &true_slices, 5);
        std::fs::write(dir.join("localization.txt"), report.to_text())?;
    }

    if cfg.outputs.emit_png {
        let m = magnitude(&volume);
        let best = gradient
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        io::write_png_normalized(
            &dir.join(format!("slice_{best:03}.png")),
            &m.values.index_axis(ndarray::Axis(0), best).to_owned(),
        )?;
    }
    if cfg.outputs.emit_slices {
        let m = magnitude(&volume);
        for k in 0..volume.depth.nz {
            io::write_png_normalized(
                &dir.join(format!("slices/slice_{k:03}.png")),
                &m.values.index_axis(ndarray::Axis(0), k).to_owned(),
            )
            .or_else(|_| {
                std::fs::create_dir_all(dir.join("slices"))?;
                io::write_png_normalized(
                    &dir.join(format!("slices/slice_{k:03}.png")),
                    &m.values.index_axis(ndarray::Axis(0), k).to_owned(),
                )
            })?;
        }
    }
    Ok(())
}

fn run() -> Result<bool, HoloError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(common) => {
            let (cfg, text) = load_config(&common)?;
            let dir = out_dir(&cfg)?;
            cmd_simulate(&cfg, &text, &dir)?;
            Ok(true)
        }
        Command::Reconstruct { common, hologram } => {
            let (cfg, _) = load_config(&common)?;
            let dir = out_dir(&cfg)?;
            cmd_reconstruct(&cfg, &dir, &hologram)
        }
        Command::Analyze { common, volume } => {
            let (cfg, _) = load_config(&common)?;
            let dir = out_dir(&cfg)?;
            cmd_analyze(&cfg, &dir, &volume)?;
            Ok(true)
        }
        Command::Pipeline(common) => {
            let (cfg, text) = load_config(&common)?;
            let dir = out_dir(&cfg)?;
            cmd_simulate(&cfg, &text, &dir)?;
            let converged = cmd_reconstruct(&cfg, &dir, &dir.join("hologram"))?;
            cmd_analyze(&cfg, &dir, &dir.join("volume"))?;
            Ok(converged)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
