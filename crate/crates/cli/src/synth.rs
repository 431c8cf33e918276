use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::ValueEnum;
use ultron_core::synth::{generate, Motion, Shape, SynthConfig};

use crate::encode::write_atomic;
use crate::frames::{format_pattern, output_pattern, write_frames};
use crate::{output_format, OutputFormat, UsageError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShapeArg {
    Sphere,
    Cylinder,
    Slab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MotionArg {
    Translate,
    Accelerate,
    Bend,
    Twist,
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "sphere")]
    pub shape: ShapeArg,
    #[arg(long, default_value_t = 1)]
    pub frames: usize,
    #[arg(long, value_enum, default_value = "translate")]
    pub motion: MotionArg,
    /// Motion size: total drift for translate/accelerate, bend depth, or
    /// twist angle in radians.
    #[arg(long, default_value_t = 0.0)]
    pub amplitude: f64,
    /// Regenerate the tessellation every k frames.
    #[arg(long)]
    pub remesh_every: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Icosphere refinement level.
    #[arg(long, default_value_t = 3)]
    pub subdivisions: u32,
    /// Attach per-vertex colors.
    #[arg(long)]
    pub colors: bool,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Output pattern such as `seq/f_%04d.obj`, or a directory.
    #[arg(short, long)]
    pub output: String,
    /// Ground-truth motion CSV (default: `motion.csv` beside the frames).
    #[arg(long)]
    pub motion_csv: Option<PathBuf>,
}

pub fn run(args: SynthArgs) -> Result<()> {
    if args.frames == 0 {
        return Err(UsageError("--frames must be at least 1".into()).into());
    }
    if !args.amplitude.is_finite() {
        return Err(UsageError("--amplitude must be finite".into()).into());
    }
    if args.remesh_every == Some(0) {
        return Err(UsageError("--remesh-every must be at least 1".into()).into());
    }
    let cfg = SynthConfig {
        shape: match args.shape {
            ShapeArg::Sphere => Shape::Sphere,
            ShapeArg::Cylinder => Shape::Cylinder,
            ShapeArg::Slab => Shape::Slab,
        },
        frames: args.frames,
        motion: match args.motion {
            MotionArg::Translate => Motion::Translate,
            MotionArg::Accelerate => Motion::Accelerate,
            MotionArg::Bend => Motion::Bend,
            MotionArg::Twist => Motion::Twist,
        },
        amplitude: args.amplitude,
        remesh_every: args.remesh_every,
        seed: args.seed,
        subdivisions: args.subdivisions,
        colors: args.colors,
    };
    let seq = generate(&cfg);
    let format = output_format(args.format, &args.output);
    let pattern = output_pattern(&args.output, format)?;
    write_frames(&pattern, format, seq.frames.iter().enumerate())?;
    let csv = args.motion_csv.unwrap_or_else(|| {
        let first = PathBuf::from(format_pattern(&pattern, 0).unwrap_or_default());
        first.parent().unwrap_or(Path::new("")).join("motion.csv")
    });
    write_atomic(&csv, seq.motion_csv().as_bytes())?;
    eprintln!("wrote {} frames and {}", seq.frames.len(), csv.display());
    Ok(())
}
