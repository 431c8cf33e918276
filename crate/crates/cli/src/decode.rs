use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use ultron_core::decode_container;
use ultron_core::mesh::Mesh;

use crate::frames::{output_pattern, write_frames};
use crate::{output_format, OutputFormat};

#[derive(Debug, clap::Args)]
pub struct DecodeArgs {
    /// Container to read.
    pub input: PathBuf,
    /// Output pattern such as `out/f_%04d.obj`, or a directory.
    #[arg(short, long)]
    pub output: String,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
}

/// Every frame of a container, in order.
pub fn decode_frames(bytes: &[u8]) -> Result<Vec<Mesh>> {
    let segments = decode_container(bytes)?;
    Ok(segments
        .iter()
        .flat_map(|d| (0..d.segment.frame_count()).map(|k| d.segment.frame_mesh(k)))
        .collect())
}

pub fn run(args: DecodeArgs) -> Result<()> {
    let bytes = fs::read(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    // Decode everything first: a corrupt container writes nothing.
    let frames = decode_frames(&bytes).with_context(|| format!("decoding {}", args.input.display()))?;
    let format = output_format(args.format, &args.output);
    let pattern = output_pattern(&args.output, format)?;
    let written = write_frames(&pattern, format, frames.iter().enumerate())?;
    eprintln!("wrote {} frames", written.len());
    Ok(())
}
