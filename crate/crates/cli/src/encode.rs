use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use ultron_core::codec::encode_container_with_stats;
use ultron_core::run_pipeline;

use crate::config::EncodeSettings;
use crate::frames::{load_mesh, resolve_inputs};

#[derive(Debug, clap::Args)]
pub struct EncodeArgs {
    /// Input frames: files, or printf-style patterns such as `f_%04d.obj`.
    pub inputs: Vec<String>,
    /// File listing one input frame per line, read before `inputs`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Container to write.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Per-frame statistics CSV (default: the output path with `.csv`).
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// TOML file with encoder settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: EncodeSettings,
}

/// Writes `bytes` next to `path` and renames it into place, so a failed run
/// never leaves a half-written file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

pub fn run(args: EncodeArgs) -> Result<()> {
    let file_settings = match &args.config {
        Some(p) => EncodeSettings::from_toml_file(p)?,
        None => EncodeSettings::default(),
    };
    let settings = args.settings.clone().over(file_settings);
    let params = settings.quantization()?;
    let pipeline = settings.pipeline()?;
    let inputs = resolve_inputs(&args.inputs, args.manifest.as_deref())?;
    info!("encoding {} frames", inputs.len());

    let frames = inputs.iter().map(|p| {
        info!("frame {}", p.display());
        load_mesh(p)
    });
    let (segments, stats) = run_pipeline(frames, &pipeline).context("running the keyframe pipeline")?;
    let encoded = encode_container_with_stats(&segments, &params).context("encoding the container")?;

    write_atomic(&args.output, &encoded.bytes)?;
    let stats_path = args.stats.unwrap_or_else(|| args.output.with_extension("csv"));
    write_atomic(&stats_path, stats.to_csv().as_bytes())?;

    let original: u64 = inputs.iter().filter_map(|p| fs::metadata(p).ok()).map(|m| m.len()).sum();
    eprintln!(
        "{} frames, {} segments, {} -> {} bytes",
        inputs.len(),
        segments.len(),
        original,
        encoded.bytes.len()
    );
    Ok(())
}
