use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use ultron_core::mesh::{KdTree, Mesh};
use ultron_core::pipeline::symmetric_rms_distance;
use ultron_core::decode_container;

use crate::encode::write_atomic;
use crate::frames::{load_mesh, resolve_inputs};
use crate::UsageError;

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Original frames: files or printf-style patterns.
    #[arg(long, num_args = 1..)]
    pub original: Vec<String>,
    /// File listing the original frames, one per line.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// A `.ultn` container, or decoded frames as a pattern.
    #[arg(long)]
    pub decoded: String,
    /// Compressed size to report when `--decoded` is a pattern.
    #[arg(long)]
    pub compressed: Option<PathBuf>,
    /// Summary CSV (default: stdout).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Per-frame CSV.
    #[arg(long)]
    pub per_frame: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameQuality {
    /// Symmetric RMS point-to-surface distance, model units.
    pub rms: f64,
    pub psnr_db: f64,
    /// Squared color differences summed over decoded vertices, and their
    /// count; absent unless both frames have colors.
    pub color: Option<(f64, usize)>,
}

/// Quality of one decoded frame against its original. The peak is the
/// original's bounding-box diagonal.
pub fn frame_quality(original: &Mesh, decoded: &Mesh) -> FrameQuality {
    let rms = symmetric_rms_distance(decoded, original);
    let diag = original.bounding_box().diagonal();
    let psnr_db = if rms == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (diag / rms).log10()
    };
    let color = match (&original.colors, &decoded.colors) {
        (Some(oc), Some(dc)) if !original.vertices.is_empty() => {
            let tree = KdTree::new(&original.vertices);
            let sum = decoded
                .vertices
                .iter()
                .zip(dc)
                .filter_map(|(p, c)| tree.nearest(p).map(|(j, _)| (c - oc[j as usize]).norm_squared()))
                .sum();
            Some((sum, decoded.vertices.len()))
        }
        _ => None,
    };
    FrameQuality { rms, psnr_db, color }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub sequence: String,
    pub frames: Vec<FrameQuality>,
    pub original_bytes: u64,
    pub compressed_bytes: Option<u64>,
    pub segment_count: Option<usize>,
    pub keyframes: Option<Vec<usize>>,
}

impl EvalReport {
    /// Mean PSNR over frames with nonzero error; infinite only when every
    /// frame is exact.
    pub fn mean_psnr_db(&self) -> f64 {
        let finite: Vec<f64> = self.frames.iter().map(|f| f.psnr_db).filter(|p| p.is_finite()).collect();
        if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        }
    }

    /// RMS color difference over all decoded vertices of all frames.
    pub fn color_rms(&self) -> Option<f64> {
        let (sum, n) = self
            .frames
            .iter()
            .map(|f| f.color)
            .collect::<Option<Vec<_>>>()?
            .into_iter()
            .fold((0.0, 0), |(s, n), (a, b)| (s + a, n + b));
        (n > 0).then(|| (sum / n as f64).sqrt())
    }

    pub fn ratio(&self) -> Option<f64> {
        self.compressed_bytes
            .filter(|&c| c > 0)
            .map(|c| self.original_bytes as f64 / c as f64)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let mut out = String::from(
            "sequence,frames,original-bytes,compressed-bytes,ratio,geometry-psnr-db,color-rms,segment-count,keyframes\n",
        );
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            self.sequence.replace(',', ";"),
            self.frames.len(),
            self.original_bytes,
            opt(self.compressed_bytes.map(|c| c.to_string())),
            opt(self.ratio().map(|r| format!("{r:.4}"))),
            fmt_db(self.mean_psnr_db()),
            opt(self.color_rms().map(|c| c.to_string())),
            opt(self.segment_count.map(|c| c.to_string())),
            opt(self
                .keyframes
                .as_ref()
                .map(|k| k.iter().map(ToString::to_string).collect::<Vec<_>>().join(";"))),
        );
        out
    }

    pub fn per_frame_csv(&self) -> String {
        let mut out = String::from("frame,rms-distance,geometry-psnr-db,color-rms\n");
        for (i, f) in self.frames.iter().enumerate() {
            let color = f.color.filter(|c| c.1 > 0).map(|(s, n)| (s / n as f64).sqrt());
            let _ = writeln!(
                out,
                "{i},{},{},{}",
                f.rms,
                fmt_db(f.psnr_db),
                color.map(|c| c.to_string()).unwrap_or_default()
            );
        }
        out
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

fn file_size(p: &Path) -> Result<u64> {
    Ok(fs::metadata(p).with_context(|| format!("reading {}", p.display()))?.len())
}

pub fn run(args: EvalArgs) -> Result<()> {
    let originals = resolve_inputs(&args.original, args.manifest.as_deref())?;
    let is_container = Path::new(&args.decoded)
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ultn"));

    let (decoded, compressed_bytes, segment_count, keyframes) = if is_container {
        let bytes = fs::read(&args.decoded).with_context(|| format!("reading {}", args.decoded))?;
        let segments = decode_container(&bytes).with_context(|| format!("decoding {}", args.decoded))?;
        let keyframes = segments.iter().map(|d| d.segment.frame_ids[0]).collect();
        let frames: Vec<Mesh> = segments
            .iter()
            .flat_map(|d| (0..d.segment.frame_count()).map(|k| d.segment.frame_mesh(k)))
            .collect();
        (frames, Some(bytes.len() as u64), Some(segments.len()), Some(keyframes))
    } else {
        let files = resolve_inputs(std::slice::from_ref(&args.decoded), None)?;
        let frames = files
            .par_iter()
            .map(|p| load_mesh(p).with_context(|| format!("reading {}", p.display())))
            .collect::<Result<Vec<_>>>()?;
        let compressed = args.compressed.as_deref().map(file_size).transpose()?;
        (frames, compressed, None, None)
    };
    if decoded.len() != originals.len() {
        return Err(UsageError(format!(
            "{} original frames but {} decoded frames",
            originals.len(),
            decoded.len()
        ))
        .into());
    }

    let frames = originals
        .par_iter()
        .zip(&decoded)
        .map(|(path, dec)| {
            let orig = load_mesh(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(frame_quality(&orig, dec))
        })
        .collect::<Result<Vec<_>>>()?;
    let original_bytes = originals.iter().map(|p| file_size(p)).sum::<Result<u64>>()?;
    let sequence = match &args.manifest {
        Some(m) => m.display().to_string(),
        None => args.original.join(" "),
    };
    let report = EvalReport {
        sequence,
        frames,
        original_bytes,
        compressed_bytes,
        segment_count,
        keyframes,
    };

    match &args.csv {
        Some(p) => write_atomic(p, report.to_csv().as_bytes())?,
        None => print!("{}", report.to_csv()),
    }
    if let Some(p) = &args.per_frame {
        write_atomic(p, report.per_frame_csv().as_bytes())?;
    }
    Ok(())
}
