//! Frame lists: printf-style patterns, manifests and mesh file I/O.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ultron_core::mesh::{parse_mesh, serialize_mesh, Mesh, MeshError, MeshFormat};

use crate::UsageError;

/// One `%d`-style conversion inside a pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Conversion {
    start: usize,
    end: usize,
    width: usize,
    zero_pad: bool,
}

/// Finds the single integer conversion (`%d`, `%4d`, `%04d`) in `pattern`.
/// `%%` is a literal percent sign.
fn find_conversion(pattern: &str) -> Result<Option<Conversion>, UsageError> {
    let bytes = pattern.as_bytes();
    let mut found = None;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'%' {
            i += 1;
            continue;
        }
        if bytes.get(i + 1) == Some(&b'%') {
            i += 2;
            continue;
        }
        let mut j = i + 1;
        let zero_pad = bytes.get(j) == Some(&b'0');
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if bytes.get(j) != Some(&b'd') {
            return Err(UsageError(format!("unsupported conversion in pattern {pattern:?}")));
        }
        if found.is_some() {
            return Err(UsageError(format!("pattern {pattern:?} has more than one %d")));
        }
        let width = pattern[i + 1..j].parse().unwrap_or(0);
        found = Some(Conversion {
            start: i,
            end: j + 1,
            width,
            zero_pad,
        });
        i = j + 1;
    }
    Ok(found)
}

pub fn is_pattern(s: &str) -> bool {
    matches!(find_conversion(s), Ok(Some(_)))
}

/// Substitutes `index` into `pattern`.
pub fn format_pattern(pattern: &str, index: usize) -> Result<String, UsageError> {
    let Some(c) = find_conversion(pattern)? else {
        return Err(UsageError(format!("pattern {pattern:?} has no %d")));
    };
    let number = if c.zero_pad {
        format!("{index:0width$}", width = c.width)
    } else {
        format!("{index:width$}", width = c.width)
    };
    let unescape = |s: &str| s.replace("%%", "%");
    Ok(format!("{}{}{}", unescape(&pattern[..c.start]), number, unescape(&pattern[c.end..])))
}

/// Existing files matching `pattern`, starting at index 0 (or 1 when 0 is
/// missing) and stopping at the first gap.
fn expand_pattern(pattern: &str) -> Result<Vec<PathBuf>, UsageError> {
    let exists = |i| -> Result<Option<PathBuf>, UsageError> {
        let p = PathBuf::from(format_pattern(pattern, i)?);
        Ok(p.is_file().then_some(p))
    };
    let first = if exists(0)?.is_some() { 0 } else { 1 };
    let mut out = Vec::new();
    let mut i = first;
    while let Some(p) = exists(i)? {
        out.push(p);
        i += 1;
    }
    if out.is_empty() {
        return Err(UsageError(format!("no files match {pattern:?}")));
    }
    Ok(out)
}

/// Reads a manifest: one path per line, blank lines and `#` comments
/// ignored, relative paths taken from the manifest's directory.
fn read_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

/// Resolves the ordered input frame list.
pub fn resolve_inputs(inputs: &[String], manifest: Option<&Path>) -> Result<Vec<PathBuf>> {
    let mut files = match manifest {
        Some(m) => read_manifest(m)?,
        None => Vec::new(),
    };
    for input in inputs {
        if is_pattern(input) {
            files.extend(expand_pattern(input)?);
        } else {
            files.push(PathBuf::from(input));
        }
    }
    if files.is_empty() {
        bail!(UsageError("no input frames given".into()));
    }
    if let Some(missing) = files.iter().find(|f| !f.is_file()) {
        bail!(UsageError(format!("input frame {} does not exist", missing.display())));
    }
    Ok(files)
}

pub fn load_mesh(path: &Path) -> Result<Mesh, MeshError> {
    let bytes = fs::read(path)?;
    let format = MeshFormat::detect(path, &bytes)
        .ok_or_else(|| MeshError::Unsupported(format!("cannot tell the format of {}", path.display())))?;
    parse_mesh(&bytes, format)
}

/// Output file names: `pattern` itself when it holds a `%d`, else files
/// named `frame_NNNN.<ext>` inside the directory `pattern`.
pub fn output_pattern(pattern: &str, format: MeshFormat) -> Result<String> {
    if is_pattern(pattern) {
        return Ok(pattern.to_owned());
    }
    let dir = Path::new(pattern);
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let escaped = dir.to_string_lossy().replace('%', "%%");
    let name = format!("frame_%04d.{}", format.extension());
    Ok(Path::new(&escaped).join(name).to_string_lossy().into_owned())
}

/// Writes frames to `pattern`, removing everything written so far if any
/// write fails.
pub fn write_frames<'a>(
    pattern: &str,
    format: MeshFormat,
    frames: impl IntoIterator<Item = (usize, &'a Mesh)>,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let result = (|| -> Result<()> {
        for (index, mesh) in frames {
            let path = PathBuf::from(format_pattern(pattern, index)?);
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&path, serialize_mesh(mesh, format)).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        Ok(())
    })();
    if let Err(e) = result {
        for p in &written {
            let _ = fs::remove_file(p);
        }
        return Err(e);
    }
    Ok(written)
}
