//! Encoder settings: defaults, then a TOML file, then command-line flags.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;
use ultron_core::pipeline::PipelineConfig;
use ultron_core::tracking::{DescriptorConfig, DescriptorKind};
use ultron_core::QuantizationParams;

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Descriptor {
    Identity,
    NormalGated,
}

/// Every tunable the encoder reads. Fields left `None` keep their default.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, clap::Args)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct EncodeSettings {
    /// Position quantization bits.
    #[arg(long)]
    pub qp: Option<u8>,
    /// UV quantization bits.
    #[arg(long)]
    pub qt: Option<u8>,
    /// Normal quantization bits.
    #[arg(long)]
    pub qn: Option<u8>,
    /// Largest accepted RMS surface distance, as a fraction of the frame's
    /// bounding-box diagonal.
    #[arg(long)]
    pub geometry_tol: Option<f64>,
    /// Largest accepted RMS color distance (RGB in [0, 1]).
    #[arg(long)]
    pub color_tol: Option<f64>,
    /// Smoothness weight.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Initial landmark weight.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Translation weight inside the smoothness term.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum)]
    pub descriptor: Option<Descriptor>,
    /// Normal angle limit in degrees for the normal-gated descriptor.
    #[arg(long)]
    pub normal_angle: Option<f64>,
    /// Tracking residual cap, as a fraction of the frame's diagonal.
    #[arg(long)]
    pub max_residual: Option<f64>,
    /// Recompute normals at decode time instead of storing them.
    #[arg(long)]
    #[serde(default)]
    pub recompute_normals: bool,
}

impl EncodeSettings {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }

    /// `self` with every unset field taken from `base`.
    pub fn over(self, base: EncodeSettings) -> EncodeSettings {
        EncodeSettings {
            qp: self.qp.or(base.qp),
            qt: self.qt.or(base.qt),
            qn: self.qn.or(base.qn),
            geometry_tol: self.geometry_tol.or(base.geometry_tol),
            color_tol: self.color_tol.or(base.color_tol),
            alpha: self.alpha.or(base.alpha),
            beta: self.beta.or(base.beta),
            gamma: self.gamma.or(base.gamma),
            descriptor: self.descriptor.or(base.descriptor),
            normal_angle: self.normal_angle.or(base.normal_angle),
            max_residual: self.max_residual.or(base.max_residual),
            recompute_normals: self.recompute_normals || base.recompute_normals,
        }
    }

    pub fn quantization(&self) -> Result<QuantizationParams, UsageError> {
        let d = QuantizationParams::default();
        let q = QuantizationParams {
            position_bits: self.qp.unwrap_or(d.position_bits),
            uv_bits: self.qt.unwrap_or(d.uv_bits),
            normal_bits: self.qn.unwrap_or(d.normal_bits),
            store_normals: !self.recompute_normals,
        };
        q.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(q)
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, UsageError> {
        let mut cfg = PipelineConfig::default();
        let t = &mut cfg.thresholds;
        t.geometry_tol = self.geometry_tol.unwrap_or(t.geometry_tol);
        t.color_tol = self.color_tol.unwrap_or(t.color_tol);
        let r = &mut cfg.registration;
        r.alpha = self.alpha.unwrap_or(r.alpha);
        r.beta = self.beta.unwrap_or(r.beta);
        r.gamma = self.gamma.unwrap_or(r.gamma);
        cfg.descriptor = DescriptorConfig {
            kind: match self.descriptor {
                Some(Descriptor::NormalGated) => DescriptorKind::NormalGated,
                Some(Descriptor::Identity) | None => DescriptorKind::Identity,
            },
            normal_angle_limit: self.normal_angle.unwrap_or(cfg.descriptor.normal_angle_limit),
        };
        cfg.max_residual = self.max_residual.unwrap_or(cfg.max_residual);

        if !(t.geometry_tol >= 0.0 && t.color_tol >= 0.0) {
            return Err(UsageError("tolerances must be >= 0".into()));
        }
        if !cfg.descriptor.is_valid() {
            return Err(UsageError("normal angle must lie in (0, 180]".into()));
        }
        if !(cfg.max_residual >= 0.0) {
            return Err(UsageError("max residual must be >= 0".into()));
        }
        cfg.registration.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file: EncodeSettings = toml::from_str("qp = 12\ngeometry-tol = 0.01\ndescriptor = \"normal-gated\"").unwrap();
        let flags = EncodeSettings {
            qp: Some(9),
            ..Default::default()
        };
        let s = flags.over(file);
        assert_eq!(s.qp, Some(9));
        assert_eq!(s.geometry_tol, Some(0.01));
        assert_eq!(s.pipeline().unwrap().descriptor.kind, DescriptorKind::NormalGated);
        assert_eq!(s.quantization().unwrap().position_bits, 9);
    }

    #[test]
    fn unknown_keys_and_bad_ranges_are_rejected() {
        assert!(toml::from_str::<EncodeSettings>("qpp = 3").is_err());
        let s = EncodeSettings {
            qp: Some(0),
            ..Default::default()
        };
        assert!(s.quantization().is_err());
        let s = EncodeSettings {
            gamma: Some(0.0),
            ..Default::default()
        };
        assert!(s.pipeline().is_err());
    }
}
