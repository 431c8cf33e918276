//! Compression of temporally coherent triangle-mesh sequences whose topology
//! may change from frame to frame.
//!
//! The crate tracks vertices across frames ([`tracking`]), deforms a keyframe
//! onto later frames with per-vertex affine transforms ([`registration`]),
//! groups frames that a keyframe can stand in for into segments
//! ([`pipeline`]) and stores each segment with its connectivity coded once
//! and its vertex streams quantized and entropy coded ([`codec`]).

pub mod codec;
pub mod mesh;
pub mod pipeline;
pub mod registration;
pub mod synth;
pub mod tracking;

pub use codec::{decode_container, encode_container, CodecError, QuantizationParams};
pub use mesh::{Aabb, Mesh, MeshError, MeshFormat, Vec3};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineStats, QualityThresholds, Segment};
pub use registration::{register, RegistrationConfig, RegistrationReport};
pub use tracking::{CorrespondenceSet, DescriptorConfig, TrackedVertex};
