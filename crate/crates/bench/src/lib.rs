//! Shared inputs for the benchmarks under `benches/`.

use ultron_core::synth::{generate, Motion, Shape, SynthConfig, SynthSequence};
use ultron_core::Segment;

/// A bending sphere, the workload used throughout the benches.
pub fn bending_sphere(frames: usize, subdivisions: u32) -> SynthSequence {
    generate(&SynthConfig {
        shape: Shape::Sphere,
        frames,
        motion: Motion::Bend,
        amplitude: 0.1,
        subdivisions,
        colors: true,
        ..Default::default()
    })
}

/// One segment holding every frame of `seq`, keyed on the first.
pub fn whole_segment(seq: &SynthSequence) -> Segment {
    let mut seg = Segment::new(seq.frames[0].clone(), 0);
    for (k, f) in seq.frames.iter().enumerate().skip(1) {
        seg.push(k, f.vertices.clone());
    }
    seg
}
