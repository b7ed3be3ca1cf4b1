//! Fixed evaluation tools never seen during training.

use std::ops::Range;

use super::spec::{sample_tool_spec, ToolSpec};
use crate::geom::SeededStream;

/// Tool stream seeds available to training-time sampling.
pub const TRAINING_TOOL_SEEDS: Range<u64> = 0..(1 << 32);

/// Stream seeds of the procedural held-out tools; outside the training range.
pub const RESERVED_TOOL_SEEDS: [u64; 4] = [
    (1 << 32) + 0x1a2b,
    (1 << 32) + 0x3c4d,
    (1 << 32) + 0x5e6f,
    (1 << 32) + 0x7081,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeldoutOrigin {
    ReservedSeed(u64),
    Manual,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeldoutTool {
    pub name: &'static str,
    pub origin: HeldoutOrigin,
    pub spec: ToolSpec,
}

/// Spec drawn from a tool stream seed, as used for training tools.
pub fn tool_spec_from_seed(seed: u64) -> ToolSpec {
    sample_tool_spec(&mut SeededStream::new(seed))
}

/// The 8 held-out tools: 4 procedural variants, then 4 manual designs.
pub fn heldout_set() -> Vec<HeldoutTool> {
    let procedural = RESERVED_TOOL_SEEDS.iter().enumerate().map(|(i, &seed)| HeldoutTool {
        name: ["procedural-a", "procedural-b", "procedural-c", "procedural-d"][i],
        origin: HeldoutOrigin::ReservedSeed(seed),
        spec: tool_spec_from_seed(seed),
    });
    let base = ToolSpec::default();
    let manual = [
        (
            "wide-scoop",
            ToolSpec {
                width: 0.24,
                depth: 0.045,
                length: 0.14,
                side_wall_flare_angle: 0.15,
                taper_ratio: 1.0,
                lip_angle: 0.15,
                lip_length: 0.025,
                ..base.clone()
            },
        ),
        (
            "narrow-toothed-bucket",
            ToolSpec {
                width: 0.11,
                depth: 0.065,
                length: 0.12,
                wall_thickness: 0.006,
                bottom_curvature_radius: 0.008,
                back_curvature_radius: 0.1,
                side_wall_flare_angle: 0.02,
                taper_ratio: 0.95,
                side_wall_taper: 0.1,
                teeth_count: 5,
                tooth_length: 0.02,
                tooth_base_width: 0.7,
                tooth_tip_sharpness: 0.9,
                serration_amplitude: 0.0008,
                serration_frequency: 150.0,
                ..base.clone()
            },
        ),
        (
            "blunt-worn-scoop",
            ToolSpec {
                width: 0.17,
                depth: 0.04,
                lip_edge_radius: 0.0015,
                edge_bluntness_radius: 0.004,
                dent_noise_amplitude: 0.0015,
                dent_noise_frequency: 30.0,
                dent_noise_octaves: 3,
                erosion_depth: 0.0015,
                deterioration: 0.9,
                seed: 77,
                ..base.clone()
            },
        ),
        (
            "asymmetric-damaged-scoop",
            ToolSpec {
                width: 0.15,
                teeth_count: 4,
                tooth_missing_mask: 0b0100,
                tooth_spacing_jitter: 0.2,
                deterioration: 0.7,
                asymmetric_wear: 0.9,
                damage_notch_depth: 0.006,
                damage_notch_position: 0.5,
                damage_notch_width: 0.025,
                mount_tilt_yaw: 0.1,
                mount_tilt_roll: -0.08,
                seed: 1234,
                ..base
            },
        ),
    ]
    .into_iter()
    .map(|(name, spec)| HeldoutTool {
        name,
        origin: HeldoutOrigin::Manual,
        spec,
    });
    procedural.chain(manual).collect()
}
