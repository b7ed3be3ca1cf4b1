//! Pyramid-formation particle spawning.

use super::{Material, ParticleSet};
use crate::error::Result;
use crate::geom::{SeededStream, Vec3};

/// Lattice spacing as a multiple of the particle diameter.
pub const SPAWN_SPACING: f64 = 1.05;

/// Slot centers of a square pyramid, apex first, then each lower layer in
/// row-major order.
///
/// The base layer has `floor(2·halfwidth / s) + 1` particles per side, where
/// `s = 2r·1.05`. Each layer up loses one particle per side and sits in the
/// hollows of the one below. When `n` exceeds the pyramid, further full base
/// layers are added underneath (the structure grows downward from a fixed apex).
pub fn pyramid_slots(n: usize, base_center: &Vec3, base_halfwidth: f64, radius: f64) -> Vec<Vec3> {
    let s = 2.0 * radius * SPAWN_SPACING;
    let base = ((2.0 * base_halfwidth / s).floor() as usize + 1).max(1);
    let dz_pyramid = s / std::f64::consts::SQRT_2;
    let apex_z = base_center.z + radius + (base - 1) as f64 * dz_pyramid;

    let mut out = Vec::with_capacity(n);
    let mut layer = 0usize;
    while out.len() < n {
        let (side, z) = if layer < base {
            (layer + 1, apex_z - layer as f64 * dz_pyramid)
        } else {
            let extra = layer - base + 1;
            (base, apex_z - (base - 1) as f64 * dz_pyramid - extra as f64 * s)
        };
        let half = 0.5 * (side - 1) as f64 * s;
        'rows: for iy in 0..side {
            for ix in 0..side {
                if out.len() == n {
                    break 'rows;
                }
                out.push(Vec3::new(
                    base_center.x - half + ix as f64 * s,
                    base_center.y - half + iy as f64 * s,
                    z,
                ));
            }
        }
        layer += 1;
    }
    out
}

/// Spawns `n` particles in a pyramid with velocities drawn from
/// U(−0.5, 0.5) m/s horizontally and U(−0.5, 0) m/s vertically.
pub fn spawn_pyramid(
    n: usize,
    base_center: &Vec3,
    base_halfwidth: f64,
    radius: f64,
    material: Material,
    rng: &mut SeededStream,
) -> Result<ParticleSet> {
    let x = pyramid_slots(n, base_center, base_halfwidth, radius);
    let v = (0..n)
        .map(|_| {
            let vx = rng.uniform(-0.5, 0.5);
            let vy = rng.uniform(-0.5, 0.5);
            let vz = rng.uniform(-0.5, 0.0);
            Vec3::new(vx, vy, vz)
        })
        .collect();
    ParticleSet::new(x, v, radius, material)
}

/// Smallest base half-width whose pyramid holds at least `n` particles.
pub fn halfwidth_for(n: usize, radius: f64) -> f64 {
    let s = 2.0 * radius * SPAWN_SPACING;
    let mut side = 1usize;
    let mut cap = 1usize;
    while cap < n {
        side += 1;
        cap += side * side;
    }
    0.5 * (side - 1) as f64 * s + 1e-9
}
