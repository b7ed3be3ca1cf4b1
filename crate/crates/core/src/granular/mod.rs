//! XPBD solver for cohesive frictional regolith.

mod colliders;
mod hash;
mod ply;
mod solver;
mod spawn;

pub use colliders::{collide_sdf, ColliderSet, Heightfield, SdfGrid, ToolCollider};
pub use hash::{build_spatial_hash, brute_force_pairs, SpatialHash};
pub use ply::{read_ply_frame, write_ply_frame};
pub use solver::{
    median_speed, settle, xpbd_substep, GranularSolver, SettleParams, SettleReport, SolverParams,
    StepStats,
};
pub use spawn::{halfwidth_for, pyramid_slots, spawn_pyramid, SPAWN_SPACING};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Bulk properties shared by every particle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub friction: f64,
    /// Dimensionless adhesion scale; 0 disables cohesion.
    pub cohesion: f64,
    /// kg/m³
    pub density: f64,
}

impl Default for Material {
    fn default() -> Self {
        Self {
            friction: 0.9,
            cohesion: 0.1,
            density: 1500.0,
        }
    }
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if !(self.friction >= 0.0 && self.friction.is_finite()) {
            return Err(Error::config("friction", "must be finite and non-negative"));
        }
        if !(self.cohesion >= 0.0 && self.cohesion.is_finite()) {
            return Err(Error::config("cohesion", "must be finite and non-negative"));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(Error::config("density", "must be positive"));
        }
        Ok(())
    }
}

/// Single-radius particle population.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    pub x: Vec<Vec3>,
    pub v: Vec<Vec3>,
    /// Positions at the start of the latest substep.
    pub x_prev: Vec<Vec3>,
    pub inv_mass: Vec<f64>,
    pub radius: f64,
    pub material: Material,
}

impl ParticleSet {
    pub fn new(x: Vec<Vec3>, v: Vec<Vec3>, radius: f64, material: Material) -> Result<Self> {
        if x.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: v.len(),
            });
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::config("radius", "must be positive"));
        }
        material.validate()?;
        let w = 1.0 / Self::particle_mass(radius, material.density);
        Ok(Self {
            x_prev: x.clone(),
            inv_mass: vec![w; x.len()],
            x,
            v,
            radius,
            material,
        })
    }

    pub fn particle_mass(radius: f64, density: f64) -> f64 {
        density * 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.v.iter().map(|v| v.norm()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.x
            .iter()
            .chain(&self.v)
            .all(|p| p.iter().all(|c| c.is_finite()))
    }

    /// Hash of positions and velocities; equal states hash equal bit for bit.
    pub fn state_hash(&self) -> u64 {
        let mut bytes = Vec::with_capacity(self.len() * 48);
        for p in self.x.iter().chain(&self.v) {
            for c in p.iter() {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
        }
        crate::geom::fnv1a(&bytes)
    }
}
