//! Rigid collision targets: terrain heightfield, ground plane and tool SDF.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Pose, Vec3};

/// Regular grid of terrain heights; node `(ix, iy)` sits at `origin + spacing·(ix, iy)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heightfield {
    pub nx: usize,
    pub ny: usize,
    /// m
    pub spacing: f64,
    /// World xy of node (0, 0), m.
    pub origin: [f64; 2],
    /// Row-major, `heights[iy * nx + ix]`, m.
    pub heights: Vec<f64>,
}

impl Heightfield {
    pub fn flat(nx: usize, ny: usize, spacing: f64, origin: [f64; 2], z: f64) -> Self {
        Self {
            nx,
            ny,
            spacing,
            origin,
            heights: vec![z; nx * ny],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 || self.heights.len() != self.nx * self.ny {
            return Err(Error::config("heightfield", "need at least 2x2 nodes matching heights"));
        }
        if !(self.spacing > 0.0) || self.heights.iter().any(|h| !h.is_finite()) {
            return Err(Error::config("heightfield", "spacing and heights must be finite"));
        }
        Ok(())
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.heights[iy * self.nx + ix]
    }

    pub fn extent(&self) -> [f64; 2] {
        [
            self.spacing * (self.nx - 1) as f64,
            self.spacing * (self.ny - 1) as f64,
        ]
    }

    /// Bilinear height and its gradient, or `None` outside the grid.
    pub fn sample(&self, x: f64, y: f64) -> Option<(f64, f64, f64)> {
        let u = (x - self.origin[0]) / self.spacing;
        let v = (y - self.origin[1]) / self.spacing;
        let max_u = (self.nx - 1) as f64;
        let max_v = (self.ny - 1) as f64;
        if !(u >= 0.0 && v >= 0.0 && u <= max_u && v <= max_v) {
            return None;
        }
        let ix = (u.floor() as usize).min(self.nx - 2);
        let iy = (v.floor() as usize).min(self.ny - 2);
        let fu = u - ix as f64;
        let fv = v - iy as f64;
        let h00 = self.at(ix, iy);
        let h10 = self.at(ix + 1, iy);
        let h01 = self.at(ix, iy + 1);
        let h11 = self.at(ix + 1, iy + 1);
        let h = h00 * (1.0 - fu) * (1.0 - fv) + h10 * fu * (1.0 - fv) + h01 * (1.0 - fu) * fv
            + h11 * fu * fv;
        let dhdu = (h10 - h00) * (1.0 - fv) + (h11 - h01) * fv;
        let dhdv = (h01 - h00) * (1.0 - fu) + (h11 - h10) * fu;
        Some((h, dhdu / self.spacing, dhdv / self.spacing))
    }

    pub fn height(&self, x: f64, y: f64) -> Option<f64> {
        self.sample(x, y).map(|(h, _, _)| h)
    }
}

/// Signed distances on a regular lattice, negative inside. Stored as f32.
#[derive(Clone, Debug, PartialEq)]
pub struct SdfGrid {
    pub dims: [usize; 3],
    /// m
    pub voxel: f64,
    /// Local position of node (0, 0, 0), m.
    pub origin: Vec3,
    /// `values[(iz * ny + iy) * nx + ix]`
    pub values: Vec<f32>,
}

impl SdfGrid {
    pub fn from_fn(origin: Vec3, dims: [usize; 3], voxel: f64, f: impl Fn(&Vec3) -> f64) -> Self {
        let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for iz in 0..dims[2] {
            for iy in 0..dims[1] {
                for ix in 0..dims[0] {
                    let p = origin + Vec3::new(ix as f64, iy as f64, iz as f64) * voxel;
                    values.push(f(&p) as f32);
                }
            }
        }
        Self {
            dims,
            voxel,
            origin,
            values,
        }
    }

    pub fn node(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        self.origin + Vec3::new(ix as f64, iy as f64, iz as f64) * self.voxel
    }

    fn value(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.values[(iz * self.dims[1] + iy) * self.dims[0] + ix] as f64
    }

    /// Local-frame bounds covered by the lattice.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let hi = self.node(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1);
        (self.origin, hi)
    }

    /// Trilinear distance and its gradient; `None` outside the lattice.
    pub fn sample(&self, p: &Vec3) -> Option<(f64, Vec3)> {
        let g = (p - self.origin) / self.voxel;
        let mut idx = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let max = (self.dims[a] - 1) as f64;
            if !(g[a] >= 0.0 && g[a] <= max) || self.dims[a] < 2 {
                return None;
            }
            let i = (g[a].floor() as usize).min(self.dims[a] - 2);
            idx[a] = i;
            frac[a] = g[a] - i as f64;
        }
        let [ix, iy, iz] = idx;
        let [fx, fy, fz] = frac;
        let c000 = self.value(ix, iy, iz);
        let c100 = self.value(ix + 1, iy, iz);
        let c010 = self.value(ix, iy + 1, iz);
        let c110 = self.value(ix + 1, iy + 1, iz);
        let c001 = self.value(ix, iy, iz + 1);
        let c101 = self.value(ix + 1, iy, iz + 1);
        let c011 = self.value(ix, iy + 1, iz + 1);
        let c111 = self.value(ix + 1, iy + 1, iz + 1);
        let c00 = c000 + (c100 - c000) * fx;
        let c10 = c010 + (c110 - c010) * fx;
        let c01 = c001 + (c101 - c001) * fx;
        let c11 = c011 + (c111 - c011) * fx;
        let c0 = c00 + (c10 - c00) * fy;
        let c1 = c01 + (c11 - c01) * fy;
        let d = c0 + (c1 - c0) * fz;

        let dx0 = (c100 - c000) * (1.0 - fy) + (c110 - c010) * fy;
        let dx1 = (c101 - c001) * (1.0 - fy) + (c111 - c011) * fy;
        let gx = dx0 * (1.0 - fz) + dx1 * fz;
        let gy = (c10 - c00) * (1.0 - fz) + (c11 - c01) * fz;
        let gz = c1 - c0;
        Some((d, Vec3::new(gx, gy, gz) / self.voxel))
    }

    pub fn distance(&self, p: &Vec3) -> Option<f64> {
        self.sample(p).map(|(d, _)| d)
    }
}

/// Positional correction pushing a sphere of radius `r` at world point `x`
/// out of the SDF placed at `transform`. Zero when clear or off-grid.
pub fn collide_sdf(x: &Vec3, r: f64, sdf: &SdfGrid, transform: &Pose) -> Vec3 {
    let local = transform.inverse_transform_point(x);
    match sdf.sample(&local) {
        Some((phi, grad)) if phi < r => {
            let n = grad.norm();
            if n < 1e-12 {
                return Vec3::zeros();
            }
            transform.transform_vector(&(grad * ((r - phi) / n)))
        }
        _ => Vec3::zeros(),
    }
}

/// Tool geometry moving rigidly from `start` to `end` over one physics step.
#[derive(Clone, Debug)]
pub struct ToolCollider {
    pub sdf: Arc<SdfGrid>,
    pub start: Pose,
    pub end: Pose,
    /// World point torques are reported about (the end-effector origin).
    pub reference: Vec3,
}

impl ToolCollider {
    pub fn stationary(sdf: Arc<SdfGrid>, pose: Pose) -> Self {
        Self {
            sdf,
            start: pose,
            end: pose,
            reference: pose.position,
        }
    }

    /// Pose at fraction `s` of the step (linear position, spherical rotation).
    pub fn pose_at(&self, s: f64) -> Pose {
        if s <= 0.0 {
            return self.start;
        }
        if s >= 1.0 {
            return self.end;
        }
        Pose::new(
            self.start.position.lerp(&self.end.position, s),
            self.start.orientation.slerp(&self.end.orientation, s),
        )
    }
}

/// Everything particles can collide with besides each other.
#[derive(Clone, Debug)]
pub struct ColliderSet {
    pub terrain: Option<Heightfield>,
    /// Height of the flat plane used where there is no terrain, m.
    pub ground_z: f64,
    pub tool: Option<ToolCollider>,
}

impl Default for ColliderSet {
    fn default() -> Self {
        Self::ground(0.0)
    }
}

impl ColliderSet {
    pub fn ground(z: f64) -> Self {
        Self {
            terrain: None,
            ground_z: z,
            tool: None,
        }
    }

    /// Outward normal and signed clearance of a point above the terrain or plane.
    pub(crate) fn ground_contact(&self, p: &Vec3) -> (Vec3, f64) {
        if let Some((h, hx, hy)) = self.terrain.as_ref().and_then(|t| t.sample(p.x, p.y)) {
            let n = Vec3::new(-hx, -hy, 1.0).normalize();
            return (n, (p.z - h) * n.z);
        }
        (Vec3::z(), p.z - self.ground_z)
    }
}
