//! Ray-cast depth images of particles, tool and terrain.
//!
//! Cameras use the x-right, y-down, z-forward convention. Pixel `(i, j)`
//! casts its ray through image coordinates `(i, j)` exactly, so with the
//! principal point at `(w/2, h/2)` the pixel `(w/2, h/2)` looks straight down
//! the optical axis. Depth is the distance along the ray.

use rayon::prelude::*;

use super::config::CameraConfig;
use crate::geom::{Mat3, Pose, Vec3};
use crate::granular::Heightfield;
use crate::procgen::TriangleBvh;

#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, m.
    pub data: Vec<f32>,
}

impl DepthImage {
    pub fn at(&self, i: usize, j: usize) -> f32 {
        self.data[j * self.width + i]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    /// Camera frame in the world.
    pub pose: Pose,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub far: f64,
}

impl Camera {
    /// Square-pixel camera at `eye` looking at `target` with world z up.
    pub fn look_at(eye: Vec3, target: Vec3, fov_deg: f64, width: usize, height: usize, far: f64) -> Self {
        let z = (target - eye).normalize();
        let up = if z.cross(&Vec3::z()).norm() < 1e-9 { Vec3::y() } else { Vec3::z() };
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let r = Mat3::from_columns(&[x, y, z]);
        let f = 0.5 * width as f64 / (0.5 * fov_deg.to_radians()).tan();
        Self {
            pose: Pose::from_rotation_matrix(eye, &r),
            fx: f,
            fy: f,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            width,
            height,
            far,
        }
    }

    /// Unit world direction of pixel `(i, j)`.
    pub fn ray(&self, i: usize, j: usize) -> Vec3 {
        let local = Vec3::new((i as f64 - self.cx) / self.fx, (j as f64 - self.cy) / self.fy, 1.0);
        self.pose.transform_vector(&local.normalize())
    }
}

/// The two workspace cameras around `center`.
pub fn workspace_cameras(cfg: &CameraConfig, center: &Vec3) -> Vec<Camera> {
    let pitch = cfg.pitch_deg.to_radians();
    cfg.azimuths_deg
        .iter()
        .map(|az| {
            let az = az.to_radians();
            let eye = center
                + cfg.distance * Vec3::new(pitch.cos() * az.cos(), pitch.cos() * az.sin(), pitch.sin());
            Camera::look_at(eye, *center, cfg.fov_deg, cfg.width, cfg.height, cfg.far)
        })
        .collect()
}

/// Scene contents; every part is optional.
#[derive(Clone, Copy, Default)]
pub struct Scene<'a> {
    pub spheres: Option<(&'a [Vec3], f64)>,
    pub tool: Option<(&'a TriangleBvh, Pose)>,
    pub terrain: Option<&'a Heightfield>,
    /// Plane used outside the terrain.
    pub ground_z: Option<f64>,
}

/// Uniform grid over sphere bounds for ray traversal.
struct SphereGrid<'a> {
    centers: &'a [Vec3],
    r: f64,
    lo: Vec3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    items: Vec<u32>,
}

const MAX_GRID_CELLS: usize = 1 << 21;

impl<'a> SphereGrid<'a> {
    fn new(centers: &'a [Vec3], r: f64) -> Option<Self> {
        if centers.is_empty() {
            return None;
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for c in centers {
            lo = lo.inf(c);
            hi = hi.sup(c);
        }
        lo -= Vec3::repeat(r);
        hi += Vec3::repeat(r);
        let ext = hi - lo;
        let mut cell = (2.0 * r).max(ext.max() / 256.0);
        let dims = loop {
            let d = [0, 1, 2].map(|k| ((ext[k] / cell).ceil() as usize).max(1));
            if d[0] * d[1] * d[2] <= MAX_GRID_CELLS {
                break d;
            }
            cell *= 1.5;
        };
        let index = |p: &Vec3, k: usize| (((p[k] - lo[k]) / cell).floor().max(0.0) as usize).min(dims[k] - 1);
        let cells_of = |c: &Vec3| {
            let a = c - Vec3::repeat(r);
            let b = c + Vec3::repeat(r);
            let (x0, x1) = (index(&a, 0), index(&b, 0));
            let (y0, y1) = (index(&a, 1), index(&b, 1));
            let (z0, z1) = (index(&a, 2), index(&b, 2));
            (z0..=z1).flat_map(move |z| {
                (y0..=y1).flat_map(move |y| (x0..=x1).map(move |x| (z * dims[1] + y) * dims[0] + x))
            })
        };
        let n_cells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0u32; n_cells + 1];
        for c in centers {
            for id in cells_of(c) {
                counts[id + 1] += 1;
            }
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; counts[n_cells] as usize];
        for (i, c) in centers.iter().enumerate() {
            for id in cells_of(c) {
                items[fill[id] as usize] = i as u32;
                fill[id] += 1;
            }
        }
        Some(Self {
            centers,
            r,
            lo,
            cell,
            dims,
            starts: counts,
            items,
        })
    }

    fn hit_sphere(&self, o: &Vec3, d: &Vec3, c: &Vec3) -> Option<f64> {
        let oc = o - c;
        let b = d.dot(&oc);
        let disc = b * b - (oc.norm_squared() - self.r * self.r);
        if disc < 0.0 {
            return None;
        }
        let t = -b - disc.sqrt();
        (t >= 0.0).then_some(t)
    }

    /// Nearest sphere hit by 3D DDA through the grid.
    fn cast(&self, o: &Vec3, d: &Vec3) -> Option<f64> {
        let hi = self.lo + Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.cell;
        let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
        for k in 0..3 {
            if d[k].abs() < 1e-300 {
                if o[k] < self.lo[k] || o[k] > hi[k] {
                    return None;
                }
            } else {
                let a = (self.lo[k] - o[k]) / d[k];
                let b = (hi[k] - o[k]) / d[k];
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        if t0 > t1 {
            return None;
        }
        let p = o + d * t0;
        let mut idx = [0i64; 3];
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for k in 0..3 {
            let i = ((p[k] - self.lo[k]) / self.cell).floor() as i64;
            idx[k] = i.clamp(0, self.dims[k] as i64 - 1);
            if d[k] > 0.0 {
                step[k] = 1;
                t_max[k] = (self.lo[k] + (idx[k] + 1) as f64 * self.cell - o[k]) / d[k];
                t_delta[k] = self.cell / d[k];
            } else if d[k] < 0.0 {
                step[k] = -1;
                t_max[k] = (self.lo[k] + idx[k] as f64 * self.cell - o[k]) / d[k];
                t_delta[k] = -self.cell / d[k];
            }
        }
        let mut best = f64::INFINITY;
        loop {
            let id = (idx[2] as usize * self.dims[1] + idx[1] as usize) * self.dims[0] + idx[0] as usize;
            for &s in &self.items[self.starts[id] as usize..self.starts[id + 1] as usize] {
                if let Some(t) = self.hit_sphere(o, d, &self.centers[s as usize]) {
                    best = best.min(t);
                }
            }
            let k = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                0
            } else if t_max[1] <= t_max[2] {
                1
            } else {
                2
            };
            if best <= t_max[k] || t_max[k] > t1 {
                break;
            }
            idx[k] += step[k];
            if idx[k] < 0 || idx[k] >= self.dims[k] as i64 {
                break;
            }
            t_max[k] += t_delta[k];
        }
        best.is_finite().then_some(best)
    }
}

/// First crossing of the ray below a heightfield, refined by bisection.
fn cast_heightfield(hf: &Heightfield, o: &Vec3, d: &Vec3) -> Option<f64> {
    let [ex, ey] = hf.extent();
    let (x0, y0) = (hf.origin[0], hf.origin[1]);
    let (hmin, hmax) = hf
        .heights
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), h| (a.min(*h), b.max(*h)));
    // padded so that a flat field still has a slab to march through
    let pad = 1e-6;
    let lo = Vec3::new(x0, y0, hmin - pad);
    let hi = Vec3::new(x0 + ex, y0 + ey, hmax + pad);
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for k in 0..3 {
        if d[k].abs() < 1e-300 {
            if o[k] < lo[k] || o[k] > hi[k] {
                return None;
            }
        } else {
            let a = (lo[k] - o[k]) / d[k];
            let b = (hi[k] - o[k]) / d[k];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    if t0 > t1 {
        return None;
    }
    let above = |t: f64| {
        let p = o + d * t;
        hf.height(p.x, p.y).is_none_or(|h| p.z > h)
    };
    if !above(t0) {
        return Some(t0);
    }
    let dt = 0.25 * hf.spacing;
    let mut ta = t0;
    while ta < t1 {
        let tb = (ta + dt).min(t1);
        if !above(tb) {
            let (mut a, mut b) = (ta, tb);
            for _ in 0..48 {
                let m = 0.5 * (a + b);
                if above(m) {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Some(b);
        }
        ta = tb;
    }
    None
}

fn cast_scene(scene: &Scene, grid: Option<&SphereGrid>, o: &Vec3, d: &Vec3) -> Option<f64> {
    let mut best = f64::INFINITY;
    if let Some(t) = grid.and_then(|g| g.cast(o, d)) {
        best = best.min(t);
    }
    if let Some((bvh, pose)) = scene.tool {
        let ol = pose.inverse_transform_point(o);
        let dl = pose.orientation.inverse() * d;
        if let Some(t) = bvh.ray_first(&ol, &dl, best) {
            best = best.min(t);
        }
    }
    let mut on_terrain = false;
    if let Some(hf) = scene.terrain {
        if let Some(t) = cast_heightfield(hf, o, d) {
            best = best.min(t);
            on_terrain = true;
        }
    }
    if let Some(z) = scene.ground_z {
        if d.z < 0.0 && !on_terrain {
            let t = (z - o.z) / d.z;
            let p = o + d * t;
            let inside_terrain = scene.terrain.is_some_and(|hf| hf.height(p.x, p.y).is_some());
            if t >= 0.0 && !inside_terrain {
                best = best.min(t);
            }
        }
    }
    best.is_finite().then_some(best)
}

/// Renders one depth image per camera; rays that hit nothing read `far`.
pub fn render_views(scene: &Scene, cameras: &[Camera]) -> Vec<DepthImage> {
    let grid = scene.spheres.and_then(|(c, r)| SphereGrid::new(c, r));
    cameras
        .iter()
        .map(|cam| {
            let mut data = vec![0.0f32; cam.width * cam.height];
            data.par_chunks_mut(cam.width).enumerate().for_each(|(j, row)| {
                for (i, px) in row.iter_mut().enumerate() {
                    let d = cam.ray(i, j);
                    let t = cast_scene(scene, grid.as_ref(), &cam.pose.position, &d);
                    *px = t.map_or(cam.far, |t| t.min(cam.far)) as f32;
                }
            });
            DepthImage {
                width: cam.width,
                height: cam.height,
                data,
            }
        })
        .collect()
}

pub fn render_depth(scene: &Scene, camera: &Camera) -> DepthImage {
    render_views(scene, std::slice::from_ref(camera)).remove(0)
}
