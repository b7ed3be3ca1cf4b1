//! Scoop mesh synthesis from a [`ToolSpec`].
//!
//! The cavity surface is a U-shaped cross-section (floor, fillets, flared side
//! walls) swept along a spine in the body y–z plane: a straight back plate, a
//! quarter-circle back curve, the straight floor and finally the lip. The
//! shell is that surface offset outward by the local wall thickness, closed by
//! a rim strip, which makes it a topological sphere. Teeth, serration and
//! notches change how far the lip reaches per column; wear only thins the
//! shell or shortens the lip.
//!
//! Body frame: x across the width, the floor lies at y = 0 with the cavity on
//! +y, the back plate lies at z = 0 and the floor runs toward +z. The mesh is
//! returned in the mount frame, whose z axis points from the flange into the
//! tool.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use nalgebra::UnitQuaternion;

use super::mesh::TriMesh;
use super::noise::fractal3;
use super::sdf::mesh_to_sdf;
use super::spec::ToolSpec;
use crate::error::{Error, Result};
use crate::geom::{Mat3, Pose, SeededStream, Vec3};
use crate::granular::SdfGrid;

/// kg/m³
pub const TOOL_DENSITY: f64 = 2700.0;
/// SDF lattice spacing; equals the particle radius.
pub const TOOL_SDF_VOXEL: f64 = 0.004;
/// Edge of the cube every tool must fit in, m.
pub const MAX_TOOL_EXTENT: f64 = 0.5;
pub const MIN_TRIANGLE_AREA: f64 = 1e-10;

/// Shell never thins below this fraction of the nominal wall thickness.
const MIN_THICKNESS_FRACTION: f64 = 0.35;
/// Lip never recedes below this fraction of its nominal length.
const MIN_LIP_FRACTION: f64 = 0.25;

/// A generated tool ready for simulation.
#[derive(Clone, Debug)]
pub struct ToolAsset {
    pub spec: ToolSpec,
    /// Mount frame coordinates.
    pub mesh: TriMesh,
    /// Mount frame expressed in the body frame.
    pub mount: Pose,
    pub sdf: Arc<SdfGrid>,
    /// kg
    pub mass: f64,
    /// Mount frame, m.
    pub com: Vec3,
    /// About the mount origin, kg·m².
    pub inertia: Mat3,
}

#[derive(Clone, Copy, Debug)]
enum Piece {
    /// Parameter runs 0 (floor junction) → 1 (rim).
    Wall,
    /// Angle from the floor tangent point.
    Fillet,
    /// Normalized −1 … 1 across the flat floor.
    Floor,
}

#[derive(Clone, Copy, Debug)]
struct Column {
    piece: Piece,
    param: f64,
    /// −1 on the left half, +1 on the right.
    side: f64,
}

#[derive(Clone, Copy, Debug)]
enum Row {
    /// Arc length along back plate, back curve and floor.
    Spine(f64),
    /// Fraction of the per-column lip reach.
    Lip(f64),
}

/// Quantities derived from a spec once its ranges are valid.
struct Layout<'a> {
    s: &'a ToolSpec,
    /// Flat-floor half width at the back.
    b_back: f64,
    /// Flat-floor half width along the lip.
    b_lip: f64,
    arc_len: f64,
    floor_end: f64,
    lip_dir: [f64; 2],
    lip_normal: [f64; 2],
    tooth_jitter: [f64; 9],
}

fn gen_err(params: &str, reason: impl Into<String>) -> Error {
    Error::ToolGeneration {
        params: params.into(),
        reason: reason.into(),
    }
}

impl<'a> Layout<'a> {
    fn new(s: &'a ToolSpec) -> Result<Self> {
        let (h, rf, phi, t) = (s.depth, s.bottom_curvature_radius, s.side_wall_flare_angle, s.wall_thickness);
        let fillet_rise = rf * (1.0 - phi.sin());
        let h_lip = h * (1.0 - s.side_wall_taper);
        if h_lip - fillet_rise < 0.003 {
            return Err(gen_err(
                "bottom_curvature_radius, depth, side_wall_taper",
                "fillet leaves no straight side wall at the lip",
            ));
        }
        let wall_back = (h - fillet_rise) / phi.cos();
        let b_back = 0.5 * s.width - t * phi.cos() - wall_back * phi.sin() - rf * phi.cos();
        let b_lip = b_back - (1.0 - s.taper_ratio) * 0.5 * s.width;
        if b_lip < 0.003 {
            return Err(gen_err(
                "width, depth, wall_thickness, bottom_curvature_radius, side_wall_flare_angle, taper_ratio",
                format!("flat floor at the lip is {b_lip:.4} m wide on each side"),
            ));
        }
        if s.back_curvature_radius < h + s.floor_crown.max(0.0) + 0.005 {
            return Err(gen_err(
                "depth, back_curvature_radius",
                "side walls would fold over inside the back curve",
            ));
        }
        let (sa, ca) = s.lip_angle.sin_cos();
        let mut rng = SeededStream::new(s.seed).substream("teeth");
        let mut tooth_jitter = [0.0; 9];
        for j in &mut tooth_jitter {
            *j = rng.uniform(-0.5, 0.5);
        }
        let arc_len = FRAC_PI_2 * s.back_curvature_radius;
        Ok(Self {
            s,
            b_back,
            b_lip,
            arc_len,
            floor_end: s.back_wall_extension + arc_len + s.length,
            lip_dir: [-sa, ca],
            lip_normal: [ca, sa],
            tooth_jitter,
        })
    }

    /// Fraction of the floor run completed at spine position `p`.
    fn taper_frac(&self, p: f64) -> f64 {
        let start = self.s.back_wall_extension + self.arc_len;
        ((p - start) / self.s.length).clamp(0.0, 1.0)
    }

    fn floor_half_width(&self, frac: f64) -> f64 {
        self.b_back + (self.b_lip - self.b_back) * frac
    }

    fn wall_height(&self, frac: f64) -> f64 {
        self.s.depth * (1.0 - self.s.side_wall_taper * frac)
    }

    /// Spine point and cavity-side normal in (y, z). The normal at the floor
    /// end is the miter of floor and lip normals, scaled so that offsets along
    /// it stay on both offset planes.
    fn spine(&self, p: f64) -> ([f64; 2], [f64; 2]) {
        let (a, r) = (self.s.back_wall_extension, self.s.back_curvature_radius);
        if p <= a {
            ([a + r - p, 0.0], [0.0, 1.0])
        } else if p <= a + self.arc_len {
            let th = (p - a) / r;
            let (st, ct) = th.sin_cos();
            ([r - r * st, r - r * ct], [st, ct])
        } else if p < self.floor_end {
            ([0.0, r + (p - a - self.arc_len)], [1.0, 0.0])
        } else {
            ([0.0, r + self.s.length], [1.0, (0.5 * self.s.lip_angle).tan()])
        }
    }

    /// Inner point (x, h) and cavity-side normal (mx, mh) of a column in the
    /// cross-section plane.
    fn section(&self, c: &Column, b: f64, wall_h: f64) -> ([f64; 2], [f64; 2]) {
        let (rf, phi) = (self.s.bottom_curvature_radius, self.s.side_wall_flare_angle);
        let (x, h, mx, mh) = match c.piece {
            Piece::Floor => {
                let xi = c.param;
                let crown = self.s.floor_crown;
                let slope = -2.0 * crown * xi / b;
                let n = (1.0 + slope * slope).sqrt();
                (xi * b, crown * (1.0 - xi * xi), -slope / n, 1.0 / n)
            }
            Piece::Fillet => {
                let (st, ct) = c.param.sin_cos();
                (b + rf * st, rf * (1.0 - ct), -st, ct)
            }
            Piece::Wall => {
                let (sp, cp) = phi.sin_cos();
                let rise = rf * (1.0 - sp);
                let len = (wall_h - rise) / cp;
                (b + rf * cp + c.param * len * sp, rise + c.param * len * cp, -cp, sp)
            }
        };
        match c.piece {
            Piece::Floor => ([x, h], [mx, mh]),
            _ => ([c.side * x, h], [c.side * mx, mh]),
        }
    }

    fn wear_weight(&self, x: f64) -> f64 {
        (1.0 + self.s.asymmetric_wear * x / (0.5 * self.s.width)).clamp(0.0, 2.0)
    }

    fn teeth(&self, x: f64) -> f64 {
        let s = self.s;
        let k = s.teeth_count as usize;
        if k == 0 {
            return 0.0;
        }
        let pitch = 2.0 * self.b_lip / k as f64;
        let half_base = 0.5 * s.tooth_base_width * pitch;
        let power = 0.5 + 2.5 * s.tooth_tip_sharpness;
        (0..k)
            .filter(|i| s.tooth_missing_mask & (1 << i) == 0)
            .map(|i| {
                let c = -self.b_lip
                    + pitch * (i as f64 + 0.5 + s.tooth_lateral_offset + s.tooth_spacing_jitter * self.tooth_jitter[i]);
                let d = (x - c).abs() / half_base;
                if d < 1.0 {
                    s.tooth_length * (1.0 - d).powf(power)
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    /// Lip reach of a column measured from the floor end along the lip direction.
    fn lip_reach(&self, c: &Column, x: f64) -> f64 {
        let s = self.s;
        let wear = s.deterioration;
        let notch_half = 0.5 * s.damage_notch_width;
        let notch_x = s.damage_notch_position * 0.5 * s.width;
        let notch = s.damage_notch_depth * (1.0 - ((x - notch_x) / notch_half).powi(2)).max(0.0);
        let mut reach = s.lip_length
            - wear * (2.0 * s.erosion_depth * self.wear_weight(x) + notch + 0.5 * s.edge_bluntness_radius);
        if let Piece::Floor = c.piece {
            let xi = c.param;
            let window = 1.0 - xi * xi;
            let tooth = self.teeth(x);
            if tooth > 0.0 {
                reach += (tooth - wear * s.edge_bluntness_radius).max(0.0);
            }
            reach += s.lip_curvature * window;
            reach += s.serration_amplitude
                * 0.5
                * (1.0 - (2.0 * std::f64::consts::PI * s.serration_frequency * x).cos())
                * window;
        }
        reach.max(MIN_LIP_FRACTION * s.lip_length)
    }

    fn columns(&self) -> Vec<Column> {
        let lv = self.s.resolution_level as usize;
        let nw = 2 + 2 * lv;
        let nf = 1 + lv;
        let nfl = (6 + 4 * lv).max(8 * self.s.teeth_count as usize);
        let theta_max = FRAC_PI_2 - self.s.side_wall_flare_angle;
        let mut cols = Vec::with_capacity(2 * (nw + nf) + nfl + 1);
        for i in 0..nw {
            cols.push(Column { piece: Piece::Wall, param: 1.0 - i as f64 / nw as f64, side: -1.0 });
        }
        for i in 0..nf {
            cols.push(Column { piece: Piece::Fillet, param: theta_max * (1.0 - i as f64 / nf as f64), side: -1.0 });
        }
        for i in 0..=nfl {
            cols.push(Column { piece: Piece::Floor, param: -1.0 + 2.0 * i as f64 / nfl as f64, side: 0.0 });
        }
        for i in 1..=nf {
            cols.push(Column { piece: Piece::Fillet, param: theta_max * i as f64 / nf as f64, side: 1.0 });
        }
        for i in 1..=nw {
            cols.push(Column { piece: Piece::Wall, param: i as f64 / nw as f64, side: 1.0 });
        }
        cols
    }

    fn rows(&self) -> Vec<Row> {
        let s = self.s;
        let lv = s.resolution_level as f64;
        let ds = 0.012 / lv;
        let a = s.back_wall_extension;
        let mut rows = Vec::new();
        let n_back = (a / ds).round() as usize;
        if n_back == 0 {
            rows.push(Row::Spine(0.0));
        } else {
            rows.extend((0..=n_back).map(|i| Row::Spine(a * i as f64 / n_back as f64)));
        }
        let n_arc = ((self.arc_len / ds).ceil() as usize).max(4);
        rows.extend((1..=n_arc).map(|i| Row::Spine(a + self.arc_len * i as f64 / n_arc as f64)));
        let n_floor = ((s.length / ds).ceil() as usize).max(2);
        rows.extend((1..=n_floor).map(|i| {
            if i == n_floor {
                Row::Spine(self.floor_end)
            } else {
                Row::Spine(a + self.arc_len + s.length * i as f64 / n_floor as f64)
            }
        }));
        let max_reach = s.lip_length + s.tooth_length + s.lip_curvature.max(0.0) + s.serration_amplitude;
        let n_lip = ((3.0 + 2.0 * lv) as usize).max((max_reach / ds).ceil() as usize);
        rows.extend((1..=n_lip).map(|j| Row::Lip(j as f64 / n_lip as f64)));
        rows
    }
}

/// Builds the closed tool shell in the mount frame.
pub fn build_tool_mesh(spec: &ToolSpec) -> Result<TriMesh> {
    spec.validate()?;
    let lay = Layout::new(spec)?;
    let cols = lay.columns();
    let rows = lay.rows();
    let (nu, nv) = (cols.len(), rows.len());
    let t = spec.wall_thickness;
    let wear = spec.deterioration;
    let dent_seed = SeededStream::new(spec.seed).substream("dents").seed() ^ 0x5eed;

    // lip reach per column depends only on the column's x at the floor end
    let lip_frac = lay.taper_frac(lay.floor_end);
    let (b_end, h_end) = (lay.floor_half_width(lip_frac), lay.wall_height(lip_frac));
    let reach: Vec<f64> = cols
        .iter()
        .map(|c| {
            let x = lay.section(c, b_end, h_end).0[0];
            lay.lip_reach(c, x)
        })
        .collect();

    let mut inner = Vec::with_capacity(nu * nv);
    let mut outer = Vec::with_capacity(nu * nv);
    for row in &rows {
        let (p, lip_q) = match *row {
            Row::Spine(p) => (p, None),
            Row::Lip(f) => (lay.floor_end, Some(f)),
        };
        let frac = lay.taper_frac(p);
        let (b, wall_h) = (lay.floor_half_width(frac), lay.wall_height(frac));
        let is_floor_end = p >= lay.floor_end;
        for (ci, c) in cols.iter().enumerate() {
            let ([x, h], [mx, mh]) = lay.section(c, b, wall_h);
            let (base, n) = match lip_q {
                None => lay.spine(p),
                Some(f) => {
                    let q = f * reach[ci];
                    let (b0, _) = lay.spine(lay.floor_end);
                    ([b0[0] + q * lay.lip_dir[0], b0[1] + q * lay.lip_dir[1]], lay.lip_normal)
                }
            };
            let pin = Vec3::new(x, base[0] + h * n[0], base[1] + h * n[1]);
            let m = Vec3::new(mx, mh * n[0], mh * n[1]);
            let w = lay.wear_weight(x);
            let thickness = if is_floor_end {
                let base_t = (t - wear * w * spec.erosion_depth).max(MIN_THICKNESS_FRACTION * t);
                let tip = (2.0 * spec.lip_edge_radius).min(base_t);
                let f = lip_q.unwrap_or(0.0);
                base_t + (tip - base_t) * f
            } else {
                let dent = if spec.dent_noise_amplitude > 0.0 && wear > 0.0 {
                    spec.dent_noise_amplitude
                        * fractal3(dent_seed, [pin.x, pin.y, pin.z], spec.dent_noise_frequency, spec.dent_noise_octaves)
                } else {
                    0.0
                };
                (t - wear * w * (spec.erosion_depth + dent)).max(MIN_THICKNESS_FRACTION * t)
            };
            inner.push(pin);
            outer.push(pin - thickness * m);
        }
    }

    let mut vertices = inner;
    vertices.extend(outer);
    let off = (nu * nv) as u32;
    let id = |r: usize, c: usize| (r * nu + c) as u32;
    let mut faces = Vec::with_capacity(4 * (nu - 1) * (nv - 1) + 4 * (nu + nv));
    for r in 0..nv - 1 {
        for c in 0..nu - 1 {
            let (a, b, cc, d) = (id(r, c), id(r, c + 1), id(r + 1, c + 1), id(r + 1, c));
            faces.push([a, b, cc]);
            faces.push([a, cc, d]);
            faces.push([a + off, cc + off, b + off]);
            faces.push([a + off, d + off, cc + off]);
        }
    }
    // boundary loop in the direction its edges run in the inner faces
    let mut ring = Vec::with_capacity(2 * (nu + nv));
    ring.extend((0..nu).map(|c| id(0, c)));
    ring.extend((1..nv).map(|r| id(r, nu - 1)));
    ring.extend((0..nu - 1).rev().map(|c| id(nv - 1, c)));
    ring.extend((1..nv - 1).rev().map(|r| id(r, 0)));
    for k in 0..ring.len() {
        let (p, q) = (ring[k], ring[(k + 1) % ring.len()]);
        faces.push([q, p, p + off]);
        faces.push([q, p + off, q + off]);
    }

    let body = TriMesh { vertices, faces };
    let (mount, tilt) = mount_frame(spec);
    let mut mesh = body.transformed(|p| tilt * (p - mount.position));
    if mesh.volume() < 0.0 {
        mesh.flip_orientation();
    }
    Ok(mesh)
}

/// Mount frame in body coordinates and the rotation taking body vectors to
/// mount vectors.
fn mount_frame(spec: &ToolSpec) -> (Pose, UnitQuaternion<f64>) {
    let plate_mid = 0.5 * (spec.back_wall_extension + spec.back_curvature_radius);
    let origin = Vec3::new(spec.mount_offset_x, plate_mid + spec.mount_offset_y, -spec.wall_thickness);
    let tilt = UnitQuaternion::from_euler_angles(spec.mount_tilt_roll, spec.mount_tilt_pitch, spec.mount_tilt_yaw);
    (Pose::new(origin, tilt.inverse()), tilt)
}

/// Checks the mesh invariants every generated tool must satisfy.
pub fn check_tool_mesh(mesh: &TriMesh) -> Result<()> {
    mesh.check_watertight()?;
    let chi = mesh.euler_characteristic();
    if chi != 2 {
        return Err(Error::NotWatertight(format!("Euler characteristic {chi}, expected 2")));
    }
    let area = mesh.min_triangle_area();
    if area < MIN_TRIANGLE_AREA {
        return Err(gen_err("resolution_level", format!("triangle area {area:e} m² below {MIN_TRIANGLE_AREA:e}")));
    }
    let (lo, hi) = mesh.bounding_box();
    let ext = hi - lo;
    if ext.max() > MAX_TOOL_EXTENT {
        return Err(gen_err(
            "length, back_curvature_radius, back_wall_extension, lip_length, tooth_length",
            format!("bounding box {:.3} m exceeds {MAX_TOOL_EXTENT} m", ext.max()),
        ));
    }
    Ok(())
}

/// Full asset with the default SDF resolution.
pub fn generate_tool(spec: &ToolSpec) -> Result<ToolAsset> {
    generate_tool_with_voxel(spec, TOOL_SDF_VOXEL)
}

pub fn generate_tool_with_voxel(spec: &ToolSpec, voxel: f64) -> Result<ToolAsset> {
    let mesh = build_tool_mesh(spec)?;
    check_tool_mesh(&mesh)?;
    let (mount, _) = mount_frame(spec);
    let mp = mesh.mass_properties(TOOL_DENSITY);
    let sdf = mesh_to_sdf(&mesh, voxel)?;
    Ok(ToolAsset {
        spec: spec.clone(),
        mesh,
        mount,
        sdf: Arc::new(sdf),
        mass: mp.mass,
        com: mp.com,
        inertia: mp.inertia,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_tool_is_a_closed_sphere_like_shell() {
        let m = build_tool_mesh(&ToolSpec::default()).unwrap();
        check_tool_mesh(&m).unwrap();
        assert!(m.volume() > 0.0);
    }

    #[test]
    fn folded_back_curve_names_both_parameters() {
        let s = ToolSpec {
            depth: 0.07,
            back_curvature_radius: 0.08,
            floor_crown: 0.005,
            ..ToolSpec::default()
        };
        match build_tool_mesh(&s) {
            Err(Error::ToolGeneration { params, .. }) => {
                assert!(params.contains("depth") && params.contains("back_curvature_radius"))
            }
            other => panic!("{other:?}"),
        }
    }
}
