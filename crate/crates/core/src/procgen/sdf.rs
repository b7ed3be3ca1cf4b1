//! Signed distance baking and the binary grid format.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bvh::{closest_point_on_triangle, TriangleBvh};
use super::mesh::TriMesh;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::granular::SdfGrid;

/// Empty voxels added around the mesh bounds on every side.
pub const SDF_MARGIN_VOXELS: usize = 2;

/// Scanline offsets keep axis rays off mesh edges and vertices that happen to
/// sit on lattice coordinates.
const RAY_JITTER: [f64; 2] = [1.234_567e-7, 2.718_281e-7];

/// Bakes a signed distance grid (negative inside) covering the mesh bounds
/// plus [`SDF_MARGIN_VOXELS`].
///
/// Magnitude is the exact distance to the nearest triangle. Sign is the
/// majority of inside/outside parities from three axis-aligned scanlines
/// through each node.
pub fn mesh_to_sdf(mesh: &TriMesh, voxel: f64) -> Result<SdfGrid> {
    if !(voxel > 0.0 && voxel.is_finite()) {
        return Err(Error::config("voxel", "must be positive"));
    }
    mesh.check_watertight()?;
    let bvh = TriangleBvh::new(mesh);
    let (lo, hi) = mesh.bounding_box();
    let pad = SDF_MARGIN_VOXELS as f64 * voxel;
    let origin = lo - Vec3::repeat(pad);
    let mut dims = [0usize; 3];
    for a in 0..3 {
        dims[a] = ((hi[a] - lo[a] + 2.0 * pad) / voxel).ceil() as usize + 1;
    }
    let [nx, ny, nz] = dims;
    let node = |ix: usize, iy: usize, iz: usize| origin + Vec3::new(ix as f64, iy as f64, iz as f64) * voxel;

    let mut inside_votes = vec![0u8; nx * ny * nz];
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let lines: Vec<(usize, usize)> = (0..dims[v]).flat_map(|j| (0..dims[u]).map(move |i| (i, j))).collect();
        let parities: Vec<Vec<bool>> = lines
            .par_iter()
            .map(|&(i, j)| {
                let mut start = origin;
                start[u] += i as f64 * voxel + RAY_JITTER[0] * voxel;
                start[v] += j as f64 * voxel + RAY_JITTER[1] * voxel;
                start[axis] -= voxel;
                let mut dir = Vec3::zeros();
                dir[axis] = 1.0;
                let mut hits = Vec::new();
                bvh.ray_hits(&start, &dir, &mut hits);
                hits.sort_by(f64::total_cmp);
                let mut k = 0;
                (0..dims[axis])
                    .map(|n| {
                        let t = (n + 1) as f64 * voxel;
                        while k < hits.len() && hits[k] < t {
                            k += 1;
                        }
                        k % 2 == 1
                    })
                    .collect()
            })
            .collect();
        for (&(i, j), par) in lines.iter().zip(&parities) {
            for (n, &inside) in par.iter().enumerate() {
                let mut idx = [0usize; 3];
                idx[axis] = n;
                idx[u] = i;
                idx[v] = j;
                if inside {
                    inside_votes[(idx[2] * ny + idx[1]) * nx + idx[0]] += 1;
                }
            }
        }
    }

    let values: Vec<f32> = (0..nz)
        .into_par_iter()
        .flat_map_iter(|iz| {
            let bvh = &bvh;
            let votes = &inside_votes;
            let mut out = Vec::with_capacity(nx * ny);
            let mut hint: Option<u32> = None;
            for iy in 0..ny {
                for ix in 0..nx {
                    let p = node(ix, iy, iz);
                    // the previous node's nearest triangle bounds this search
                    let bound = hint
                        .map(|f| {
                            let [a, b, c] = mesh.triangle(f as usize);
                            (closest_point_on_triangle(&p, &a, &b, &c) - p).norm_squared() * (1.0 + 1e-12)
                                + 1e-300
                        })
                        .unwrap_or(f64::INFINITY);
                    let (d2, f) = bvh
                        .nearest(&p, bound)
                        .or_else(|| bvh.nearest(&p, f64::INFINITY))
                        .expect("mesh has faces");
                    hint = Some(f);
                    let d = d2.sqrt();
                    let inside = votes[(iz * ny + iy) * nx + ix] >= 2;
                    out.push(if inside { -d } else { d } as f32);
                }
            }
            out
        })
        .collect();

    Ok(SdfGrid {
        dims,
        voxel,
        origin,
        values,
    })
}

/// JSON header accompanying a raw little-endian f32 grid (x fastest, then y, then z).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub dims: Vec<usize>,
    /// m
    pub voxel: f64,
    /// Position of the first node, m.
    pub origin: [f64; 3],
    pub dtype: String,
    pub layout: String,
}

pub fn sdf_header(grid: &SdfGrid) -> GridHeader {
    GridHeader {
        dims: grid.dims.to_vec(),
        voxel: grid.voxel,
        origin: [grid.origin.x, grid.origin.y, grid.origin.z],
        dtype: "f32le".into(),
        layout: "x-fastest".into(),
    }
}

pub fn write_sdf(grid: &SdfGrid, bin: &mut impl Write, header: &mut impl Write) -> Result<()> {
    let mut raw = Vec::with_capacity(grid.values.len() * 4);
    for v in &grid.values {
        raw.extend_from_slice(&v.to_le_bytes());
    }
    bin.write_all(&raw)?;
    header.write_all(serde_json::to_string_pretty(&sdf_header(grid))?.as_bytes())?;
    Ok(())
}

pub fn read_sdf(bin: &mut impl Read, header: &mut impl Read) -> Result<SdfGrid> {
    let mut text = String::new();
    header.read_to_string(&mut text)?;
    let h: GridHeader = serde_json::from_str(&text)?;
    if h.dims.len() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: h.dims.len(),
        });
    }
    let n = h.dims.iter().product::<usize>();
    let mut raw = vec![0u8; n * 4];
    bin.read_exact(&mut raw)?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(SdfGrid {
        dims: [h.dims[0], h.dims[1], h.dims[2]],
        voxel: h.voxel,
        origin: Vec3::from(h.origin),
        values,
    })
}
