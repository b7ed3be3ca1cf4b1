//! Indexed triangle meshes: topology checks, mass properties, OBJ/STL I/O.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    /// Counter-clockwise seen from outside.
    pub faces: Vec<[u32; 3]>,
}

/// Mass, center of mass and inertia tensor about the mesh origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassProperties {
    pub mass: f64,
    pub com: Vec3,
    pub inertia: Mat3,
}

impl TriMesh {
    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn min_triangle_area(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| self.triangle_area(f))
            .fold(f64::INFINITY, f64::min)
    }

    /// Undirected edge → number of incident faces.
    fn edge_use(&self) -> HashMap<(u32, u32), u32> {
        let mut m = HashMap::with_capacity(self.faces.len() * 3 / 2);
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *m.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        m
    }

    pub fn edge_count(&self) -> usize {
        self.edge_use().len()
    }

    /// V − E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_count() as i64 + self.faces.len() as i64
    }

    /// Every edge shared by exactly two faces with opposite orientation, and
    /// every vertex referenced.
    pub fn check_watertight(&self) -> Result<()> {
        if self.faces.is_empty() {
            return Err(Error::NotWatertight("no faces".into()));
        }
        let n = self.vertices.len() as u32;
        let mut directed: HashMap<(u32, u32), u32> = HashMap::with_capacity(self.faces.len() * 3);
        let mut used = vec![false; self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::NotWatertight(format!("face {fi} indexes past the vertex list")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::NotWatertight(format!("face {fi} repeats a vertex")));
            }
            for k in 0..3 {
                used[f[k] as usize] = true;
                *directed.entry((f[k], f[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        for (&(a, b), &c) in &directed {
            if c != 1 {
                return Err(Error::NotWatertight(format!("edge {a}->{b} used {c} times in one direction")));
            }
            if !directed.contains_key(&(b, a)) {
                return Err(Error::NotWatertight(format!("edge {a}-{b} is a boundary edge")));
            }
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(Error::NotWatertight(format!("vertex {i} is unreferenced")));
        }
        Ok(())
    }

    /// Signed enclosed volume (positive for outward orientation).
    pub fn volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                a.dot(&b.cross(&c))
            })
            .sum::<f64>()
            / 6.0
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.triangle_area(f)).sum()
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Uniform-density solid properties from signed tetrahedra to the origin.
    pub fn mass_properties(&self, density: f64) -> MassProperties {
        let mut vol = 0.0;
        let mut first = Vec3::zeros();
        // second moments ∫ x_i x_j dV
        let mut second = Mat3::zeros();
        for f in 0..self.faces.len() {
            let [a, b, c] = self.triangle(f);
            let v = a.dot(&b.cross(&c)) / 6.0;
            vol += v;
            first += v * (a + b + c) / 4.0;
            // exact for a tetrahedron with one vertex at the origin
            let s = a + b + c;
            second += v / 20.0 * (a * a.transpose() + b * b.transpose() + c * c.transpose() + s * s.transpose());
        }
        let mass = density * vol;
        let com = if vol.abs() > 0.0 { first / vol } else { Vec3::zeros() };
        let second = density * second;
        let inertia = Mat3::identity() * second.trace() - second;
        MassProperties { mass, com, inertia }
    }

    pub fn transformed(&self, f: impl Fn(&Vec3) -> Vec3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn flip_orientation(&mut self) {
        for f in &mut self.faces {
            f.swap(1, 2);
        }
    }

    pub fn write_obj(&self, out: &mut impl Write) -> Result<()> {
        let mut s = String::with_capacity(self.vertices.len() * 48 + self.faces.len() * 24);
        for v in &self.vertices {
            s.push_str(&format!("v {:.9} {:.9} {:.9}\n", v.x, v.y, v.z));
        }
        for f in &self.faces {
            s.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    /// Reads `v` and triangular `f` records; other records are ignored.
    pub fn read_obj(input: &mut impl BufRead) -> Result<TriMesh> {
        let bad = |m: String| Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, m));
        let mut mesh = TriMesh::default();
        for (ln, line) in input.lines().enumerate() {
            let line = line?;
            let mut w = line.split_whitespace();
            match w.next() {
                Some("v") => {
                    let c: Vec<f64> = w
                        .take(3)
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| bad(format!("line {}: {e}", ln + 1)))?;
                    if c.len() != 3 {
                        return Err(bad(format!("line {}: vertex needs 3 coordinates", ln + 1)));
                    }
                    mesh.vertices.push(Vec3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<u32> = w
                        .map(|t| t.split('/').next().unwrap_or("").parse::<u32>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| bad(format!("line {}: {e}", ln + 1)))?;
                    if idx.len() != 3 || idx.contains(&0) {
                        return Err(bad(format!("line {}: expected a triangle", ln + 1)));
                    }
                    mesh.faces.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
                }
                _ => {}
            }
        }
        Ok(mesh)
    }

    /// Binary STL with per-face normals.
    pub fn write_stl(&self, out: &mut impl Write) -> Result<()> {
        let mut buf = Vec::with_capacity(84 + self.faces.len() * 50);
        let mut header = [0u8; 80];
        let tag = b"regolith tool mesh";
        header[..tag.len()].copy_from_slice(tag);
        buf.extend_from_slice(&header);
        buf.extend_from_slice(&(self.faces.len() as u32).to_le_bytes());
        for f in 0..self.faces.len() {
            let [a, b, c] = self.triangle(f);
            let n = (b - a).cross(&(c - a));
            let n = if n.norm() > 0.0 { n.normalize() } else { n };
            for v in [n, a, b, c] {
                for k in 0..3 {
                    buf.extend_from_slice(&(v[k] as f32).to_le_bytes());
                }
            }
            buf.extend_from_slice(&0u16.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }
}

#[cfg(test)]
pub(crate) fn unit_cube() -> TriMesh {
    let vertices = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -0.5 } else { 0.5 },
                if i & 2 == 0 { -0.5 } else { 0.5 },
                if i & 4 == 0 { -0.5 } else { 0.5 },
            )
        })
        .collect();
    let quads = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let faces = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriMesh { vertices, faces }
}
