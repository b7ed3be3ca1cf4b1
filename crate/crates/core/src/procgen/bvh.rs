//! Bounding-volume hierarchy over mesh triangles for distance and ray queries.

use super::mesh::TriMesh;
use crate::geom::Vec3;

const LEAF_SIZE: usize = 4;

#[derive(Clone, Debug)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    /// Leaf: first triangle slot; inner: index of the right child (left is next).
    start: u32,
    /// Triangle count for leaves, 0 for inner nodes.
    count: u32,
}

#[derive(Clone, Debug)]
pub struct TriangleBvh {
    tris: Vec<[Vec3; 3]>,
    /// Original face index for each slot in `tris`.
    ids: Vec<u32>,
    nodes: Vec<Node>,
}

fn bounds(tris: &[[Vec3; 3]]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for t in tris {
        for p in t {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
    }
    (lo, hi)
}

fn box_dist2(p: &Vec3, lo: &Vec3, hi: &Vec3) -> f64 {
    let mut d = 0.0;
    for k in 0..3 {
        let e = (lo[k] - p[k]).max(p[k] - hi[k]).max(0.0);
        d += e * e;
    }
    d
}

/// Slab test; returns the entry parameter if the ray meets the box before `tmax`.
fn ray_box(o: &Vec3, inv: &Vec3, lo: &Vec3, hi: &Vec3, tmax: f64) -> Option<f64> {
    let mut t0 = 0.0f64;
    let mut t1 = tmax;
    for k in 0..3 {
        let a = (lo[k] - o[k]) * inv[k];
        let b = (hi[k] - o[k]) * inv[k];
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        // NaN from 0·inf means the ray lies in the slab plane; keep the interval
        if a.is_finite() || a == f64::INFINITY {
            t0 = t0.max(a);
        }
        if b.is_finite() || b == f64::NEG_INFINITY {
            t1 = t1.min(b);
        }
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}

/// Closest point on triangle `abc` to `p`.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Möller–Trumbore; returns the ray parameter of a hit in front of the origin.
pub fn ray_triangle(o: &Vec3, d: &Vec3, t: &[Vec3; 3]) -> Option<f64> {
    let e1 = t[1] - t[0];
    let e2 = t[2] - t[0];
    let h = d.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - t[0];
    let u = inv * s.dot(&h);
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = inv * d.dot(&q);
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let tt = inv * e2.dot(&q);
    (tt > 0.0).then_some(tt)
}

impl TriangleBvh {
    pub fn new(mesh: &TriMesh) -> Self {
        let n = mesh.faces.len();
        let mut items: Vec<(u32, [Vec3; 3], Vec3)> = (0..n)
            .map(|f| {
                let t = mesh.triangle(f);
                (f as u32, t, (t[0] + t[1] + t[2]) / 3.0)
            })
            .collect();
        let mut nodes = Vec::with_capacity(2 * n / LEAF_SIZE + 1);
        if n > 0 {
            Self::build(&mut items, 0, &mut nodes);
        }
        Self {
            ids: items.iter().map(|i| i.0).collect(),
            tris: items.into_iter().map(|i| i.1).collect(),
            nodes,
        }
    }

    fn build(items: &mut [(u32, [Vec3; 3], Vec3)], offset: usize, nodes: &mut Vec<Node>) -> usize {
        let tris: Vec<[Vec3; 3]> = items.iter().map(|i| i.1).collect();
        let (lo, hi) = bounds(&tris);
        let me = nodes.len();
        nodes.push(Node {
            lo,
            hi,
            start: offset as u32,
            count: items.len() as u32,
        });
        if items.len() <= LEAF_SIZE {
            return me;
        }
        let ext = hi - lo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = items.len() / 2;
        // ties broken by face id so the tree is independent of sort internals
        items.select_nth_unstable_by(mid, |a, b| {
            a.2[axis].total_cmp(&b.2[axis]).then(a.0.cmp(&b.0))
        });
        let (l, r) = items.split_at_mut(mid);
        Self::build(l, offset, nodes);
        let right = Self::build(r, offset + mid, nodes);
        nodes[me].start = right as u32;
        nodes[me].count = 0;
        me
    }

    pub fn len(&self) -> usize {
        self.tris.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    /// Squared distance and face id of the closest triangle, searching only
    /// within `bound2` (pass infinity for an unbounded search).
    pub fn nearest(&self, p: &Vec3, bound2: f64) -> Option<(f64, u32)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (bound2, u32::MAX);
        let mut stack = Vec::with_capacity(64);
        stack.push(0usize);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if box_dist2(p, &node.lo, &node.hi) >= best.0 {
                continue;
            }
            if node.count > 0 {
                let s = node.start as usize;
                for k in s..s + node.count as usize {
                    let [a, b, c] = &self.tris[k];
                    let d2 = (closest_point_on_triangle(p, a, b, c) - p).norm_squared();
                    if d2 < best.0 || (d2 == best.0 && self.ids[k] < best.1) {
                        best = (d2, self.ids[k]);
                    }
                }
            } else {
                let l = ni + 1;
                let r = node.start as usize;
                let dl = box_dist2(p, &self.nodes[l].lo, &self.nodes[l].hi);
                let dr = box_dist2(p, &self.nodes[r].lo, &self.nodes[r].hi);
                // visit the nearer child first
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        (best.1 != u32::MAX).then_some(best)
    }

    /// Every hit parameter `t > 0` along the ray, unsorted.
    pub fn ray_hits(&self, o: &Vec3, d: &Vec3, out: &mut Vec<f64>) {
        out.clear();
        self.walk_ray(o, d, f64::INFINITY, |t, _| {
            out.push(t);
            None
        });
    }

    /// Nearest hit parameter below `tmax`.
    pub fn ray_first(&self, o: &Vec3, d: &Vec3, tmax: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        self.walk_ray(o, d, tmax, |t, cur| {
            if t < cur {
                best = Some(t);
                Some(t)
            } else {
                None
            }
        });
        best
    }

    /// Visits triangles whose boxes the ray enters before the current bound;
    /// the callback may shrink the bound by returning a new one.
    fn walk_ray(&self, o: &Vec3, d: &Vec3, tmax: f64, mut f: impl FnMut(f64, f64) -> Option<f64>) {
        if self.nodes.is_empty() {
            return;
        }
        let inv = Vec3::new(1.0 / d.x, 1.0 / d.y, 1.0 / d.z);
        let mut bound = tmax;
        let mut stack = Vec::with_capacity(64);
        stack.push(0usize);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if ray_box(o, &inv, &node.lo, &node.hi, bound).is_none() {
                continue;
            }
            if node.count > 0 {
                let s = node.start as usize;
                for k in s..s + node.count as usize {
                    if let Some(t) = ray_triangle(o, d, &self.tris[k]) {
                        if t < bound {
                            if let Some(nb) = f(t, bound) {
                                bound = nb;
                            }
                        }
                    }
                }
            } else {
                stack.push(node.start as usize);
                stack.push(ni + 1);
            }
        }
    }
}
