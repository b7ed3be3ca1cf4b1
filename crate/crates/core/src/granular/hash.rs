//! Uniform-grid neighbor search keyed by packed cell coordinates.

use crate::geom::Vec3;

const COORD_BITS: u32 = 21;
const COORD_BIAS: i64 = 1 << (COORD_BITS - 1);
const COORD_MASK: u64 = (1 << COORD_BITS) - 1;
const EMPTY: u32 = u32::MAX;

/// The 13 neighbor offsets that sort after the origin cell.
const FORWARD: [[i32; 3]; 13] = [
    [0, 0, 1],
    [0, 1, -1],
    [0, 1, 0],
    [0, 1, 1],
    [1, -1, -1],
    [1, -1, 0],
    [1, -1, 1],
    [1, 0, -1],
    [1, 0, 0],
    [1, 0, 1],
    [1, 1, -1],
    [1, 1, 0],
    [1, 1, 1],
];

fn pack(c: [i32; 3]) -> u64 {
    let f = |v: i32| ((v as i64 + COORD_BIAS).clamp(0, COORD_MASK as i64)) as u64;
    (f(c[0]) << (2 * COORD_BITS)) | (f(c[1]) << COORD_BITS) | f(c[2])
}

fn slot(key: u64, mask: usize) -> usize {
    (crate::geom::mix64(key) as usize) & mask
}

/// Particles bucketed by cell, buckets sorted by cell key.
#[derive(Clone, Debug, Default)]
pub struct SpatialHash {
    cell: f64,
    order: Vec<u32>,
    cell_keys: Vec<u64>,
    cell_coords: Vec<[i32; 3]>,
    starts: Vec<u32>,
    table: Vec<u32>,
    scratch: Vec<(u64, u32)>,
}

/// Builds a hash with the given cell size over positions `x`.
pub fn build_spatial_hash(x: &[Vec3], cell: f64) -> SpatialHash {
    let mut h = SpatialHash::default();
    h.rebuild(x, cell);
    h
}

impl SpatialHash {
    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn cell_of(&self, p: &Vec3) -> [i32; 3] {
        let inv = 1.0 / self.cell;
        let f = |v: f64| {
            let c = (v * inv).floor();
            c.clamp(-(COORD_BIAS as f64), (COORD_BIAS - 1) as f64) as i32
        };
        [f(p.x), f(p.y), f(p.z)]
    }

    /// Re-buckets `x`, reusing allocations.
    pub fn rebuild(&mut self, x: &[Vec3], cell: f64) {
        assert!(cell > 0.0, "cell size must be positive");
        self.cell = cell;
        self.scratch.clear();
        for (i, p) in x.iter().enumerate() {
            self.scratch.push((pack(self.cell_of(p)), i as u32));
        }
        self.scratch.sort_unstable();

        self.order.clear();
        self.cell_keys.clear();
        self.cell_coords.clear();
        self.starts.clear();
        for (k, &(key, i)) in self.scratch.iter().enumerate() {
            if self.cell_keys.last() != Some(&key) {
                self.cell_keys.push(key);
                self.cell_coords.push(self.cell_of(&x[i as usize]));
                self.starts.push(k as u32);
            }
            self.order.push(i);
        }
        self.starts.push(self.order.len() as u32);

        let size = (self.cell_keys.len() * 2).next_power_of_two().max(16);
        self.table.clear();
        self.table.resize(size, EMPTY);
        let mask = size - 1;
        for (c, &key) in self.cell_keys.iter().enumerate() {
            let mut s = slot(key, mask);
            while self.table[s] != EMPTY {
                s = (s + 1) & mask;
            }
            self.table[s] = c as u32;
        }
    }

    pub fn num_cells(&self) -> usize {
        self.cell_keys.len()
    }

    pub fn cell_coords(&self, cell: usize) -> [i32; 3] {
        self.cell_coords[cell]
    }

    /// Particle indices in the `cell`-th occupied cell, ascending.
    pub fn bucket(&self, cell: usize) -> &[u32] {
        &self.order[self.starts[cell] as usize..self.starts[cell + 1] as usize]
    }

    fn find(&self, c: [i32; 3]) -> Option<usize> {
        let key = pack(c);
        let mask = self.table.len() - 1;
        let mut s = slot(key, mask);
        loop {
            let idx = self.table[s];
            if idx == EMPTY {
                return None;
            }
            if self.cell_keys[idx as usize] == key {
                return Some(idx as usize);
            }
            s = (s + 1) & mask;
        }
    }

    /// Occupied cell containing grid coordinate `c`, if any.
    pub fn lookup(&self, c: [i32; 3]) -> Option<&[u32]> {
        self.find(c).map(|i| self.bucket(i))
    }

    /// All pairs closer than `cutoff` (which must not exceed the cell size).
    ///
    /// Pairs are grouped by owning cell: `pairs[ranges[c]..ranges[c+1]]` hold
    /// the pairs whose first particle lies in cell `c`, and whose second lies in
    /// the same cell or one of the 13 forward neighbors.
    pub fn pairs_by_cell(
        &self,
        x: &[Vec3],
        cutoff: f64,
        pairs: &mut Vec<[u32; 2]>,
        ranges: &mut Vec<u32>,
    ) {
        assert!(cutoff <= self.cell * (1.0 + 1e-12), "cutoff exceeds cell size");
        let c2 = cutoff * cutoff;
        pairs.clear();
        ranges.clear();
        let mut near = [0usize; 13];
        for cell in 0..self.num_cells() {
            ranges.push(pairs.len() as u32);
            let own = self.bucket(cell);
            for (a, &i) in own.iter().enumerate() {
                let xi = x[i as usize];
                for &j in &own[a + 1..] {
                    if (x[j as usize] - xi).norm_squared() < c2 {
                        pairs.push([i, j]);
                    }
                }
            }
            let base = self.cell_coords[cell];
            let mut count = 0;
            for off in &FORWARD {
                if let Some(n) = self.find([base[0] + off[0], base[1] + off[1], base[2] + off[2]]) {
                    near[count] = n;
                    count += 1;
                }
            }
            for &n in &near[..count] {
                let other = self.bucket(n);
                for &i in own {
                    let xi = x[i as usize];
                    for &j in other {
                        if (x[j as usize] - xi).norm_squared() < c2 {
                            pairs.push([i, j]);
                        }
                    }
                }
            }
        }
        ranges.push(pairs.len() as u32);
    }

    /// Pairs closer than `cutoff`, normalized to `i < j` and sorted.
    pub fn pairs(&self, x: &[Vec3], cutoff: f64) -> Vec<(usize, usize)> {
        let mut raw = Vec::new();
        let mut ranges = Vec::new();
        self.pairs_by_cell(x, cutoff, &mut raw, &mut ranges);
        let mut out: Vec<(usize, usize)> = raw
            .into_iter()
            .map(|[a, b]| {
                let (a, b) = (a as usize, b as usize);
                (a.min(b), a.max(b))
            })
            .collect();
        out.sort_unstable();
        out
    }
}

/// O(N²) reference: all `i < j` closer than `cutoff`, sorted.
pub fn brute_force_pairs(x: &[Vec3], cutoff: f64) -> Vec<(usize, usize)> {
    let c2 = cutoff * cutoff;
    let mut out = Vec::new();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            if (x[j] - x[i]).norm_squared() < c2 {
                out.push((i, j));
            }
        }
    }
    out
}
