//! Fractal heightfield terrain with parabolic craters.

use std::io::{Read, Write};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::noise::value2;
use super::sdf::GridHeader;
use crate::error::{Error, Result};
use crate::geom::{fnv1a, SeededStream};
use crate::granular::Heightfield;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainParams {
    pub nx: usize,
    pub ny: usize,
    /// m
    pub spacing: f64,
    /// World xy of the grid center, m.
    pub center: [f64; 2],
    /// Heights stay within ±amplitude, m.
    pub amplitude: f64,
    pub octaves: u32,
    /// Wavelength of the coarsest octave, m.
    pub base_wavelength: f64,
    /// Amplitude ratio between successive octaves.
    pub persistence: f64,
    /// Upper bound of the uniformly drawn crater count (at most 5).
    pub max_craters: u32,
    /// m
    pub crater_radius: [f64; 2],
    /// Depth range as a fraction of the amplitude (at most 0.5).
    pub crater_depth: [f64; 2],
}

impl Default for TerrainParams {
    fn default() -> Self {
        Self {
            nx: 81,
            ny: 81,
            spacing: 0.01,
            center: [0.40, 0.0],
            amplitude: 0.01,
            octaves: 5,
            base_wavelength: 0.4,
            persistence: 0.5,
            max_craters: 3,
            crater_radius: [0.04, 0.12],
            crater_depth: [0.2, 0.5],
        }
    }
}

impl TerrainParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, r: &str| Err(Error::config(format!("terrain.{f}"), r));
        if self.nx < 16 || self.ny < 16 {
            return bad("nx", "grid needs at least 16x16 nodes");
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return bad("spacing", "must be positive");
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return bad("amplitude", "must be positive");
        }
        if self.octaves < 4 {
            return bad("octaves", "at least 4 octaves");
        }
        if !(self.base_wavelength > 0.0) || !(self.persistence > 0.0 && self.persistence < 1.0) {
            return bad("persistence", "wavelength positive and persistence in (0, 1)");
        }
        if self.max_craters > 5 {
            return bad("max_craters", "at most 5");
        }
        let [r0, r1] = self.crater_radius;
        if !(r0 > 0.0 && r1 >= r0) {
            return bad("crater_radius", "need 0 < min ≤ max");
        }
        let [d0, d1] = self.crater_depth;
        if !(d0 >= 0.0 && d1 >= d0 && d1 <= 0.5) {
            return bad("crater_depth", "need 0 ≤ min ≤ max ≤ 0.5");
        }
        Ok(())
    }
}

/// Parabolic depression `depth·(1 − (r/radius)²)` inside `radius`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crater {
    pub center: [f64; 2],
    pub radius: f64,
    pub depth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerrainField {
    pub heightfield: Heightfield,
    pub amplitude: f64,
    pub craters: Vec<Crater>,
}

/// Noise base plus 0 – `max_craters` craters, clamped to ±amplitude.
///
/// The noise seed is drawn first, so the same stream with a different crater
/// budget reproduces the same base surface.
pub fn generate_terrain(rng: &mut SeededStream, params: &TerrainParams) -> Result<TerrainField> {
    params.validate()?;
    let noise_seed = rng.next_u64();
    let (nx, ny, sp) = (params.nx, params.ny, params.spacing);
    let origin = [
        params.center[0] - 0.5 * (nx - 1) as f64 * sp,
        params.center[1] - 0.5 * (ny - 1) as f64 * sp,
    ];
    let mut norm = 0.0;
    let mut amp = 1.0;
    for _ in 0..params.octaves {
        norm += amp;
        amp *= params.persistence;
    }
    let mut heights = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let (x, y) = (ix as f64 * sp, iy as f64 * sp);
            let mut f = 1.0 / params.base_wavelength;
            let mut a = 1.0;
            let mut sum = 0.0;
            for o in 0..params.octaves {
                sum += a * (2.0 * value2(noise_seed.wrapping_add(o as u64), x * f, y * f) - 1.0);
                a *= params.persistence;
                f *= 2.0;
            }
            // base occupies ±amplitude/2 so craters have room below it
            heights.push(0.5 * params.amplitude * sum / norm);
        }
    }
    let mut field = TerrainField {
        heightfield: Heightfield {
            nx,
            ny,
            spacing: sp,
            origin,
            heights,
        },
        amplitude: params.amplitude,
        craters: Vec::new(),
    };
    let count = rng.index(params.max_craters as u64 + 1);
    let (w, h) = ((nx - 1) as f64 * sp, (ny - 1) as f64 * sp);
    for _ in 0..count {
        let cx = origin[0] + rng.uniform(0.1, 0.9) * w;
        let cy = origin[1] + rng.uniform(0.1, 0.9) * h;
        let radius = rng.uniform(params.crater_radius[0], params.crater_radius[1]);
        let depth = rng.uniform(params.crater_depth[0], params.crater_depth[1]) * params.amplitude;
        field.add_crater(Crater {
            center: [cx, cy],
            radius,
            depth,
        });
    }
    Ok(field)
}

impl TerrainField {
    /// Carves a crater, keeping every height within ±amplitude.
    pub fn add_crater(&mut self, c: Crater) {
        let hf = &mut self.heightfield;
        for iy in 0..hf.ny {
            for ix in 0..hf.nx {
                let x = hf.origin[0] + ix as f64 * hf.spacing;
                let y = hf.origin[1] + iy as f64 * hf.spacing;
                let r2 = ((x - c.center[0]).powi(2) + (y - c.center[1]).powi(2)) / (c.radius * c.radius);
                if r2 < 1.0 {
                    let h = &mut hf.heights[iy * hf.nx + ix];
                    *h = (*h - c.depth * (1.0 - r2)).clamp(-self.amplitude, self.amplitude);
                }
            }
        }
        self.craters.push(c);
    }

    pub fn max_abs_height(&self) -> f64 {
        self.heightfield.heights.iter().fold(0.0, |m, h| m.max(h.abs()))
    }

    /// Hash of the grid geometry and heights.
    pub fn hash(&self) -> u64 {
        let hf = &self.heightfield;
        let mut bytes = Vec::with_capacity(hf.heights.len() * 8 + 40);
        for v in [hf.nx as f64, hf.ny as f64, hf.spacing, hf.origin[0], hf.origin[1]] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for h in &hf.heights {
            bytes.extend_from_slice(&h.to_le_bytes());
        }
        fnv1a(&bytes)
    }

    /// Raw f32 heights (x fastest) plus a JSON header.
    pub fn write(&self, bin: &mut impl Write, header: &mut impl Write) -> Result<()> {
        let hf = &self.heightfield;
        let mut raw = Vec::with_capacity(hf.heights.len() * 4);
        for h in &hf.heights {
            raw.extend_from_slice(&(*h as f32).to_le_bytes());
        }
        bin.write_all(&raw)?;
        let h = GridHeader {
            dims: vec![hf.nx, hf.ny],
            voxel: hf.spacing,
            origin: [hf.origin[0], hf.origin[1], 0.0],
            dtype: "f32le".into(),
            layout: "x-fastest".into(),
        };
        header.write_all(serde_json::to_string_pretty(&h)?.as_bytes())?;
        Ok(())
    }

    /// Reads a grid written by [`TerrainField::write`]; heights are f32-rounded.
    pub fn read(bin: &mut impl Read, header: &mut impl Read, amplitude: f64) -> Result<TerrainField> {
        let mut text = String::new();
        header.read_to_string(&mut text)?;
        let h: GridHeader = serde_json::from_str(&text)?;
        if h.dims.len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: h.dims.len(),
            });
        }
        let mut raw = vec![0u8; h.dims[0] * h.dims[1] * 4];
        bin.read_exact(&mut raw)?;
        let heights = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let heightfield = Heightfield {
            nx: h.dims[0],
            ny: h.dims[1],
            spacing: h.voxel,
            origin: [h.origin[0], h.origin[1]],
            heights,
        };
        heightfield.validate()?;
        Ok(TerrainField {
            heightfield,
            amplitude,
            craters: Vec::new(),
        })
    }
}
