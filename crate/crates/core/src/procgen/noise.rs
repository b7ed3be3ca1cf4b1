//! Hashed-lattice value noise in two and three dimensions.

use crate::geom::mix64;

fn lattice(seed: u64, coords: &[i64]) -> f64 {
    let mut h = mix64(seed);
    for &c in coords {
        h = mix64(h ^ c as u64);
    }
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Value noise in [0, 1] with unit lattice spacing.
pub fn value2(seed: u64, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (tx, ty) = (smooth(x - x0), smooth(y - y0));
    let (i, j) = (x0 as i64, y0 as i64);
    let v = |di: i64, dj: i64| lattice(seed, &[i + di, j + dj]);
    let a = v(0, 0) + (v(1, 0) - v(0, 0)) * tx;
    let b = v(0, 1) + (v(1, 1) - v(0, 1)) * tx;
    a + (b - a) * ty
}

pub fn value3(seed: u64, x: f64, y: f64, z: f64) -> f64 {
    let (x0, y0, z0) = (x.floor(), y.floor(), z.floor());
    let (tx, ty, tz) = (smooth(x - x0), smooth(y - y0), smooth(z - z0));
    let (i, j, k) = (x0 as i64, y0 as i64, z0 as i64);
    let v = |di: i64, dj: i64, dk: i64| lattice(seed, &[i + di, j + dj, k + dk]);
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let plane = |dk: i64| {
        lerp(
            lerp(v(0, 0, dk), v(1, 0, dk), tx),
            lerp(v(0, 1, dk), v(1, 1, dk), tx),
            ty,
        )
    };
    lerp(plane(0), plane(1), tz)
}

/// Octave sum with halving amplitude and doubling frequency, normalized to [0, 1].
pub fn fractal3(seed: u64, p: [f64; 3], frequency: f64, octaves: u32) -> f64 {
    let mut sum = 0.0;
    let mut norm = 0.0;
    let mut amp = 1.0;
    let mut f = frequency;
    for o in 0..octaves.max(1) {
        let s = seed.wrapping_add(o as u64);
        sum += amp * value3(s, p[0] * f, p[1] * f, p[2] * f);
        norm += amp;
        amp *= 0.5;
        f *= 2.0;
    }
    sum / norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_is_bounded_and_interpolates_lattice_values() {
        for i in 0..500 {
            let x = i as f64 * 0.173 - 40.0;
            let v = value2(9, x, 0.37 * x);
            assert!((0.0..=1.0).contains(&v));
            let w = fractal3(9, [x, -x, 0.5 * x], 0.9, 4);
            assert!((0.0..=1.0).contains(&w));
        }
        assert_eq!(value2(1, 3.0, -2.0), lattice(1, &[3, -2]));
    }
}
