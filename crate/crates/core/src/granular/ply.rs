//! Binary little-endian PLY frames: position and velocity as float32 per vertex.

use std::io::{BufRead, Write};

use super::ParticleSet;
use crate::error::{Error, Result};
use crate::geom::Vec3;

const PROPS: [&str; 6] = ["x", "y", "z", "vx", "vy", "vz"];

pub fn write_ply_frame(out: &mut impl Write, p: &ParticleSet) -> Result<()> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", p.len()));
    for name in PROPS {
        header.push_str(&format!("property float {name}\n"));
    }
    header.push_str("end_header\n");
    out.write_all(header.as_bytes())?;
    let mut body = Vec::with_capacity(p.len() * 24);
    for (x, v) in p.x.iter().zip(&p.v) {
        for c in x.iter().chain(v.iter()) {
            body.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    out.write_all(&body)?;
    Ok(())
}

/// Reads a frame written by [`write_ply_frame`] back as (positions, velocities).
pub fn read_ply_frame(input: &mut impl BufRead) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    let bad = |m: &str| Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string()));
    let mut count = None;
    let mut props = Vec::new();
    let mut line = String::new();
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(bad("unterminated PLY header"));
        }
        let t = line.trim_end();
        if t == "end_header" {
            break;
        }
        let words: Vec<&str> = t.split_whitespace().collect();
        match words.as_slice() {
            ["format", fmt, _] if *fmt != "binary_little_endian" => {
                return Err(bad("only binary_little_endian PLY is supported"))
            }
            ["element", "vertex", n] => count = n.parse::<usize>().ok(),
            ["property", "float", name] => props.push(name.to_string()),
            _ => {}
        }
    }
    let n = count.ok_or_else(|| bad("missing vertex count"))?;
    if props != PROPS {
        return Err(bad("unexpected vertex properties"));
    }
    let mut raw = vec![0u8; n * 24];
    input.read_exact(&mut raw)?;
    let f = |k: usize| f32::from_le_bytes(raw[4 * k..4 * k + 4].try_into().unwrap()) as f64;
    let mut x = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let b = 6 * i;
        x.push(Vec3::new(f(b), f(b + 1), f(b + 2)));
        v.push(Vec3::new(f(b + 3), f(b + 4), f(b + 5)));
    }
    Ok((x, v))
}
