//! Episode CSV, run manifest and the particle state layout read per control step.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::EnvConfig;
use super::metrics::{EpisodeMetrics, EpisodeRecord};
use crate::error::Result;
use crate::granular::ParticleSet;
use crate::procgen::ToolSpec;

/// Position and velocity as six little-endian f32 values.
pub const STATE_BYTES_PER_PARTICLE: usize = 6 * std::mem::size_of::<f32>();

/// Bytes per second needed to read the full particle state `rate_hz` times a second.
pub fn state_read_bandwidth(particles: usize, rate_hz: f64) -> f64 {
    (particles * STATE_BYTES_PER_PARTICLE) as f64 * rate_hz
}

/// Packs the particle state in the documented layout: `x y z vx vy vz` per particle.
pub fn pack_state_f32(p: &ParticleSet) -> Vec<f32> {
    let mut out = Vec::with_capacity(p.len() * 6);
    for (x, v) in p.x.iter().zip(&p.v) {
        out.extend([x.x, x.y, x.z, v.x, v.y, v.z].map(|c| c as f32));
    }
    out
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the canonical config JSON.
pub fn config_hash(config: &EnvConfig) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(config)?.as_bytes()))
}

/// Short stable identifier of a tool spec.
pub fn tool_id(spec: &ToolSpec) -> Result<String> {
    let mut h = sha256_hex(serde_json::to_string(spec)?.as_bytes());
    h.truncate(12);
    Ok(h)
}

/// Header of the per-step CSV for an `n`-joint arm.
pub fn episode_csv_header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = ["step", "r_approach", "r_lift", "r_stabilize", "p_dust", "p_jerk", "total"]
        .into_iter()
        .chain(["ee_x", "ee_y", "ee_z", "ee_qw", "ee_qx", "ee_qy", "ee_qz"])
        .map(String::from)
        .collect();
    h.extend((0..n).map(|i| format!("q{i}")));
    h.extend((0..n).map(|i| format!("qd{i}")));
    h
}

/// One row per control step: rewards, EE pose and joint state.
pub fn write_episode_csv(out: impl Write, record: &EpisodeRecord) -> Result<()> {
    let n = record.q0.len();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(episode_csv_header(n)).map_err(csv_error)?;
    for s in &record.steps {
        let r = &s.reward;
        let q = s.ee.orientation;
        let mut row = vec![s.step.to_string()];
        row.extend(
            [
                r.r_approach,
                r.r_lift,
                r.r_stabilize,
                r.p_dust,
                r.p_jerk,
                r.total,
                s.ee.position.x,
                s.ee.position.y,
                s.ee.position.z,
                q.w,
                q.i,
                q.j,
                q.k,
            ]
            .iter()
            .chain(s.q.iter())
            .chain(s.qd.iter())
            .map(|v| v.to_string()),
        );
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> crate::Error {
    std::io::Error::other(e).into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEpisode {
    pub seed: u64,
    pub tool_id: String,
    pub metrics: EpisodeMetrics,
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub command: String,
    pub policy: String,
    pub deterministic: bool,
    pub seeds: Vec<u64>,
    pub episodes: Vec<ManifestEpisode>,
}

impl RunManifest {
    pub fn new(config: &EnvConfig, command: &str, policy: &str) -> Result<Self> {
        Ok(Self {
            config_hash: config_hash(config)?,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            policy: policy.to_string(),
            deterministic: config.deterministic,
            seeds: Vec::new(),
            episodes: Vec::new(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
