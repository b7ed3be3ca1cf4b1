//! Flat-array reset/step surface for foreign-language bindings.
//!
//! Observations are copied out as one `f64` array laid out as
//! `joints_norm, torques_norm, ee_position, ee_rot6d` and, in visual mode,
//! the depth planes row-major one after another. Steps return the usual
//! five-tuple; `terminated` is always false.

use std::collections::BTreeMap;

use super::{Env, EnvConfig, Observation};
use crate::error::{Error, Result};

/// Named segments of the flat observation, in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationLayout {
    pub segments: Vec<(&'static str, usize)>,
    /// `(planes, height, width)` of the trailing depth block.
    pub depth: Option<(usize, usize, usize)>,
}

impl ObservationLayout {
    pub fn len(&self) -> usize {
        let proprio: usize = self.segments.iter().map(|s| s.1).sum();
        proprio + self.depth.map_or(0, |(p, h, w)| p * h * w)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    /// Reward components plus `step` and `dust_fraction`.
    pub info: BTreeMap<String, f64>,
}

/// One environment behind the flat interface. Not shareable between
/// concurrent callers; separate instances may run on separate threads.
pub struct BoundEnv {
    env: Env,
    layout: ObservationLayout,
}

pub fn flatten_observation(obs: &Observation) -> Vec<f64> {
    let mut v = obs.proprio();
    for img in obs.depth.iter().flatten() {
        v.extend(img.data.iter().map(|&d| d as f64));
    }
    v
}

impl BoundEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        let env = Env::new(config)?;
        let dof = env.dof();
        let c = env.config();
        let layout = ObservationLayout {
            segments: vec![("joints_norm", dof), ("torques_norm", dof), ("ee_position", 3), ("ee_rot6d", 6)],
            depth: c.visual.then_some((2, c.cameras.height, c.cameras.width)),
        };
        Ok(Self { env, layout })
    }

    pub fn action_dim(&self) -> usize {
        self.env.action_dim()
    }

    pub fn observation_layout(&self) -> &ObservationLayout {
        &self.layout
    }

    pub fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        Ok(flatten_observation(&self.env.reset(seed)?))
    }

    /// Checks the action length before touching the environment.
    pub fn step(&mut self, action: &[f64]) -> Result<BoundStep> {
        if action.len() != self.action_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.action_dim(),
                got: action.len(),
            });
        }
        let r = self.env.step(action)?;
        let b = &r.reward;
        let info = [
            ("r_approach", b.r_approach),
            ("r_lift", b.r_lift),
            ("r_stabilize", b.r_stabilize),
            ("p_dust", b.p_dust),
            ("p_jerk", b.p_jerk),
            ("total", b.total),
            ("step", r.info.step as f64),
            ("dust_fraction", r.info.dust_fraction),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Ok(BoundStep {
            observation: flatten_observation(&r.observation),
            reward: b.total,
            terminated: false,
            truncated: r.truncated,
            info,
        })
    }

    /// The wrapped native environment, for metrics and inspection.
    pub fn env(&self) -> &Env {
        &self.env
    }
}
