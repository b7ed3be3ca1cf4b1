//! Composite excavation reward.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config::RewardConfig;
use crate::geom::Vec3;
use crate::granular::ParticleSet;

/// Per-step reward components. Penalties are stored as non-negative magnitudes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_approach: f64,
    pub r_lift: f64,
    pub r_stabilize: f64,
    pub p_dust: f64,
    pub p_jerk: f64,
    pub total: f64,
}

impl RewardBreakdown {
    /// Fills `total` from the components.
    pub fn assemble(r_approach: f64, particles: &ParticleTerms, p_jerk: f64) -> Self {
        Self {
            r_approach,
            r_lift: particles.r_lift,
            r_stabilize: particles.r_stabilize,
            p_dust: particles.p_dust,
            p_jerk,
            total: r_approach + particles.r_lift + particles.r_stabilize - particles.p_dust - p_jerk,
        }
    }

    pub fn components(&self) -> [(&'static str, f64); 6] {
        [
            ("r_approach", self.r_approach),
            ("r_lift", self.r_lift),
            ("r_stabilize", self.r_stabilize),
            ("p_dust", self.p_dust),
            ("p_jerk", self.p_jerk),
            ("total", self.total),
        ]
    }
}

/// Particle-dependent reward components; refreshed on the reward period only.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParticleTerms {
    pub r_lift: f64,
    pub r_stabilize: f64,
    pub p_dust: f64,
    /// Particles inside the lift band.
    pub lifted: usize,
    /// Lifted particles slower than the stability speed.
    pub stable: usize,
}

/// Counts lifted, stable and dusty particles.
pub fn particle_terms(p: &ParticleSet, band: [f64; 2], cfg: &RewardConfig) -> ParticleTerms {
    let n = p.len();
    if n == 0 {
        return ParticleTerms::default();
    }
    let mut lifted = 0;
    let mut stable = 0;
    let mut excess = 0.0;
    for (x, v) in p.x.iter().zip(&p.v) {
        let speed = v.norm();
        if x.z >= band[0] && x.z <= band[1] {
            lifted += 1;
            if speed < cfg.stability_speed {
                stable += 1;
            }
        }
        excess += (speed - cfg.dust_speed).max(0.0);
    }
    let w = &cfg.weights;
    ParticleTerms {
        r_lift: w.lift * lifted as f64 / n as f64,
        r_stabilize: w.stabilize * stable as f64 / n as f64,
        p_dust: w.dust * excess / n as f64,
        lifted,
        stable,
    }
}

/// Distance shaping toward the pile plus top-down alignment of the tool axis.
pub fn approach_term(tool_point: &Vec3, tool_axis: &Vec3, pile_point: &Vec3, cfg: &RewardConfig) -> f64 {
    let d = (tool_point - pile_point).norm();
    let align = (-tool_axis.z).clamp(0.0, 1.0);
    cfg.weights.approach * (-d / cfg.approach_length).exp() + cfg.weights.orientation * align
}

/// Action-rate and normalized-torque penalty.
pub fn jerk_penalty(action: &[f64], prev_action: &[f64], torque: &DVector<f64>, limits: &DVector<f64>, cfg: &RewardConfig) -> f64 {
    let rate: f64 = action
        .iter()
        .zip(prev_action)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let n = torque.len().max(1) as f64;
    let effort: f64 = torque
        .iter()
        .zip(limits.iter())
        .map(|(t, l)| (t / l).powi(2))
        .sum::<f64>()
        / n;
    cfg.weights.action_rate * rate + cfg.weights.torque * effort
}

/// Everything a full reward evaluation reads.
#[derive(Clone, Copy, Debug)]
pub struct RewardState<'a> {
    pub particles: &'a ParticleSet,
    /// World z range of the lift band, m.
    pub band: [f64; 2],
    pub tool_point: Vec3,
    /// Tool mount z axis in the world.
    pub tool_axis: Vec3,
    pub pile_point: Vec3,
    pub torque: &'a DVector<f64>,
    pub torque_limits: &'a DVector<f64>,
}

/// All components evaluated from scratch; the environment additionally caches
/// the particle terms between reward periods.
pub fn compute_reward(state: &RewardState, prev_action: &[f64], action: &[f64], cfg: &RewardConfig) -> RewardBreakdown {
    let particles = particle_terms(state.particles, state.band, cfg);
    let approach = approach_term(&state.tool_point, &state.tool_axis, &state.pile_point, cfg);
    let jerk = jerk_penalty(action, prev_action, state.torque, state.torque_limits, cfg);
    RewardBreakdown::assemble(approach, &particles, jerk)
}
