//! Proprioceptive observations.

use nalgebra::DVector;

use super::config::TorqueReading;
use super::render::DepthImage;
use crate::error::Result;
use crate::geom::{rot6d_encode, Pose, Rot6D, Vec3};
use crate::manipulator::{forward_kinematics, ChainSpec, ManipulatorState};

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// Joint positions mapped affinely from their limits onto [−1, 1].
    pub joints_norm: Vec<f64>,
    /// Torques over limits, clamped to [−1, 1].
    pub torques_norm: Vec<f64>,
    /// m
    pub ee_position: Vec3,
    pub ee_rot6d: Rot6D,
    /// Two depth images in visual mode.
    pub depth: Option<Vec<DepthImage>>,
}

impl Observation {
    /// Flat proprioceptive vector: joints, torques, position, rotation.
    pub fn proprio(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.joints_norm.len() * 2 + 9);
        v.extend_from_slice(&self.joints_norm);
        v.extend_from_slice(&self.torques_norm);
        v.extend_from_slice(self.ee_position.as_slice());
        v.extend_from_slice(self.ee_rot6d.as_slice());
        v
    }

    /// EE pose reconstructed from the observation.
    pub fn ee_pose(&self) -> Result<Pose> {
        let r = crate::geom::rot6d_decode(&self.ee_rot6d)?;
        Ok(Pose::from_rotation_matrix(self.ee_position, &r))
    }
}

/// Affine map of `[lo, hi]` onto `[−1, 1]`, exact at both limits.
pub fn normalize_joint(q: f64, lo: f64, hi: f64) -> f64 {
    if q >= hi {
        1.0
    } else if q <= lo {
        -1.0
    } else {
        (2.0 * (q - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
    }
}

pub fn observe(
    spec: &ChainSpec,
    state: &ManipulatorState,
    reading: TorqueReading,
    depth: Option<Vec<DepthImage>>,
) -> Result<Observation> {
    let joints_norm = state
        .q
        .iter()
        .zip(&spec.joints)
        .map(|(q, j)| normalize_joint(*q, j.lower, j.upper))
        .collect();
    let tau: DVector<f64> = match reading {
        TorqueReading::Measured => state.measured_torque(),
        TorqueReading::Commanded => state.tau_applied.clone(),
    };
    let torques_norm = tau
        .iter()
        .zip(&spec.joints)
        .map(|(t, j)| (t / j.torque_limit).clamp(-1.0, 1.0))
        .collect();
    let ee = forward_kinematics(spec, &state.q)?;
    Ok(Observation {
        joints_norm,
        torques_norm,
        ee_position: ee.position,
        ee_rot6d: rot6d_encode(&ee.rotation_matrix())?,
        depth,
    })
}
