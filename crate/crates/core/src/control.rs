//! Action decoding and torque-level controllers.
//!
//! Three control modes share one action layout: six SE(3) displacement
//! components, then six stiffness components (OSC modes), then six damping
//! components (adaptive mode only). Every component lives in `[-1, 1]`.

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{orientation_error, pose_apply_delta, DeltaFrame, Pose, Vec3};
use crate::manipulator::{bias_torques, mass_matrix, ChainFrames, ChainSpec, ManipulatorState};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    /// Differential inverse kinematics with a joint PD servo.
    Ik,
    /// Operational-space control with learned stiffness, critical damping.
    OscPart,
    /// Operational-space control with learned stiffness and damping.
    #[default]
    Adaptive,
}

impl ControlMode {
    pub fn action_dim(self) -> usize {
        match self {
            ControlMode::Ik => 6,
            ControlMode::OscPart => 12,
            ControlMode::Adaptive => 18,
        }
    }

    pub fn is_osc(self) -> bool {
        !matches!(self, ControlMode::Ik)
    }
}

impl std::str::FromStr for ControlMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ik" => Ok(ControlMode::Ik),
            "osc-part" => Ok(ControlMode::OscPart),
            "adaptive" => Ok(ControlMode::Adaptive),
            other => Err(Error::config("mode", format!("unknown control mode `{other}`"))),
        }
    }
}

/// Ranges for the stiffness mapping and the damping-ratio ceiling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainLimits {
    /// N/m
    pub kp_translation: [f64; 2],
    /// N·m/rad
    pub kp_rotation: [f64; 2],
    pub zeta_max: f64,
}

impl Default for GainLimits {
    fn default() -> Self {
        Self {
            kp_translation: [10.0, 2000.0],
            kp_rotation: [1.0, 200.0],
            zeta_max: 2.0,
        }
    }
}

impl GainLimits {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [
            ("kp_translation", self.kp_translation),
            ("kp_rotation", self.kp_rotation),
        ] {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::config(name, "require 0 < min < max"));
            }
        }
        if !(self.zeta_max > 0.0 && self.zeta_max.is_finite()) {
            return Err(Error::config("zeta_max", "must be positive"));
        }
        Ok(())
    }

    fn kp_range(&self, axis: usize) -> [f64; 2] {
        if axis < 3 {
            self.kp_translation
        } else {
            self.kp_rotation
        }
    }
}

/// Per-step displacement caps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionScale {
    /// m per control step
    pub max_translation: f64,
    /// rad per control step
    pub max_rotation: f64,
}

impl Default for ActionScale {
    fn default() -> Self {
        Self {
            max_translation: 0.02,
            max_rotation: 0.1,
        }
    }
}

/// Operational-space stiffness and damping, translational axes first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainCommand {
    pub kp: Vector6<f64>,
    pub kd: Vector6<f64>,
}

impl GainCommand {
    /// Stiffness with damping ratio `zeta` on every axis.
    pub fn with_damping_ratio(kp: Vector6<f64>, zeta: f64) -> Self {
        Self {
            kp,
            kd: kp.map(|k| 2.0 * zeta * k.sqrt()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecodedAction {
    pub translation: Vec3,
    pub rotation: Vec3,
    /// `None` in IK mode.
    pub gains: Option<GainCommand>,
}

/// Log-space map of `raw ∈ [-1, 1]` onto `[lo, hi]`, exact at both ends.
fn log_map(raw: f64, [lo, hi]: [f64; 2]) -> f64 {
    let s = 0.5 * (raw + 1.0);
    if s <= 0.0 {
        lo
    } else if s >= 1.0 {
        hi
    } else {
        lo * (hi / lo).powf(s)
    }
}

pub fn decode_action(
    raw: &[f64],
    mode: ControlMode,
    limits: &GainLimits,
    scale: &ActionScale,
) -> Result<DecodedAction> {
    if raw.len() != mode.action_dim() {
        return Err(Error::DimensionMismatch {
            expected: mode.action_dim(),
            got: raw.len(),
        });
    }
    let a: Vec<f64> = raw
        .iter()
        .map(|v| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) })
        .collect();
    let translation = Vec3::new(a[0], a[1], a[2]) * scale.max_translation;
    let rotation = Vec3::new(a[3], a[4], a[5]) * scale.max_rotation;
    let gains = match mode {
        ControlMode::Ik => None,
        ControlMode::OscPart | ControlMode::Adaptive => {
            let kp = Vector6::from_fn(|i, _| log_map(a[6 + i], limits.kp_range(i)));
            let zeta = if mode == ControlMode::Adaptive {
                Vector6::from_fn(|i, _| limits.zeta_max * 0.5 * (a[12 + i] + 1.0))
            } else {
                Vector6::repeat(1.0)
            };
            let kd = Vector6::from_fn(|i, _| 2.0 * zeta[i] * kp[i].sqrt());
            Some(GainCommand { kp, kd })
        }
    };
    Ok(DecodedAction {
        translation,
        rotation,
        gains,
    })
}

/// Tunables of the operational-space law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OscParams {
    /// Regularization added to `J M⁻¹ Jᵀ` before inversion.
    pub epsilon: f64,
    /// Null-space joint damping, N·m·s/rad.
    pub nullspace_damping: f64,
    /// Optional null-space posture stiffness toward `posture`, N·m/rad.
    pub posture_gain: f64,
    pub posture: Option<Vec<f64>>,
}

impl Default for OscParams {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            nullspace_damping: 2.0,
            posture_gain: 0.0,
            posture: None,
        }
    }
}

/// Pose error `(p_t − p; log(R_t Rᵀ))`.
pub fn pose_error(target: &Pose, current: &Pose) -> Vector6<f64> {
    let dp = target.position - current.position;
    let dr = orientation_error(&target.orientation, &current.orientation);
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

/// Operational-space impedance torques with gravity/Coriolis compensation.
pub fn osc_torques(
    spec: &ChainSpec,
    state: &ManipulatorState,
    target: &Pose,
    gains: &GainCommand,
    gravity: &Vec3,
    params: &OscParams,
) -> Result<DVector<f64>> {
    let n = spec.dof();
    spec.check_dof(state.q.len())?;
    let frames = ChainFrames::compute(spec, &state.q)?;
    let jac = frames.point_jacobian(spec, &frames.ee.position, n.saturating_sub(1));
    let m = mass_matrix(spec, &state.q)?;
    let m_inv = m
        .cholesky()
        .ok_or(Error::SingularMassMatrix)?
        .inverse();
    let jt = jac.transpose();
    let a = &jac * &m_inv * &jt + DMatrix::identity(6, 6) * params.epsilon;
    let lambda = a.cholesky().ok_or(Error::SingularMassMatrix)?.inverse();

    let err = pose_error(target, &frames.ee);
    let xdot = &jac * &state.qd;
    let mut wrench = Vector6::zeros();
    for i in 0..6 {
        wrench[i] = gains.kp[i] * err[i] - gains.kd[i] * xdot[i];
    }
    let force = &lambda * DVector::from_column_slice(wrench.as_slice());
    let mut tau = &jt * &force + bias_torques(spec, &state.q, &state.qd, gravity)?;

    let jbar = &m_inv * &jt * &lambda;
    let null = DMatrix::identity(n, n) - &jt * jbar.transpose();
    let mut joint_cmd = -&state.qd * params.nullspace_damping;
    if let Some(posture) = params.posture.as_ref().filter(|_| params.posture_gain > 0.0) {
        spec.check_dof(posture.len())?;
        joint_cmd += (DVector::from_column_slice(posture) - &state.q) * params.posture_gain;
    }
    tau += null * joint_cmd;
    Ok(spec.clamp_torque(&tau))
}

/// Damped least-squares joint targets for an SE(3) displacement.
pub fn ik_joint_targets(
    spec: &ChainSpec,
    state: &ManipulatorState,
    translation: &Vec3,
    rotation: &Vec3,
    lambda_dls: f64,
) -> Result<DVector<f64>> {
    if !(lambda_dls > 0.0) {
        return Err(Error::config("lambda_dls", "must be positive"));
    }
    let frames = ChainFrames::compute(spec, &state.q)?;
    let jac = frames.point_jacobian(spec, &frames.ee.position, spec.dof().saturating_sub(1));
    let twist = DVector::from_vec(vec![
        translation.x,
        translation.y,
        translation.z,
        rotation.x,
        rotation.y,
        rotation.z,
    ]);
    let dq = dls_step(&jac, &twist, lambda_dls);
    Ok(spec.clamp_position(&(&state.q + dq)))
}

/// `Jᵀ (J Jᵀ + λ² I)⁻¹ x`
pub fn dls_step(jac: &DMatrix<f64>, x: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let rows = jac.nrows();
    let a = jac * jac.transpose() + DMatrix::identity(rows, rows) * (lambda * lambda);
    let y = a
        .cholesky()
        .expect("JJᵀ + λ²I is positive definite for λ > 0")
        .solve(x);
    jac.transpose() * y
}

/// Joint-space PD servo with bias compensation.
pub fn joint_pd_torques(
    spec: &ChainSpec,
    state: &ManipulatorState,
    q_des: &DVector<f64>,
    kp: &DVector<f64>,
    kd: &DVector<f64>,
    gravity: &Vec3,
) -> Result<DVector<f64>> {
    spec.check_dof(q_des.len())?;
    spec.check_dof(kp.len())?;
    spec.check_dof(kd.len())?;
    let pd = kp.component_mul(&(q_des - &state.q)) - kd.component_mul(&state.qd);
    let tau = pd + bias_torques(spec, &state.q, &state.qd, gravity)?;
    Ok(spec.clamp_torque(&tau))
}

/// Joint-space servo used under the IK baseline.
///
/// The PD acceleration is shaped by the full mass matrix so that every joint
/// mode, including the light coupled ones, responds with the same natural
/// frequency and stays inside the explicit integrator's stable range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointServo {
    /// rad/s
    pub natural_frequency: f64,
    pub damping_ratio: f64,
}

impl Default for JointServo {
    fn default() -> Self {
        Self {
            natural_frequency: 30.0,
            damping_ratio: 1.0,
        }
    }
}

impl JointServo {
    /// `M (ω²(q_des − q) − 2ζω qd) + bias`, clamped to torque limits.
    pub fn torques(
        &self,
        spec: &ChainSpec,
        state: &ManipulatorState,
        q_des: &DVector<f64>,
        gravity: &Vec3,
    ) -> Result<DVector<f64>> {
        spec.check_dof(q_des.len())?;
        let w = self.natural_frequency;
        let acc = (q_des - &state.q) * (w * w) - &state.qd * (2.0 * self.damping_ratio * w);
        let m = mass_matrix(spec, &state.q)?;
        let tau = m * acc + bias_torques(spec, &state.q, &state.qd, gravity)?;
        Ok(spec.clamp_torque(&tau))
    }
}

/// Everything the closed-loop arm controller needs besides the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub mode: ControlMode,
    pub gain_limits: GainLimits,
    pub action_scale: ActionScale,
    pub delta_frame: DeltaFrame,
    pub osc: OscParams,
    pub lambda_dls: f64,
    pub joint_servo: JointServo,
    /// Largest distance the pose target may lead the end effector, m.
    pub max_target_lead: f64,
    /// Largest angle the pose target may lead the end effector, rad.
    pub max_target_lead_rotation: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            mode: ControlMode::default(),
            gain_limits: GainLimits::default(),
            action_scale: ActionScale::default(),
            delta_frame: DeltaFrame::World,
            osc: OscParams::default(),
            lambda_dls: 0.05,
            joint_servo: JointServo::default(),
            max_target_lead: 0.05,
            max_target_lead_rotation: 0.3,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        self.gain_limits.validate()?;
        let positive = [
            ("action_scale.max_translation", self.action_scale.max_translation),
            ("action_scale.max_rotation", self.action_scale.max_rotation),
            ("lambda_dls", self.lambda_dls),
            ("joint_servo.natural_frequency", self.joint_servo.natural_frequency),
            ("max_target_lead", self.max_target_lead),
            ("max_target_lead_rotation", self.max_target_lead_rotation),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be positive and finite"));
            }
        }
        if !(self.max_target_lead_rotation < std::f64::consts::PI) {
            return Err(Error::config("max_target_lead_rotation", "must be below pi"));
        }
        if !(self.osc.epsilon > 0.0) {
            return Err(Error::config("osc.epsilon", "must be positive"));
        }
        if !(self.osc.nullspace_damping >= 0.0 && self.joint_servo.damping_ratio >= 0.0) {
            return Err(Error::config("damping", "must be non-negative"));
        }
        Ok(())
    }
}

/// Holds the pose target and gains between control steps.
///
/// Each action displaces the previous target. The target is then pulled back
/// so it never leads the end effector by more than the configured bound,
/// which keeps a blocked tool from winding up unbounded force.
#[derive(Clone, Debug)]
pub struct ArmController {
    config: ControllerConfig,
    target: Pose,
    gains: GainCommand,
    q_des: DVector<f64>,
}

impl ArmController {
    /// Starts holding the current end-effector pose with mid-range gains.
    pub fn new(config: ControllerConfig, spec: &ChainSpec, state: &ManipulatorState) -> Result<Self> {
        config.validate()?;
        let target = crate::manipulator::forward_kinematics(spec, &state.q)?;
        let neutral = vec![0.0; config.mode.action_dim()];
        let gains = decode_action(&neutral, config.mode, &config.gain_limits, &config.action_scale)?
            .gains
            .unwrap_or_else(|| GainCommand::with_damping_ratio(Vector6::zeros(), 1.0));
        Ok(Self {
            config,
            target,
            gains,
            q_des: state.q.clone(),
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn target(&self) -> &Pose {
        &self.target
    }

    pub fn gains(&self) -> &GainCommand {
        &self.gains
    }

    pub fn joint_targets(&self) -> &DVector<f64> {
        &self.q_des
    }

    /// Applies one policy action; call once per control step.
    pub fn command(
        &mut self,
        spec: &ChainSpec,
        state: &ManipulatorState,
        raw: &[f64],
    ) -> Result<DecodedAction> {
        let c = &self.config;
        let action = decode_action(raw, c.mode, &c.gain_limits, &c.action_scale)?;
        let ee = crate::manipulator::forward_kinematics(spec, &state.q)?;
        let moved = pose_apply_delta(&self.target, &action.translation, &action.rotation, c.delta_frame);
        self.target = limit_target_lead(&moved, &ee, c.max_target_lead, c.max_target_lead_rotation);
        if let Some(g) = action.gains {
            self.gains = g;
        }
        if c.mode == ControlMode::Ik {
            let e = pose_error(&self.target, &ee);
            let dt = Vec3::new(e[0], e[1], e[2]);
            let dr = Vec3::new(e[3], e[4], e[5]);
            self.q_des = ik_joint_targets(spec, state, &dt, &dr, c.lambda_dls)?;
        }
        Ok(action)
    }

    /// Joint torques for the current physics step.
    pub fn torques(
        &self,
        spec: &ChainSpec,
        state: &ManipulatorState,
        gravity: &Vec3,
    ) -> Result<DVector<f64>> {
        match self.config.mode {
            ControlMode::Ik => self.config.joint_servo.torques(spec, state, &self.q_des, gravity),
            ControlMode::OscPart | ControlMode::Adaptive => {
                osc_torques(spec, state, &self.target, &self.gains, gravity, &self.config.osc)
            }
        }
    }
}

/// Pulls `target` back to within `max_dist` and `max_angle` of `ee`.
pub fn limit_target_lead(target: &Pose, ee: &Pose, max_dist: f64, max_angle: f64) -> Pose {
    let offset = target.position - ee.position;
    let position = if offset.norm() > max_dist {
        ee.position + offset * (max_dist / offset.norm())
    } else {
        target.position
    };
    let rel = orientation_error(&target.orientation, &ee.orientation);
    let orientation = if rel.norm() > max_angle {
        UnitQuaternion::from_scaled_axis(rel * (max_angle / rel.norm())) * ee.orientation
    } else {
        target.orientation
    };
    Pose::new(position, orientation)
}
