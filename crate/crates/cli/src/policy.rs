//! Scripted stand-ins for a trained agent.

use clap::ValueEnum;
use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use regolith_core::control::{decode_action, limit_target_lead, ControlMode, ControllerConfig};
use regolith_core::env::{Env, Observation};
use regolith_core::geom::{orientation_error, pose_apply_delta, DeltaFrame, Mat3, Pose, SeededStream, Vec3};
use regolith_core::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Zero,
    Random,
    ScoopScript,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Zero => "zero",
            PolicyKind::Random => "random",
            PolicyKind::ScoopScript => "scoop-script",
        }
    }
}

/// Waypoint schedule of the scoop script. Distances in m, angles in degrees,
/// durations in s. Stiffness and damping entries are raw action values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoopParams {
    /// Lip start point beyond the pile center along +x, away from the arm base.
    pub approach_offset: f64,
    /// Lip clearance above the pile top at the end of the approach.
    pub approach_clearance: f64,
    /// Downward pitch of the lip while digging.
    pub dig_pitch_deg: f64,
    /// Lip height above the pile base at the bottom of the plunge.
    pub dig_height: f64,
    /// Horizontal pull toward the arm base.
    pub drag_distance: f64,
    /// Lip rise during the curl.
    pub curl_rise: f64,
    /// Lip elevation after the curl.
    pub curl_lip_up_deg: f64,
    /// Lip height above the settled surface at the end of the lift.
    pub lift_height: f64,
    /// Turn, approach, plunge, drag, curl and lift; the hold fills the rest.
    pub durations: [f64; 6],
    pub free_stiffness: f64,
    pub contact_stiffness: f64,
    pub damping: f64,
}

impl Default for ScoopParams {
    fn default() -> Self {
        Self {
            approach_offset: 0.0,
            approach_clearance: 0.03,
            dig_pitch_deg: 45.0,
            dig_height: 0.05,
            drag_distance: 0.15,
            curl_rise: 0.10,
            curl_lip_up_deg: 15.0,
            lift_height: 0.42,
            durations: [1.5, 2.0, 1.5, 2.5, 1.5, 3.0],
            free_stiffness: 1.0,
            contact_stiffness: 0.6,
            damping: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Waypoint {
    /// Lip position, world.
    lip: Vec3,
    orientation: UnitQuaternion<f64>,
    /// Time the waypoint is reached, s.
    time: f64,
    stiffness: f64,
}

/// Tracks the controller target the way the controller itself updates it, and
/// steers it along a time-parameterized waypoint path.
#[derive(Clone, Debug)]
pub struct ScoopScript {
    waypoints: Vec<Waypoint>,
    /// Lip position in the mount frame.
    lip_local: Vec3,
    target: Pose,
    controller: ControllerConfig,
    dt: f64,
    time: f64,
    damping: f64,
}

fn about_y(deg: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::y_axis(), deg.to_radians())
}

fn about_z(deg: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), deg.to_radians())
}

impl ScoopScript {
    pub fn new(env: &Env, first: &Observation, params: &ScoopParams) -> Result<Self> {
        let info = env.reset_info()?;
        let (lo, hi) = env.tool()?.mesh.bounding_box();
        // front edge of the floor, on the center line
        let lip_local = Vec3::new(0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y), hi.z);
        let start = first.ee_pose()?;
        let c = env.config();
        let center = Vec3::new(c.pile.center[0], c.pile.center[1], 0.0);
        // The start hangs the tool with the cavity toward +x. The dig pulls
        // toward the arm base (−x), which keeps the wrist pitch joint inside
        // its range, so the tool first turns about world z to face −x. The
        // turn goes through −90° so the interpolation takes the side the last
        // joint can reach.
        let hanging = UnitQuaternion::from_matrix(&Mat3::from_columns(&[Vec3::y(), Vec3::x(), -Vec3::z()]));
        let half_turn = about_z(-90.0) * hanging;
        let facing = about_z(-180.0) * hanging;
        // pitching about world y by θ tips the lip toward −x; at 90° the cavity faces up
        let dig = about_y(params.dig_pitch_deg) * facing;
        let curled = about_y(90.0 + params.curl_lip_up_deg) * facing;
        let base = info.pile_base;
        let d = params.durations;
        let start_lip = start.transform_point(&lip_local);
        let a = Vec3::new(center.x + params.approach_offset, center.y, info.pile_top + params.approach_clearance);
        let plunged = Vec3::new(a.x, a.y, base + params.dig_height);
        let dragged = plunged - Vec3::new(params.drag_distance, 0.0, 0.0);
        let curl = dragged + Vec3::new(0.0, 0.0, params.curl_rise);
        let lifted = Vec3::new(curl.x, curl.y, info.surface_height + params.lift_height);
        let free = params.free_stiffness;
        let contact = params.contact_stiffness;
        let mut t = 0.0;
        let mut waypoints = vec![Waypoint {
            lip: start_lip,
            orientation: start.orientation,
            time: t,
            stiffness: free,
        }];
        for (lip, orientation, dt, stiffness) in [
            (start_lip, half_turn, 0.5 * d[0], free),
            (start_lip, facing, 0.5 * d[0], free),
            (a, dig, d[1], free),
            (plunged, dig, d[2], contact),
            (dragged, dig, d[3], contact),
            (curl, curled, d[4], contact),
            (lifted, curled, d[5], free),
        ] {
            t += dt;
            waypoints.push(Waypoint {
                lip,
                orientation,
                time: t,
                stiffness,
            });
        }
        Ok(Self {
            waypoints,
            lip_local,
            target: start,
            controller: c.controller.clone(),
            dt: c.control_dt(),
            time: 0.0,
            damping: params.damping,
        })
    }

    /// Mount pose and stiffness on the path at time `t`; holds after the last waypoint.
    fn desired(&self, t: f64) -> (Pose, f64) {
        let w = &self.waypoints;
        let k = w.iter().position(|p| p.time >= t).unwrap_or(w.len() - 1);
        let (lip, q, stiffness) = if k == 0 {
            (w[0].lip, w[0].orientation, w[0].stiffness)
        } else if t >= w[k].time {
            (w[k].lip, w[k].orientation, w[k].stiffness)
        } else {
            let (a, b) = (&w[k - 1], &w[k]);
            let s = (t - a.time) / (b.time - a.time);
            (a.lip.lerp(&b.lip, s), a.orientation.slerp(&b.orientation, s), b.stiffness)
        };
        (Pose::new(lip - (q * self.lip_local), q), stiffness)
    }

    pub fn act(&mut self, obs: &Observation) -> Result<Vec<f64>> {
        let c = &self.controller;
        let ee = obs.ee_pose()?;
        self.time += self.dt;
        let (want, stiffness) = self.desired(self.time);
        let mut dp = want.position - self.target.position;
        let mut dr = orientation_error(&want.orientation, &self.target.orientation);
        if c.delta_frame == DeltaFrame::EndEffector {
            dp = self.target.orientation.inverse() * dp;
            dr = self.target.orientation.inverse() * dr;
        }
        let mode = c.mode;
        let mut raw = vec![0.0; mode.action_dim()];
        for i in 0..3 {
            raw[i] = (dp[i] / c.action_scale.max_translation).clamp(-1.0, 1.0);
            raw[3 + i] = (dr[i] / c.action_scale.max_rotation).clamp(-1.0, 1.0);
        }
        if mode != ControlMode::Ik {
            raw[6..12].fill(stiffness);
        }
        if mode == ControlMode::Adaptive {
            raw[12..18].fill(self.damping);
        }
        let decoded = decode_action(&raw, mode, &c.gain_limits, &c.action_scale)?;
        let moved = pose_apply_delta(&self.target, &decoded.translation, &decoded.rotation, c.delta_frame);
        self.target = limit_target_lead(&moved, &ee, c.max_target_lead, c.max_target_lead_rotation);
        Ok(raw)
    }
}

// built once per episode, so the variant size gap does not matter
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug)]
pub enum ScriptedPolicy {
    Zero { dim: usize },
    Random { dim: usize, rng: SeededStream },
    Scoop(Box<ScoopScript>),
}

impl ScriptedPolicy {
    /// Policy for one episode that has just been reset.
    ///
    /// The random policy draws from a stream keyed by both seeds, so every
    /// episode sees its own action sequence.
    pub fn for_episode(
        kind: PolicyKind,
        policy_seed: u64,
        episode_seed: u64,
        env: &Env,
        first: &Observation,
        scoop: &ScoopParams,
    ) -> Result<Self> {
        let dim = env.action_dim();
        Ok(match kind {
            PolicyKind::Zero => ScriptedPolicy::Zero { dim },
            PolicyKind::Random => ScriptedPolicy::Random {
                dim,
                rng: SeededStream::new(policy_seed).substream_indexed("episode", episode_seed),
            },
            PolicyKind::ScoopScript => ScriptedPolicy::Scoop(Box::new(ScoopScript::new(env, first, scoop)?)),
        })
    }

    /// Next action; always the mode's dimension with entries in [−1, 1].
    pub fn act(&mut self, obs: &Observation) -> Result<Vec<f64>> {
        match self {
            ScriptedPolicy::Zero { dim } => Ok(vec![0.0; *dim]),
            ScriptedPolicy::Random { dim, rng } => Ok((0..*dim).map(|_| rng.uniform(-1.0, 1.0)).collect()),
            ScriptedPolicy::Scoop(s) => s.act(obs),
        }
    }
}
