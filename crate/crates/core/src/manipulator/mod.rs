//! Serial-chain description, kinematics and rigid-body dynamics.
//!
//! Joint `i` sits at `origin_i` in the frame of link `i-1` (the base for the
//! first joint); its motion is a rotation (revolute) or translation (prismatic)
//! about `axis_i` expressed in that same frame. Link `i` is rigidly attached
//! after the joint motion. The end-effector mount frame hangs off the last link.

mod dynamics;
mod kinematics;

pub use dynamics::{bias_torques, mass_matrix, step_dynamics, SpatialInertia};
pub use kinematics::{forward_kinematics, geometric_jacobian, ChainFrames};

use nalgebra::{DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Mat3, Pose, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkInertial {
    /// kg
    pub mass: f64,
    /// Center of mass in the link frame, m.
    pub com: Vec3,
    /// Inertia tensor about the COM in link-frame axes, kg·m².
    pub inertia: Mat3,
}

impl LinkInertial {
    /// Combines two rigidly attached bodies expressed in the same frame.
    pub fn merged(&self, other: &LinkInertial) -> LinkInertial {
        let mass = self.mass + other.mass;
        let com = (self.com * self.mass + other.com * other.mass) / mass;
        let shift = |b: &LinkInertial| {
            let d = b.com - com;
            b.inertia + b.mass * (Mat3::identity() * d.dot(&d) - d * d.transpose())
        };
        LinkInertial {
            mass,
            com,
            inertia: shift(self) + shift(other),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointSpec {
    pub name: String,
    pub kind: JointKind,
    pub origin: Pose,
    pub axis: Vec3,
    pub lower: f64,
    pub upper: f64,
    pub velocity_limit: f64,
    pub torque_limit: f64,
    pub link: LinkInertial,
}

/// Kinematic and inertial description of a fixed-base serial arm.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSpec {
    pub name: String,
    pub base: Pose,
    pub joints: Vec<JointSpec>,
    pub ee_mount: Pose,
}

/// Instantaneous joint state.
#[derive(Clone, Debug, PartialEq)]
pub struct ManipulatorState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    /// Commanded torque after clamping, N·m.
    pub tau_applied: DVector<f64>,
    /// Joint-space image `Jᵀ w` of the external end-effector wrench, N·m.
    pub tau_external: DVector<f64>,
    pub steps: u64,
}

impl ManipulatorState {
    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            q,
            qd: DVector::zeros(n),
            tau_applied: DVector::zeros(n),
            tau_external: DVector::zeros(n),
            steps: 0,
        }
    }

    /// Torque a joint torque sensor would read: commanded plus external load.
    pub fn measured_torque(&self) -> DVector<f64> {
        &self.tau_applied + &self.tau_external
    }
}

impl ChainSpec {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn lower_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.lower))
    }

    pub fn upper_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.upper))
    }

    pub fn torque_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.torque_limit))
    }

    pub fn clamp_torque(&self, tau: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.dof(),
            tau.iter()
                .zip(&self.joints)
                .map(|(t, j)| t.clamp(-j.torque_limit, j.torque_limit)),
        )
    }

    pub fn clamp_position(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.dof(),
            q.iter()
                .zip(&self.joints)
                .map(|(v, j)| v.clamp(j.lower, j.upper)),
        )
    }

    pub(crate) fn check_dof(&self, len: usize) -> Result<()> {
        if len != self.dof() {
            return Err(Error::DimensionMismatch {
                expected: self.dof(),
                got: len,
            });
        }
        Ok(())
    }

    /// Checks inertial and limit invariants.
    pub fn validate(&self) -> Result<()> {
        for (i, j) in self.joints.iter().enumerate() {
            let tag = format!("joint {i} ({})", j.name);
            if !(j.lower < j.upper) {
                return Err(Error::InvalidChain(format!("{tag}: lower limit >= upper limit")));
            }
            if !(j.link.mass > 0.0) {
                return Err(Error::InvalidChain(format!("{tag}: mass must be positive")));
            }
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidChain(format!("{tag}: axis is not a unit vector")));
            }
            if !(j.velocity_limit > 0.0 && j.torque_limit > 0.0) {
                return Err(Error::InvalidChain(format!("{tag}: limits must be positive")));
            }
            let inertia = j.link.inertia;
            if (inertia - inertia.transpose()).abs().max() > 1e-12 {
                return Err(Error::InvalidChain(format!("{tag}: inertia is not symmetric")));
            }
            if inertia.cholesky().is_none() {
                return Err(Error::InvalidChain(format!(
                    "{tag}: inertia is not positive definite"
                )));
            }
        }
        Ok(())
    }

    /// Rigidly attaches an extra body (e.g. a tool) to the last link.
    ///
    /// `payload_in_mount` is expressed in the end-effector mount frame.
    pub fn with_payload(&self, payload_in_mount: &LinkInertial) -> ChainSpec {
        let mut out = self.clone();
        if let Some(last) = out.joints.last_mut() {
            let r = self.ee_mount.rotation_matrix();
            let in_link = LinkInertial {
                mass: payload_in_mount.mass,
                com: self.ee_mount.transform_point(&payload_in_mount.com),
                inertia: r * payload_in_mount.inertia * r.transpose(),
            };
            last.link = last.link.merged(&in_link);
        }
        out
    }

    /// Approximate 7-joint arm with Franka-like kinematics on a 0.1 m pedestal.
    ///
    /// Kinematic offsets follow the published joint layout; masses and
    /// inertias are order-of-magnitude estimates.
    pub fn franka_approx() -> ChainSpec {
        ChainSpec::from_json(include_str!("../../assets/franka_approx.json"))
            .expect("bundled chain asset is valid")
    }

    pub fn from_json(text: &str) -> Result<ChainSpec> {
        let file: ChainFile = serde_json::from_str(text)?;
        let spec = file.into_spec()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ChainFile::from_spec(self))?)
    }
}

/// On-disk chain description. See `docs/chain-format.md`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainFile {
    name: String,
    #[serde(default)]
    base: FrameFile,
    joints: Vec<JointFile>,
    #[serde(default)]
    ee_mount: FrameFile,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameFile {
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointFile {
    name: String,
    #[serde(default = "revolute")]
    kind: JointKind,
    #[serde(default)]
    origin: FrameFile,
    axis: [f64; 3],
    limits: LimitsFile,
    link: InertialFile,
}

fn revolute() -> JointKind {
    JointKind::Revolute
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitsFile {
    lower: f64,
    upper: f64,
    velocity: f64,
    effort: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InertialFile {
    mass: f64,
    com: [f64; 3],
    /// `[ixx, iyy, izz, ixy, ixz, iyz]` about the COM.
    inertia: [f64; 6],
}

impl FrameFile {
    fn pose(&self) -> Pose {
        Pose::from_xyz_rpy(self.xyz, self.rpy)
    }

    fn from_pose(p: &Pose) -> Self {
        let (r, pi, y) = p.orientation.euler_angles();
        FrameFile {
            xyz: [p.position.x, p.position.y, p.position.z],
            rpy: [r, pi, y],
        }
    }
}

impl ChainFile {
    fn into_spec(self) -> Result<ChainSpec> {
        let joints = self
            .joints
            .into_iter()
            .map(|j| {
                let axis = Vec3::from(j.axis);
                let n = axis.norm();
                if !(n > 1e-12) {
                    return Err(Error::InvalidChain(format!("joint {}: zero axis", j.name)));
                }
                let [ixx, iyy, izz, ixy, ixz, iyz] = j.link.inertia;
                Ok(JointSpec {
                    name: j.name,
                    kind: j.kind,
                    origin: j.origin.pose(),
                    axis: axis / n,
                    lower: j.limits.lower,
                    upper: j.limits.upper,
                    velocity_limit: j.limits.velocity,
                    torque_limit: j.limits.effort,
                    link: LinkInertial {
                        mass: j.link.mass,
                        com: Vec3::from(j.link.com),
                        inertia: Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ChainSpec {
            name: self.name,
            base: self.base.pose(),
            joints,
            ee_mount: self.ee_mount.pose(),
        })
    }

    fn from_spec(spec: &ChainSpec) -> Self {
        ChainFile {
            name: spec.name.clone(),
            base: FrameFile::from_pose(&spec.base),
            ee_mount: FrameFile::from_pose(&spec.ee_mount),
            joints: spec
                .joints
                .iter()
                .map(|j| {
                    let i = j.link.inertia;
                    JointFile {
                        name: j.name.clone(),
                        kind: j.kind,
                        origin: FrameFile::from_pose(&j.origin),
                        axis: [j.axis.x, j.axis.y, j.axis.z],
                        limits: LimitsFile {
                            lower: j.lower,
                            upper: j.upper,
                            velocity: j.velocity_limit,
                            effort: j.torque_limit,
                        },
                        link: InertialFile {
                            mass: j.link.mass,
                            com: [j.link.com.x, j.link.com.y, j.link.com.z],
                            inertia: [
                                i[(0, 0)],
                                i[(1, 1)],
                                i[(2, 2)],
                                i[(0, 1)],
                                i[(0, 2)],
                                i[(1, 2)],
                            ],
                        },
                    }
                })
                .collect(),
        }
    }
}
