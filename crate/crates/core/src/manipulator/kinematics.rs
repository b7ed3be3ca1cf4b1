use nalgebra::{DMatrix, DVector, UnitQuaternion};

use super::{ChainSpec, JointKind};
use crate::error::Result;
use crate::geom::{Pose, Vec3};

/// World-frame quantities for one configuration.
#[derive(Clone, Debug)]
pub struct ChainFrames {
    /// Link frames after joint motion.
    pub links: Vec<Pose>,
    /// Joint axes in world coordinates.
    pub axes: Vec<Vec3>,
    /// Joint origins in world coordinates.
    pub origins: Vec<Vec3>,
    pub ee: Pose,
}

impl ChainFrames {
    pub fn compute(spec: &ChainSpec, q: &DVector<f64>) -> Result<Self> {
        spec.check_dof(q.len())?;
        let n = spec.dof();
        let mut links = Vec::with_capacity(n);
        let mut axes = Vec::with_capacity(n);
        let mut origins = Vec::with_capacity(n);
        let mut parent = spec.base;
        for (j, &qi) in spec.joints.iter().zip(q.iter()) {
            let joint_frame = parent.compose(&j.origin);
            axes.push(joint_frame.orientation * j.axis);
            origins.push(joint_frame.position);
            let motion = match j.kind {
                JointKind::Revolute => Pose::new(
                    Vec3::zeros(),
                    UnitQuaternion::from_scaled_axis(j.axis * qi),
                ),
                JointKind::Prismatic => Pose::from_translation(j.axis * qi),
            };
            parent = joint_frame.compose(&motion);
            links.push(parent);
        }
        let ee = parent.compose(&spec.ee_mount);
        Ok(Self {
            links,
            axes,
            origins,
            ee,
        })
    }

    /// Geometric Jacobian of an arbitrary point rigidly attached to link `upto`
    /// (or to the end effector when `upto` is the last link).
    pub fn point_jacobian(&self, spec: &ChainSpec, point: &Vec3, upto: usize) -> DMatrix<f64> {
        let n = spec.dof();
        let mut jac = DMatrix::zeros(6, n);
        for i in 0..=upto.min(n.saturating_sub(1)) {
            if n == 0 {
                break;
            }
            let z = self.axes[i];
            let (lin, ang) = match spec.joints[i].kind {
                JointKind::Revolute => (z.cross(&(point - self.origins[i])), z),
                JointKind::Prismatic => (z, Vec3::zeros()),
            };
            jac.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            jac.fixed_view_mut::<3, 1>(3, i).copy_from(&ang);
        }
        jac
    }
}

/// End-effector mount pose in world coordinates.
pub fn forward_kinematics(spec: &ChainSpec, q: &DVector<f64>) -> Result<Pose> {
    Ok(ChainFrames::compute(spec, q)?.ee)
}

/// 6×n Jacobian with linear rows first, evaluated at the end-effector origin.
pub fn geometric_jacobian(spec: &ChainSpec, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let frames = ChainFrames::compute(spec, q)?;
    Ok(frames.point_jacobian(spec, &frames.ee.position, spec.dof().saturating_sub(1)))
}
