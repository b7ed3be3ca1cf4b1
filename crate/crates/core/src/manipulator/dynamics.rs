//! Composite-rigid-body mass matrix and recursive Newton–Euler bias forces.
//!
//! Everything is expressed in world coordinates with spatial vectors taken at
//! the world origin, angular part first: motion `(ω; v_O)`, force `(n_O; f)`.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector6};

use super::{ChainFrames, ChainSpec, JointKind, ManipulatorState};
use crate::error::{Error, Result};
use crate::geom::{skew, Vec3};

type SVec = Vector6<f64>;

/// 6×6 spatial inertia about the world origin.
#[derive(Clone, Copy, Debug)]
pub struct SpatialInertia(pub Matrix6<f64>);

impl SpatialInertia {
    /// Body with mass `m`, world COM `c` and world-axis inertia `ic` about the COM.
    pub fn from_body(m: f64, c: &Vec3, ic: &Matrix3<f64>) -> Self {
        let cx = skew(c);
        let mut out = Matrix6::zeros();
        out.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(ic + m * cx * cx.transpose()));
        out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(m * cx));
        out.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(m * cx.transpose()));
        out.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(Matrix3::identity() * m));
        SpatialInertia(out)
    }
}

fn motion_subspace(kind: JointKind, axis: &Vec3, origin: &Vec3) -> SVec {
    match kind {
        JointKind::Revolute => {
            let v = origin.cross(axis);
            SVec::new(axis.x, axis.y, axis.z, v.x, v.y, v.z)
        }
        JointKind::Prismatic => SVec::new(0.0, 0.0, 0.0, axis.x, axis.y, axis.z),
    }
}

fn split(v: &SVec) -> (Vec3, Vec3) {
    (v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into())
}

fn join(a: Vec3, b: Vec3) -> SVec {
    SVec::new(a.x, a.y, a.z, b.x, b.y, b.z)
}

/// Motion cross product `v ×ₘ m`.
fn cross_motion(v: &SVec, m: &SVec) -> SVec {
    let (w, vo) = split(v);
    let (mw, mv) = split(m);
    join(w.cross(&mw), w.cross(&mv) + vo.cross(&mw))
}

/// Force cross product `v ×* f`.
fn cross_force(v: &SVec, f: &SVec) -> SVec {
    let (w, vo) = split(v);
    let (n, fl) = split(f);
    join(w.cross(&n) + vo.cross(&fl), w.cross(&fl))
}

struct WorldModel {
    subspaces: Vec<SVec>,
    inertias: Vec<SpatialInertia>,
}

impl WorldModel {
    fn new(spec: &ChainSpec, frames: &ChainFrames) -> Self {
        let subspaces = spec
            .joints
            .iter()
            .enumerate()
            .map(|(i, j)| motion_subspace(j.kind, &frames.axes[i], &frames.origins[i]))
            .collect();
        let inertias = spec
            .joints
            .iter()
            .zip(&frames.links)
            .map(|(j, frame)| {
                let r = frame.rotation_matrix();
                let c = frame.transform_point(&j.link.com);
                SpatialInertia::from_body(j.link.mass, &c, &(r * j.link.inertia * r.transpose()))
            })
            .collect();
        Self {
            subspaces,
            inertias,
        }
    }
}

/// Joint-space inertia matrix by the composite-rigid-body algorithm.
pub fn mass_matrix(spec: &ChainSpec, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let frames = ChainFrames::compute(spec, q)?;
    let model = WorldModel::new(spec, &frames);
    let n = spec.dof();
    let mut m = DMatrix::zeros(n, n);
    let mut composite = Matrix6::zeros();
    for j in (0..n).rev() {
        composite += model.inertias[j].0;
        let force = composite * model.subspaces[j];
        for i in 0..=j {
            let v = model.subspaces[i].dot(&force);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Coriolis, centrifugal and gravity torques (inverse dynamics at zero acceleration).
pub fn bias_torques(
    spec: &ChainSpec,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    gravity: &Vec3,
) -> Result<DVector<f64>> {
    spec.check_dof(qd.len())?;
    let frames = ChainFrames::compute(spec, q)?;
    let model = WorldModel::new(spec, &frames);
    let n = spec.dof();

    let mut vel = SVec::zeros();
    let mut acc = join(Vec3::zeros(), -gravity);
    let mut forces = Vec::with_capacity(n);
    for i in 0..n {
        let s = model.subspaces[i];
        vel += s * qd[i];
        acc += cross_motion(&vel, &s) * qd[i];
        let inertia = model.inertias[i].0;
        forces.push(inertia * acc + cross_force(&vel, &(inertia * vel)));
    }

    let mut tau = DVector::zeros(n);
    let mut carried = SVec::zeros();
    for i in (0..n).rev() {
        carried += forces[i];
        tau[i] = model.subspaces[i].dot(&carried);
    }
    Ok(tau)
}

/// Advances the arm by one semi-implicit Euler step.
///
/// `wrench_ext` is `(force; torque)` acting at the end-effector origin.
pub fn step_dynamics(
    spec: &ChainSpec,
    state: &ManipulatorState,
    tau_cmd: &DVector<f64>,
    wrench_ext: &Vector6<f64>,
    gravity: &Vec3,
    dt: f64,
) -> Result<ManipulatorState> {
    spec.check_dof(tau_cmd.len())?;
    if !(dt > 0.0) {
        return Err(Error::config("dt", "must be positive"));
    }
    let frames = ChainFrames::compute(spec, &state.q)?;
    let jac = frames.point_jacobian(spec, &frames.ee.position, spec.dof().saturating_sub(1));
    let tau = spec.clamp_torque(tau_cmd);
    let tau_ext = jac.transpose() * wrench_ext;
    let m = mass_matrix(spec, &state.q)?;
    let bias = bias_torques(spec, &state.q, &state.qd, gravity)?;
    let chol = m.cholesky().ok_or(Error::SingularMassMatrix)?;
    let qdd = chol.solve(&(&tau + &tau_ext - bias));

    let mut qd = &state.qd + qdd * dt;
    for (v, j) in qd.iter_mut().zip(&spec.joints) {
        *v = v.clamp(-j.velocity_limit, j.velocity_limit);
    }
    let mut q = &state.q + &qd * dt;
    for ((qi, vi), j) in q.iter_mut().zip(qd.iter_mut()).zip(&spec.joints) {
        if *qi <= j.lower {
            *qi = j.lower;
            *vi = 0.0;
        } else if *qi >= j.upper {
            *qi = j.upper;
            *vi = 0.0;
        }
    }
    if q.iter().chain(qd.iter()).any(|v| !v.is_finite()) {
        return Err(Error::SolverDivergence {
            substep: state.steps,
            detail: "arm state became non-finite".into(),
        });
    }
    Ok(ManipulatorState {
        q,
        qd,
        tau_applied: tau,
        tau_external: tau_ext,
        steps: state.steps + 1,
    })
}
