use nalgebra::{DVector, Rotation3, Unit, UnitQuaternion, Vector6};
use proptest::prelude::*;
use regolith_core::geom::{
    pose_apply_delta, rot6d_decode, rot6d_encode, DeltaFrame, Mat3, Pose, Rot6D, SeededStream,
    Vec3,
};
use regolith_core::manipulator::{
    bias_torques, forward_kinematics, geometric_jacobian, mass_matrix, step_dynamics, ChainFrames,
    ChainSpec, ManipulatorState,
};

fn random_q(chain: &ChainSpec, rng: &mut SeededStream) -> DVector<f64> {
    DVector::from_iterator(
        chain.dof(),
        chain.joints.iter().map(|j| rng.uniform(j.lower, j.upper)),
    )
}

fn random_rotation(rng: &mut SeededStream) -> Mat3 {
    let axis = Vec3::new(rng.normal(0.0, 1.0), rng.normal(0.0, 1.0), rng.normal(0.0, 1.0));
    let angle = rng.uniform(-std::f64::consts::PI, std::f64::consts::PI);
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner()
}

#[test]
fn rot6d_round_trip_1000_rotations() {
    let mut rng = SeededStream::new(11);
    for _ in 0..1000 {
        let r = random_rotation(&mut rng);
        let back = rot6d_decode(&rot6d_encode(&r).unwrap()).unwrap();
        assert!((back - r).norm() < 1e-9);
    }
}

proptest! {
    #[test]
    fn decode_is_always_a_proper_rotation(a in prop::array::uniform6(-10.0f64..10.0)) {
        let a1 = Vec3::new(a[0], a[1], a[2]);
        let a2 = Vec3::new(a[3], a[4], a[5]);
        prop_assume!(a1.norm() > 1e-3);
        prop_assume!((a2 - a1 * a1.dot(&a2) / a1.norm_squared()).norm() > 1e-3);
        let r = rot6d_decode(&Rot6D(a)).unwrap();
        prop_assert!((r.transpose() * r - Mat3::identity()).norm() < 1e-9);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_delta_is_bit_exact_identity(
        p in prop::array::uniform3(-1.0f64..1.0),
        e in prop::array::uniform3(-3.0f64..3.0),
    ) {
        let pose = Pose::from_xyz_rpy(p, e);
        for frame in [DeltaFrame::World, DeltaFrame::EndEffector] {
            prop_assert_eq!(pose_apply_delta(&pose, &Vec3::zeros(), &Vec3::zeros(), frame), pose);
        }
    }

    #[test]
    fn deltas_keep_unit_quaternions(
        e in prop::array::uniform3(-3.0f64..3.0),
        dr in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let pose = Pose::from_xyz_rpy([0.0; 3], e);
        let out = pose_apply_delta(&pose, &Vec3::zeros(), &Vec3::from(dr), DeltaFrame::World);
        prop_assert!((out.orientation.into_inner().norm() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn seeded_streams_agree_for_a_million_draws() {
    use rand::RngCore;
    let mut a = SeededStream::new(2024);
    let mut b = SeededStream::new(2024);
    for _ in 0..1_000_000 {
        assert_eq!(a.next_u64(), b.next_u64());
    }
}

/// Central differences of forward kinematics, independent of the Jacobian code.
fn fd_jacobian(chain: &ChainSpec, q: &DVector<f64>, h: f64) -> nalgebra::DMatrix<f64> {
    let n = chain.dof();
    let mut j = nalgebra::DMatrix::zeros(6, n);
    for i in 0..n {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[i] += h;
        qm[i] -= h;
        let pp = forward_kinematics(chain, &qp).unwrap();
        let pm = forward_kinematics(chain, &qm).unwrap();
        let dp = (pp.position - pm.position) / (2.0 * h);
        let dr = (pp.orientation * pm.orientation.inverse()).scaled_axis() / (2.0 * h);
        for k in 0..3 {
            j[(k, i)] = dp[k];
            j[(k + 3, i)] = dr[k];
        }
    }
    j
}

#[test]
fn jacobian_matches_finite_differences() {
    let chain = ChainSpec::franka_approx();
    let mut rng = SeededStream::new(3);
    for _ in 0..100 {
        let q = random_q(&chain, &mut rng);
        let j = geometric_jacobian(&chain, &q).unwrap();
        let fd = fd_jacobian(&chain, &q, 1e-6);
        assert!((j - fd).amax() < 1e-5);
    }
}

#[test]
fn mass_matrix_is_symmetric_positive_definite() {
    let chain = ChainSpec::franka_approx();
    let mut rng = SeededStream::new(4);
    for k in 0..1000 {
        let q = random_q(&chain, &mut rng);
        let m = mass_matrix(&chain, &q).unwrap();
        if k < 100 {
            assert!((&m - m.transpose()).amax() < 1e-10);
        }
        assert!(m.cholesky().is_some());
    }
}

/// Kinetic energy summed per link from finite-differenced link motion.
fn fd_kinetic_energy(chain: &ChainSpec, q: &DVector<f64>, qd: &DVector<f64>) -> f64 {
    let h = 1e-6;
    let fp = ChainFrames::compute(chain, &(q + qd * h)).unwrap();
    let fm = ChainFrames::compute(chain, &(q - qd * h)).unwrap();
    let f0 = ChainFrames::compute(chain, q).unwrap();
    let mut ke = 0.0;
    for (i, j) in chain.joints.iter().enumerate() {
        let cp = fp.links[i].transform_point(&j.link.com);
        let cm = fm.links[i].transform_point(&j.link.com);
        let v = (cp - cm) / (2.0 * h);
        let w = (fp.links[i].orientation * fm.links[i].orientation.inverse()).scaled_axis()
            / (2.0 * h);
        let r = f0.links[i].rotation_matrix();
        let iw = r * j.link.inertia * r.transpose();
        ke += 0.5 * j.link.mass * v.norm_squared() + 0.5 * w.dot(&(iw * w));
    }
    ke
}

#[test]
fn mass_matrix_energy_matches_link_energies() {
    let chain = ChainSpec::franka_approx();
    let mut rng = SeededStream::new(5);
    for _ in 0..50 {
        let q = random_q(&chain, &mut rng);
        let qd = DVector::from_iterator(7, (0..7).map(|_| rng.uniform(-1.0, 1.0)));
        let m = mass_matrix(&chain, &q).unwrap();
        let ke = 0.5 * qd.dot(&(&m * &qd));
        let oracle = fd_kinetic_energy(&chain, &q, &qd);
        assert!((ke - oracle).abs() < 1e-8, "{ke} vs {oracle}");
    }
}

#[test]
fn bias_compensation_keeps_arm_at_rest() {
    let chain = ChainSpec::franka_approx();
    let g = Vec3::new(0.0, 0.0, -1.62);
    let mut rng = SeededStream::new(6);
    let mut s = ManipulatorState::at_rest(random_q(&chain, &mut rng));
    for _ in 0..1000 {
        let tau = bias_torques(&chain, &s.q, &s.qd, &g).unwrap();
        s = step_dynamics(&chain, &s, &tau, &Vector6::zeros(), &g, 1.0 / 250.0).unwrap();
        assert!(s.qd.amax() < 1e-12);
    }
}

#[test]
fn bias_at_rest_is_pure_gravity_and_inverse_dynamics_is_consistent() {
    // With τ = M q̈_des + bias, the integrator must realize q̈_des.
    let chain = ChainSpec::franka_approx();
    let g = Vec3::new(0.0, 0.0, -1.62);
    let mut rng = SeededStream::new(7);
    for _ in 0..20 {
        let q = random_q(&chain, &mut rng);
        let qd = DVector::from_iterator(7, (0..7).map(|_| rng.uniform(-0.5, 0.5)));
        let qdd = DVector::from_iterator(7, (0..7).map(|_| rng.uniform(-0.5, 0.5)));
        let m = mass_matrix(&chain, &q).unwrap();
        let tau = &m * &qdd + bias_torques(&chain, &q, &qd, &g).unwrap();
        let mut big = chain.clone();
        for j in &mut big.joints {
            j.torque_limit = 1e9;
            j.velocity_limit = 1e9;
            j.lower = -1e9;
            j.upper = 1e9;
        }
        let s = ManipulatorState {
            qd: qd.clone(),
            ..ManipulatorState::at_rest(q.clone())
        };
        let dt = 1e-3;
        let next = step_dynamics(&big, &s, &tau, &Vector6::zeros(), &g, dt).unwrap();
        let realized = (&next.qd - &qd) / dt;
        assert!((realized - qdd).amax() < 1e-9);
    }
}

#[test]
fn coriolis_terms_conserve_energy_without_gravity() {
    // Free motion with zero torque and zero gravity conserves kinetic energy
    // to integrator accuracy; a wrong Coriolis term shows up as drift.
    let mut chain = ChainSpec::franka_approx();
    for j in &mut chain.joints {
        j.lower = -1e9;
        j.upper = 1e9;
        j.velocity_limit = 1e9;
    }
    let q0 = DVector::from_vec(vec![0.0, -0.5, 0.3, -2.0, 0.2, 1.5, 0.4]);
    let mut s = ManipulatorState::at_rest(q0);
    s.qd = DVector::from_vec(vec![0.5, -0.3, 0.4, 0.2, -0.6, 0.3, 0.8]);
    let ke = |s: &ManipulatorState| 0.5 * s.qd.dot(&(mass_matrix(&chain, &s.q).unwrap() * &s.qd));
    let e0 = ke(&s);
    for _ in 0..2000 {
        s = step_dynamics(&chain, &s, &DVector::zeros(7), &Vector6::zeros(), &Vec3::zeros(), 1e-4)
            .unwrap();
    }
    assert!(((ke(&s) - e0) / e0).abs() < 1e-2);
}

#[test]
fn joint_limits_hold_under_saturated_torques() {
    let chain = ChainSpec::franka_approx();
    let g = Vec3::new(0.0, 0.0, -1.62);
    let mut rng = SeededStream::new(8);
    let mut s = ManipulatorState::at_rest(random_q(&chain, &mut rng));
    for k in 0..2000 {
        let sign = if (k / 200) % 2 == 0 { 1.0 } else { -1.0 };
        let tau = chain.torque_limits() * sign;
        s = step_dynamics(&chain, &s, &tau, &Vector6::zeros(), &g, 1.0 / 250.0).unwrap();
        for (q, j) in s.q.iter().zip(&chain.joints) {
            assert!(*q >= j.lower - 1e-6 && *q <= j.upper + 1e-6);
        }
    }
}

#[test]
fn pose_round_trip_through_inverse() {
    let p = Pose::new(
        Vec3::new(0.1, 0.2, 0.3),
        UnitQuaternion::from_euler_angles(0.3, -0.2, 1.0),
    );
    let id = p.compose(&p.inverse());
    assert!(id.position.norm() < 1e-15);
    assert!(id.orientation.angle() < 1e-15);
}
