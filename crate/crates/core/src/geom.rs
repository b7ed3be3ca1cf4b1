//! Rigid poses, the 6D rotation encoding and seeded random streams.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance on orthonormality accepted by [`rot6d_encode`].
pub const ROTATION_TOLERANCE: f64 = 1e-6;
const DEGENERATE_NORM: f64 = 1e-8;

/// Position and orientation of a rigid frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vec3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vec3, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn from_translation(position: Vec3) -> Self {
        Self::new(position, UnitQuaternion::identity())
    }

    /// Builds a pose from a translation and fixed-axis roll/pitch/yaw (URDF convention).
    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        Self::new(
            Vec3::new(xyz[0], xyz[1], xyz[2]),
            UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
        )
    }

    pub fn from_rotation_matrix(position: Vec3, r: &Mat3) -> Self {
        let rot = Rotation3::from_matrix_unchecked(*r);
        Self::new(position, UnitQuaternion::from_rotation_matrix(&rot))
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        self.orientation.to_rotation_matrix().into_inner()
    }

    /// `self ∘ other`: `other` expressed in `self`'s frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.orientation * other.position,
            orientation: renormalize(self.orientation * other.orientation),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose {
            position: -(inv * self.position),
            orientation: inv,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.position + self.orientation * p
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.orientation * v
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.orientation.inverse_transform_vector(&(p - self.position))
    }

    /// Local z axis expressed in the parent frame.
    pub fn z_axis(&self) -> Vec3 {
        self.orientation * Vec3::z()
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

/// First two columns of a rotation matrix, column-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rot6D(pub [f64; 6]);

impl Rot6D {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Encodes a proper rotation into its 6D representation.
pub fn rot6d_encode(r: &Mat3) -> Result<Rot6D> {
    let ortho = (r.transpose() * r - Mat3::identity()).abs().max();
    let det = r.determinant();
    if !ortho.is_finite() || ortho > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(Error::InvalidRotation(format!(
            "orthonormality residual {ortho:.3e}, determinant {det:.6}"
        )));
    }
    Ok(Rot6D([
        r[(0, 0)],
        r[(1, 0)],
        r[(2, 0)],
        r[(0, 1)],
        r[(1, 1)],
        r[(2, 1)],
    ]))
}

/// Gram–Schmidt reconstruction of a rotation from a (possibly non-orthogonal) 6D vector.
pub fn rot6d_decode(a: &Rot6D) -> Result<Mat3> {
    let a1 = Vec3::new(a.0[0], a.0[1], a.0[2]);
    let a2 = Vec3::new(a.0[3], a.0[4], a.0[5]);
    let n1 = a1.norm();
    if !(n1 > DEGENERATE_NORM) {
        return Err(Error::Degenerate(format!("first column norm {n1:.3e}")));
    }
    let b1 = a1 / n1;
    let resid = a2 - b1 * b1.dot(&a2);
    let n2 = resid.norm();
    if !(n2 > DEGENERATE_NORM) {
        return Err(Error::Degenerate(format!(
            "second column parallel to first (residual {n2:.3e})"
        )));
    }
    let b2 = resid / n2;
    let b3 = b1.cross(&b2);
    Ok(Mat3::from_columns(&[b1, b2, b3]))
}

/// Frame in which SE(3) displacement commands are expressed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaFrame {
    #[default]
    World,
    EndEffector,
}

/// Applies a translation and an axis-angle rotation increment to a pose.
///
/// In the world frame the position moves by `dt` and the orientation is
/// pre-multiplied by `exp(dr)`; in the end-effector frame both are applied in
/// the local frame instead.
pub fn pose_apply_delta(p: &Pose, dt: &Vec3, dr: &Vec3, frame: DeltaFrame) -> Pose {
    let position = match frame {
        DeltaFrame::World => p.position + dt,
        DeltaFrame::EndEffector => p.position + p.orientation * dt,
    };
    if dr.iter().all(|v| *v == 0.0) {
        return Pose::new(position, p.orientation);
    }
    let delta = UnitQuaternion::from_scaled_axis(*dr);
    let orientation = match frame {
        DeltaFrame::World => renormalize(delta * p.orientation),
        DeltaFrame::EndEffector => renormalize(p.orientation * delta),
    };
    Pose::new(position, orientation)
}

/// Axis-angle vector `log(a · bᵀ)`: the rotation taking `b` to `a` in the world frame.
pub fn orientation_error(target: &UnitQuaternion<f64>, current: &UnitQuaternion<f64>) -> Vec3 {
    if target == current {
        return Vec3::zeros();
    }
    let mut d = target * current.inverse();
    // shortest arc
    if d.w < 0.0 {
        d = UnitQuaternion::new_unchecked(Quaternion::from(-d.into_inner().coords));
    }
    d.scaled_axis()
}

/// Skew-symmetric cross-product matrix.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Seeded, counter-addressed random stream.
///
/// Backed by ChaCha8: the seed is the key and the draw counter is the
/// keystream position, so identical `(seed, stream, counter)` triples yield
/// identical sequences on every platform. Independent substreams are derived
/// by label and occupy disjoint ChaCha stream ids.
#[derive(Clone, Debug)]
pub struct SeededStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Derives an independent stream for a named subsystem.
    pub fn substream(&self, label: &str) -> SeededStream {
        Self::with_stream(self.seed, mix64(self.stream ^ fnv1a(label.as_bytes())))
    }

    /// Derives an independent stream keyed by an integer (e.g. an instance index).
    pub fn substream_indexed(&self, label: &str, index: u64) -> SeededStream {
        Self::with_stream(
            self.seed,
            mix64(self.stream ^ fnv1a(label.as_bytes()) ^ mix64(index.wrapping_add(1))),
        )
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u64 {
        self.rng.get_word_pos() as u64
    }

    /// Repositions the stream at an absolute word counter.
    pub fn seek(&mut self, counter: u64) {
        self.rng.set_word_pos(counter as u128);
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        if std <= 0.0 {
            return mean;
        }
        Normal::new(mean, std)
            .expect("finite normal parameters")
            .sample(self)
    }

    /// Uniform integer in `[0, n)`.
    pub fn index(&mut self, n: u64) -> u64 {
        if n == 0 {
            return 0;
        }
        // Lemire's multiply-shift; bias is below 2^-64 · n and irrelevant here.
        ((self.rng.next_u64() as u128 * n as u128) >> 64) as u64
    }
}

impl RngCore for SeededStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
