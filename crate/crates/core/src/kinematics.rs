//! Serial-chain kinematics for velocity-controlled revolute arms.
//!
//! A chain is a sequence of revolute joints, each described by a fixed rigid
//! transform from the previous link frame followed by a rotation about a unit
//! axis expressed in the joint frame. This is the URDF convention and avoids
//! the ambiguity between the classic and modified DH tables.

use std::path::Path;

use nalgebra::{
    DMatrix, DVector, Isometry3, Matrix3, Matrix3xX, Matrix6, Rotation3, Translation3,
    UnitQuaternion, Vector3, Vector6,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const UNIT_TOL: f64 = 1e-9;

/// Default damping for [`diff_ik`].
pub const DEFAULT_IK_DAMPING: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("matrix is not a proper rotation (orthonormality error {0:.3e})")]
    NotOrthonormal(f64),
    #[error("failed to read chain file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse chain file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// A rigid transform written as translation plus roll-pitch-yaw
/// (`R = Rz(yaw) Ry(pitch) Rx(roll)`), as in URDF `<origin>` tags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Origin {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl Origin {
    pub fn to_isometry(&self) -> Isometry3<f64> {
        let [x, y, z] = self.xyz;
        let [r, p, yaw] = self.rpy;
        Isometry3::from_parts(
            Translation3::new(x, y, z),
            UnitQuaternion::from_euler_angles(r, p, yaw),
        )
    }
}

/// One revolute joint: fixed transform from the parent link, then rotation
/// about `axis` (unit, joint frame).
#[derive(Debug, Clone)]
pub struct RevoluteJoint {
    pub name: String,
    pub origin: Isometry3<f64>,
    pub axis: Vector3<f64>,
}

/// Joint angle and speed bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
    /// Per-joint speed bound (rad/s).
    pub vel: DVector<f64>,
}

impl JointLimits {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>, vel: DVector<f64>) -> Result<Self, KinematicsError> {
        if lo.len() != hi.len() || lo.len() != vel.len() {
            return Err(KinematicsError::InvalidChain(
                "limit vectors have different lengths".into(),
            ));
        }
        for j in 0..lo.len() {
            if !(lo[j] < hi[j]) {
                return Err(KinematicsError::InvalidChain(format!(
                    "joint {j}: lower limit {} is not below upper limit {}",
                    lo[j], hi[j]
                )));
            }
            if !(vel[j] > 0.0) {
                return Err(KinematicsError::InvalidChain(format!(
                    "joint {j}: velocity limit must be positive"
                )));
            }
        }
        Ok(Self { lo, hi, vel })
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn contains(&self, q: &DVector<f64>) -> bool {
        q.iter()
            .zip(self.lo.iter().zip(self.hi.iter()))
            .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lo + &self.hi) * 0.5
    }
}

/// A joint configuration together with its bounds.
#[derive(Debug, Clone)]
pub struct JointState {
    pub q: DVector<f64>,
    pub limits: JointLimits,
}

/// A sphere rigidly attached to a link, used for collision barriers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    /// Link frame index: 0 is the base, `k` is the frame after joint `k`.
    pub link: usize,
    /// Sphere center in the link frame.
    pub offset: [f64; 3],
    pub radius: f64,
}

/// End effector pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, rotation: Matrix3<f64>) -> Result<Self, KinematicsError> {
        check_rotation(&rotation)?;
        Ok(Self { position, rotation })
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self {
            position: iso.translation.vector,
            rotation: iso.rotation.to_rotation_matrix().into_inner(),
        }
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }
}

/// A serial chain of revolute joints.
#[derive(Debug, Clone)]
pub struct KinematicChain {
    pub name: String,
    pub joints: Vec<RevoluteJoint>,
    pub base_pose: Isometry3<f64>,
    pub ee_offset: Isometry3<f64>,
    pub limits: JointLimits,
    /// Spheres along the body (not including the end effector sphere).
    pub control_points: Vec<ControlPoint>,
    pub ee_radius: f64,
    /// A nominal start configuration.
    pub home: DVector<f64>,
    /// Extra control-point pairs that never get a self-collision barrier.
    pub self_exclude: Vec<(usize, usize)>,
}

impl KinematicChain {
    pub fn new(
        name: impl Into<String>,
        joints: Vec<RevoluteJoint>,
        base_pose: Isometry3<f64>,
        ee_offset: Isometry3<f64>,
        limits: JointLimits,
    ) -> Result<Self, KinematicsError> {
        if joints.is_empty() {
            return Err(KinematicsError::InvalidChain("chain has no joints".into()));
        }
        for (j, joint) in joints.iter().enumerate() {
            if (joint.axis.norm() - 1.0).abs() > UNIT_TOL {
                return Err(KinematicsError::InvalidChain(format!(
                    "joint {j} axis is not a unit vector (norm {})",
                    joint.axis.norm()
                )));
            }
        }
        if limits.len() != joints.len() {
            return Err(KinematicsError::DimensionMismatch {
                expected: joints.len(),
                got: limits.len(),
            });
        }
        let home = limits.center();
        Ok(Self {
            name: name.into(),
            joints,
            base_pose,
            ee_offset,
            limits,
            control_points: Vec::new(),
            ee_radius: 0.05,
            home,
            self_exclude: Vec::new(),
        })
    }

    /// Joint count.
    pub fn n(&self) -> usize {
        self.joints.len()
    }

    pub fn from_json_str(text: &str) -> Result<Self, KinematicsError> {
        let file: ChainFile = serde_json::from_str(text)?;
        file.into_chain()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KinematicsError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// The FR3 arm geometry shipped with the crate.
    pub fn fr3() -> Self {
        Self::from_json_str(include_str!("../assets/fr3.json")).expect("bundled FR3 chain is valid")
    }

    fn check_dim(&self, q: &DVector<f64>) -> Result<(), KinematicsError> {
        if q.len() != self.n() {
            return Err(KinematicsError::DimensionMismatch {
                expected: self.n(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// World transforms of every link frame plus the end effector.
    pub fn frames(&self, q: &DVector<f64>) -> Result<Frames, KinematicsError> {
        self.check_dim(q)?;
        let mut links = Vec::with_capacity(self.n() + 1);
        let mut axes = Vec::with_capacity(self.n());
        let mut t = self.base_pose;
        links.push(t);
        for (joint, &angle) in self.joints.iter().zip(q.iter()) {
            t *= joint.origin;
            let axis = nalgebra::Unit::new_unchecked(joint.axis);
            t *= UnitQuaternion::from_axis_angle(&axis, angle);
            axes.push(t.rotation * joint.axis);
            links.push(t);
        }
        let ee = t * self.ee_offset;
        Ok(Frames { links, axes, ee })
    }

    /// World position of a control point.
    pub fn control_point_position(&self, frames: &Frames, cp: &ControlPoint) -> Vector3<f64> {
        let [x, y, z] = cp.offset;
        frames.links[cp.link].transform_point(&nalgebra::Point3::new(x, y, z)).coords
    }

    /// The end effector sphere, expressed as a control point on the last link.
    pub fn ee_control_point(&self, extra_radius: f64) -> ControlPoint {
        let t = self.ee_offset.translation.vector;
        ControlPoint {
            link: self.n(),
            offset: [t.x, t.y, t.z],
            radius: self.ee_radius + extra_radius,
        }
    }
}

/// Link frames for one configuration.
#[derive(Debug, Clone)]
pub struct Frames {
    /// `links[0]` is the base, `links[k]` the frame after joint `k`.
    pub links: Vec<Isometry3<f64>>,
    /// World-frame rotation axis of each joint.
    pub axes: Vec<Vector3<f64>>,
    pub ee: Isometry3<f64>,
}

impl Frames {
    pub fn joint_count(&self) -> usize {
        self.axes.len()
    }

    /// Translational Jacobian of a world point rigidly attached to `link`.
    pub fn point_jacobian(&self, link: usize, point: &Vector3<f64>) -> Matrix3xX<f64> {
        let n = self.joint_count();
        let mut jac = Matrix3xX::zeros(n);
        for j in 0..link.min(n) {
            let origin = self.links[j + 1].translation.vector;
            jac.set_column(j, &self.axes[j].cross(&(point - origin)));
        }
        jac
    }

    /// Rotational Jacobian of the end effector (world frame).
    pub fn rotation_jacobian(&self) -> Matrix3xX<f64> {
        let mut jac = Matrix3xX::zeros(self.joint_count());
        for (j, axis) in self.axes.iter().enumerate() {
            jac.set_column(j, axis);
        }
        jac
    }
}

/// End effector pose at `q`.
pub fn forward_kinematics(chain: &KinematicChain, q: &DVector<f64>) -> Result<Pose, KinematicsError> {
    Ok(Pose::from_isometry(&chain.frames(q)?.ee))
}

/// Translational and rotational end effector Jacobians at `q`.
pub fn jacobians(
    chain: &KinematicChain,
    q: &DVector<f64>,
) -> Result<(Matrix3xX<f64>, Matrix3xX<f64>), KinematicsError> {
    let frames = chain.frames(q)?;
    let p = frames.ee.translation.vector;
    Ok((frames.point_jacobian(chain.n(), &p), frames.rotation_jacobian()))
}

/// The stacked `6 x n` Jacobian `[J_trans; J_rot]`.
pub fn stacked_jacobian(frames: &Frames) -> DMatrix<f64> {
    let n = frames.joint_count();
    let p = frames.ee.translation.vector;
    let jt = frames.point_jacobian(n, &p);
    let jr = frames.rotation_jacobian();
    let mut jac = DMatrix::zeros(6, n);
    jac.view_mut((0, 0), (3, n)).copy_from(&jt);
    jac.view_mut((3, 0), (3, n)).copy_from(&jr);
    jac
}

fn check_rotation(r: &Matrix3<f64>) -> Result<(), KinematicsError> {
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det_err = (r.determinant() - 1.0).abs();
    let worst = err.max(det_err);
    if !(worst <= UNIT_TOL) {
        return Err(KinematicsError::NotOrthonormal(worst));
    }
    Ok(())
}

/// The `(.)^` operator: 3-vector to skew-symmetric matrix.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// The `(.)^vee` operator on the skew part of `m`.
fn vee_skew(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5
}

/// Axis-angle vector `psi` with `|psi| in [0, pi]` such that `exp(psi^) = r`.
pub fn rotation_log(r: &Matrix3<f64>) -> Result<Vector3<f64>, KinematicsError> {
    check_rotation(r)?;
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let skew = vee_skew(r);
    // atan2 keeps full precision at both ends, where acos alone does not
    let angle = skew.norm().atan2(cos);
    if angle < 1e-6 {
        // theta / (2 sin theta) = 1/2 + theta^2 / 12 + O(theta^4), skew already halved
        return Ok(skew * (1.0 + angle * angle / 6.0));
    }
    if std::f64::consts::PI - angle < 1e-6 {
        // R + I = 2 a a^T at theta = pi; take the best-conditioned column.
        let b = (r + r.transpose()) * 0.25 + Matrix3::identity() * 0.5;
        let k = (0..3)
            .max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)]))
            .unwrap_or(0);
        let mut axis: Vector3<f64> = b.column(k).into_owned() / b[(k, k)].max(0.0).sqrt();
        axis.normalize_mut();
        if skew.dot(&axis) < 0.0 {
            axis = -axis;
        }
        return Ok(axis * angle);
    }
    Ok(skew * (angle / angle.sin()))
}

/// Damped least-squares differential IK:
/// `u = J^T (J J^T + damping^2 I)^-1 twist`, with `twist = [v; w]`.
pub fn diff_ik(
    chain: &KinematicChain,
    q: &DVector<f64>,
    twist: &Vector6<f64>,
    damping: f64,
) -> Result<DVector<f64>, KinematicsError> {
    let frames = chain.frames(q)?;
    Ok(diff_ik_frames(&frames, twist, damping))
}

pub fn diff_ik_frames(frames: &Frames, twist: &Vector6<f64>, damping: f64) -> DVector<f64> {
    let jac = stacked_jacobian(frames);
    let mut jjt = Matrix6::zeros();
    jjt.copy_from(&(&jac * jac.transpose()));
    for i in 0..6 {
        jjt[(i, i)] += damping * damping;
    }
    let y = match jjt.cholesky() {
        Some(ch) => ch.solve(twist),
        // only reachable with damping == 0 at a singularity
        None => jjt.pseudo_inverse(1e-12).map(|p| p * twist).unwrap_or_else(|_| Vector6::zeros()),
    };
    jac.transpose() * DVector::from_column_slice(y.as_slice())
}

/// On-disk chain description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainFile {
    pub name: String,
    #[serde(default)]
    pub base: Origin,
    pub joints: Vec<JointEntry>,
    #[serde(default)]
    pub ee_offset: Origin,
    pub limits_lo: Vec<f64>,
    pub limits_hi: Vec<f64>,
    pub vel_limit: Vec<f64>,
    #[serde(default)]
    pub home: Option<Vec<f64>>,
    #[serde(default)]
    pub control_points: Vec<ControlPoint>,
    #[serde(default = "default_ee_radius")]
    pub ee_radius: f64,
    #[serde(default)]
    pub self_exclude: Vec<(usize, usize)>,
}

fn default_ee_radius() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointEntry {
    #[serde(default)]
    pub name: Option<String>,
    pub axis: [f64; 3],
    #[serde(default)]
    pub origin: Origin,
}

impl ChainFile {
    pub fn into_chain(self) -> Result<KinematicChain, KinematicsError> {
        let joints = self
            .joints
            .iter()
            .enumerate()
            .map(|(i, j)| RevoluteJoint {
                name: j.name.clone().unwrap_or_else(|| format!("joint{}", i + 1)),
                origin: j.origin.to_isometry(),
                axis: Vector3::from(j.axis),
            })
            .collect();
        let limits = JointLimits::new(
            DVector::from_vec(self.limits_lo),
            DVector::from_vec(self.limits_hi),
            DVector::from_vec(self.vel_limit),
        )?;
        let mut chain = KinematicChain::new(
            self.name,
            joints,
            self.base.to_isometry(),
            self.ee_offset.to_isometry(),
            limits,
        )?;
        let n = chain.n();
        if let Some(home) = self.home {
            let home = DVector::from_vec(home);
            if home.len() != n {
                return Err(KinematicsError::DimensionMismatch { expected: n, got: home.len() });
            }
            chain.home = home;
        }
        for cp in &self.control_points {
            if cp.link > n {
                return Err(KinematicsError::InvalidChain(format!(
                    "control point on link {} but chain has {n} joints",
                    cp.link
                )));
            }
            if !(cp.radius > 0.0) {
                return Err(KinematicsError::InvalidChain("control point radius must be positive".into()));
            }
        }
        if !(self.ee_radius > 0.0) {
            return Err(KinematicsError::InvalidChain("ee_radius must be positive".into()));
        }
        chain.control_points = self.control_points;
        chain.ee_radius = self.ee_radius;
        chain.self_exclude = self.self_exclude;
        Ok(chain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    pub(crate) fn planar_two_link() -> KinematicChain {
        let joints = vec![
            RevoluteJoint {
                name: "j1".into(),
                origin: Isometry3::identity(),
                axis: Vector3::z(),
            },
            RevoluteJoint {
                name: "j2".into(),
                origin: Isometry3::translation(1.0, 0.0, 0.0),
                axis: Vector3::z(),
            },
        ];
        let limits = JointLimits::new(
            DVector::from_element(2, -PI),
            DVector::from_element(2, PI),
            DVector::from_element(2, 1.0),
        )
        .unwrap();
        KinematicChain::new("planar", joints, Isometry3::identity(), Isometry3::translation(0.5, 0.0, 0.0), limits)
            .unwrap()
    }

    fn fd_jacobian(chain: &KinematicChain, q: &DVector<f64>) -> Matrix3xX<f64> {
        let h = 1e-6;
        let mut jac = Matrix3xX::zeros(chain.n());
        for j in 0..chain.n() {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[j] += h;
            qm[j] -= h;
            let d = (forward_kinematics(chain, &qp).unwrap().position
                - forward_kinematics(chain, &qm).unwrap().position)
                / (2.0 * h);
            jac.set_column(j, &d);
        }
        jac
    }

    #[test]
    fn planar_straight_arm() {
        let chain = planar_two_link();
        let pose = forward_kinematics(&chain, &DVector::from_vec(vec![0.0, 0.0])).unwrap();
        assert!((pose.position - Vector3::new(1.5, 0.0, 0.0)).norm() < 1e-12);
        assert!((pose.rotation - Matrix3::identity()).norm() < 1e-12);
    }

    #[test]
    fn planar_quarter_turn() {
        let chain = planar_two_link();
        let pose = forward_kinematics(&chain, &DVector::from_vec(vec![FRAC_PI_2, 0.0])).unwrap();
        assert!((pose.position - Vector3::new(0.0, 1.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let chain = planar_two_link();
        let err = forward_kinematics(&chain, &DVector::zeros(3)).unwrap_err();
        assert!(matches!(err, KinematicsError::DimensionMismatch { expected: 2, got: 3 }));
        assert!(jacobians(&chain, &DVector::zeros(1)).is_err());
    }

    #[test]
    fn planar_jacobian_column_matches_finite_differences() {
        let chain = planar_two_link();
        let q = DVector::zeros(2);
        let (jt, _) = jacobians(&chain, &q).unwrap();
        let fd = fd_jacobian(&chain, &q);
        assert!((jt.column(0) - Vector3::new(0.0, 1.5, 0.0)).norm() < 1e-12);
        assert!((jt.column(0) - fd.column(0)).norm() / 1.5 < 1e-5);
    }

    #[test]
    fn rotation_jacobian_columns_are_world_axes() {
        let chain = KinematicChain::fr3();
        let q = chain.home.clone();
        let frames = chain.frames(&q).unwrap();
        let (_, jr) = jacobians(&chain, &q).unwrap();
        for j in 0..chain.n() {
            let axis = frames.links[j + 1].rotation * chain.joints[j].axis;
            assert!((jr.column(j) - axis).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_unit_axis() {
        let joints = vec![RevoluteJoint {
            name: "j".into(),
            origin: Isometry3::identity(),
            axis: Vector3::new(0.0, 0.0, 1.1),
        }];
        let limits = JointLimits::new(
            DVector::from_element(1, -1.0),
            DVector::from_element(1, 1.0),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        assert!(KinematicChain::new("bad", joints, Isometry3::identity(), Isometry3::identity(), limits).is_err());
    }

    #[test]
    fn limits_validation() {
        let bad = JointLimits::new(
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![1.0]),
        );
        assert!(bad.is_err());
        let bad_vel = JointLimits::new(
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.0]),
        );
        assert!(bad_vel.is_err());
    }

    #[test]
    fn rotation_log_identity_and_quarter_turn() {
        assert_eq!(rotation_log(&Matrix3::identity()).unwrap(), Vector3::zeros());
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2).into_inner();
        let psi = rotation_log(&rz).unwrap();
        assert!((psi - Vector3::new(0.0, 0.0, FRAC_PI_2)).norm() < 1e-12);
    }

    #[test]
    fn rotation_log_near_pi_round_trips() {
        for &delta in &[0.0, 1e-9, 5e-7, 2e-6, 1e-3] {
            let axis = Vector3::new(0.3, -0.5, 0.8).normalize();
            let r = Rotation3::new(axis * (PI - delta)).into_inner();
            let psi = rotation_log(&r).unwrap();
            let back = Rotation3::new(psi).into_inner();
            assert!((back - r).norm() < 1e-9, "delta {delta}: {}", (back - r).norm());
            assert!(psi.norm() <= PI + 1e-12);
        }
    }

    #[test]
    fn rotation_log_small_angles() {
        for &angle in &[1e-12, 1e-8, 5e-7, 2e-6] {
            let axis = Vector3::new(1.0, 2.0, -0.5).normalize();
            let r = Rotation3::new(axis * angle).into_inner();
            let psi = rotation_log(&r).unwrap();
            assert!((psi - axis * angle).norm() < 1e-15 + 1e-9 * angle);
        }
    }

    #[test]
    fn rotation_log_rejects_non_rotation() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = 1.01;
        assert!(matches!(rotation_log(&m), Err(KinematicsError::NotOrthonormal(_))));
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(rotation_log(&reflection).is_err());
    }

    #[test]
    fn diff_ik_zero_twist() {
        let chain = KinematicChain::fr3();
        let u = diff_ik(&chain, &chain.home, &Vector6::zeros(), DEFAULT_IK_DAMPING).unwrap();
        assert_eq!(u, DVector::zeros(7));
    }

    #[test]
    fn diff_ik_singular_arm_is_bounded() {
        let chain = planar_two_link();
        let q = DVector::zeros(2);
        let twist = Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let lambda = DEFAULT_IK_DAMPING;
        let u = diff_ik(&chain, &q, &twist, lambda).unwrap();
        let jac = stacked_jacobian(&chain.frames(&q).unwrap());
        let bound = jac.transpose().norm() * twist.norm() / (lambda * lambda);
        assert!(u.iter().all(|v| v.is_finite()));
        assert!(u.norm() <= bound);
    }

    #[test]
    fn chain_file_round_trip_fields() {
        let chain = KinematicChain::fr3();
        assert_eq!(chain.n(), 7);
        assert_eq!(chain.control_points.len(), 7);
        assert!(chain.limits.contains(&chain.home));
    }
}
