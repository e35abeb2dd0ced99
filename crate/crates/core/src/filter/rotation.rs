use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::kinematics::{rotation_log, Frames, KinematicsError};
use crate::semantic::PoseConstraint;

/// Weights used for constrained rotation: tracking of the pick-up
/// orientation, then damping of the predicted rotation per tick.
pub const DEFAULT_W_ROT: [f64; 2] = [150.0, 15.0];

/// Soft orientation keeping. The cost added to the QP is
/// `w1 |e - M u|^2 + w2 |M u|^2` with `M = dt J_rot` and
/// `e = log(R_des R_cur^T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationObjective {
    pub w_rot: [f64; 2],
    pub r_des: Matrix3<f64>,
    pub dt: f64,
}

impl RotationObjective {
    pub fn free(dt: f64) -> Self {
        Self {
            w_rot: [0.0, 0.0],
            r_des: Matrix3::identity(),
            dt,
        }
    }

    /// Objective for a pose constraint; `weights` is used only when
    /// rotation is constrained.
    pub fn for_pose(pose: PoseConstraint, r_des: Matrix3<f64>, dt: f64, weights: [f64; 2]) -> Self {
        match pose {
            PoseConstraint::FreeRotation => Self { r_des, ..Self::free(dt) },
            PoseConstraint::ConstrainedRotation => Self {
                w_rot: weights,
                r_des,
                dt,
            },
        }
    }

    pub fn is_active(&self) -> bool {
        self.w_rot[0] > 0.0 || self.w_rot[1] > 0.0
    }
}

/// Quadratic and linear cost contributions `(H_rot, f_rot)` in the
/// convention `1/2 u'Hu + f'u`, dropping the constant term.
pub fn rotation_cost_terms(
    frames: &Frames,
    rot: &RotationObjective,
) -> Result<(DMatrix<f64>, DVector<f64>), KinematicsError> {
    let n = frames.joint_count();
    if !rot.is_active() {
        return Ok((DMatrix::zeros(n, n), DVector::zeros(n)));
    }
    let r_cur = frames.ee.rotation.to_rotation_matrix().into_inner();
    let e = rotation_log(&(rot.r_des * r_cur.transpose()))?;
    let m = frames.rotation_jacobian() * rot.dt;
    let [w1, w2] = rot.w_rot;
    let mtm = m.transpose() * &m;
    let quad = DMatrix::from_fn(n, n, |i, j| 2.0 * (w1 + w2) * mtm[(i, j)]);
    let mte = m.transpose() * e;
    let lin = DVector::from_fn(n, |i, _| -2.0 * w1 * mte[i]);
    Ok((quad, lin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{JointLimits, KinematicChain, RevoluteJoint};
    use nalgebra::{Isometry3, Rotation3, Vector3};

    fn single_joint() -> KinematicChain {
        KinematicChain::new(
            "one",
            vec![RevoluteJoint {
                name: "j1".into(),
                origin: Isometry3::identity(),
                axis: Vector3::z(),
            }],
            Isometry3::identity(),
            Isometry3::translation(0.3, 0.0, 0.0),
            JointLimits::new(
                DVector::from_element(1, -3.0),
                DVector::from_element(1, 3.0),
                DVector::from_element(1, 2.0),
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn free_rotation_adds_nothing() {
        let chain = KinematicChain::fr3();
        let frames = chain.frames(&chain.home).unwrap();
        let (h, f) = rotation_cost_terms(&frames, &RotationObjective::free(1.0 / 45.0)).unwrap();
        assert_eq!(h.amax(), 0.0);
        assert_eq!(f.amax(), 0.0);
    }

    #[test]
    fn at_target_linear_term_vanishes() {
        let chain = KinematicChain::fr3();
        let frames = chain.frames(&chain.home).unwrap();
        let r = frames.ee.rotation.to_rotation_matrix().into_inner();
        let rot = RotationObjective::for_pose(PoseConstraint::ConstrainedRotation, r, 1.0 / 45.0, [20.0, 2.0]);
        let (h, f) = rotation_cost_terms(&frames, &rot).unwrap();
        assert!(f.amax() < 1e-12);
        assert!(h.symmetric_eigenvalues().min() > -1e-12);
    }

    #[test]
    fn scalar_minimizer_matches_closed_form() {
        // one joint about z, J_rot = (0,0,1) so j = 1; tracking target u_cmd = 0
        let chain = single_joint();
        let q = DVector::from_element(1, 0.0);
        let frames = chain.frames(&q).unwrap();
        let angle = 0.4;
        let rot = RotationObjective {
            w_rot: [30.0, 5.0],
            r_des: Rotation3::from_axis_angle(&Vector3::z_axis(), angle).into_inner(),
            dt: 0.05,
        };
        let (h, f) = rotation_cost_terms(&frames, &rot).unwrap();
        let u = -f[0] / (2.0 + h[(0, 0)]);
        let (w1, w2, dt, j) = (30.0, 5.0, 0.05, 1.0);
        let closed = w1 * dt * j * angle / (1.0 + (w1 + w2) * dt * dt * j * j);
        assert!((u - closed).abs() < 1e-12, "{u} vs {closed}");
    }
}
