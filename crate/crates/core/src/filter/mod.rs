//! The certifying QP: stay as close as possible to the commanded joint
//! velocity while every barrier row satisfies `A u >= -alpha(h)` and every
//! joint stays inside its speed box.

mod certify;
pub mod qp;
mod rotation;

pub use certify::{assemble, certify, certify_frames, CertStatus, CertificationResult, CertifyConfig, FilterError};
pub use qp::{solve_qp, ActiveRow, QpError, QpProblem, QpSolution};
pub use rotation::{rotation_cost_terms, RotationObjective, DEFAULT_W_ROT};
