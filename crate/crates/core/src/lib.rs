//! Semantic safety filter for velocity-controlled serial manipulators.
//!
//! Joint-velocity commands are certified before they reach the robot. Every
//! constraint is a control barrier function `h(q) >= 0`, enforced as
//! `dh/dt >= -alpha(h)` inside a small quadratic program solved each tick.
//! Semantic constraints (forbidden spatial relationships, caution near flagged
//! objects, orientation keeping) are synthesized from the scene labels and the
//! held object; geometric ones cover the environment, self collision and joint
//! limits.
//!
//! * [`kinematics`]: forward kinematics, Jacobians, rotation log, damped IK.
//! * [`geometry`]: superquadric evaluation, fitting, part splitting, envelopes.
//! * [`semantic`]: prompts, LLM clients, majority-vote synthesis.
//! * [`barrier`]: barrier rows and class-K functions.
//! * [`filter`]: the certifying QP and its dense active-set solver.
//! * [`io`]: scenes, PLY clouds, command streams, logs and reports.
//! * [`sim`]: simulation sessions, scripted streams, the brute-force oracle.

pub mod barrier;
pub mod filter;
pub mod geometry;
pub mod io;
pub mod kinematics;
pub mod semantic;
pub mod sim;

pub use barrier::{BarrierEval, BarrierStack, ClassK, ConstraintClass};
pub use filter::{certify, CertStatus, CertificationResult, CertifyConfig, RotationObjective};
pub use geometry::{PointCloud, Superquadric};
pub use kinematics::{KinematicChain, Pose};
pub use semantic::{PoseConstraint, Relationship, SemanticContext};
