//! Offline simulation: a kinematic robot stepping through a scene under the
//! filter, adversarial command streams and the checks run against them.

mod compare;
mod oracle;
mod scenes;
mod session;
mod streams;
mod world;

pub use compare::{
    caution_comparison, median, rotation_comparison, CautionComparison, CautionSeries, RotationComparison,
};
pub use oracle::{brute_force_oracle, OracleConfig, OracleReport, OracleTick};
pub use scenes::{
    builtin_fixture, builtin_scene, desk_workspace, export_scene, held_radius, load_fixture, BUILTIN_SCENES,
    FIXTURE_RULES, HELD_OBJECTS, NO_OBJECT,
};
pub use session::{SessionConfig, SimSession};
pub use streams::{
    adversarial_stream, constant_stream, path_stream, random_stream, rotation_rich_stream, stream_target, AdversarialKind, ADVERSARIAL_DURATION,
    STREAM_RATE,
};
pub use world::World;

use crate::filter::FilterError;
use crate::geometry::GeometryError;
use crate::io::IoError;
use crate::kinematics::KinematicsError;
use crate::semantic::SemanticError;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
