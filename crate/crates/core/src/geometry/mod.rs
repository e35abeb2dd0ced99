//! Superquadric solids, fitting, part segmentation and relationship
//! envelopes.

mod cloud;
mod envelope;
mod fit;
mod parts;
mod superquadric;
pub mod synthetic;

pub use cloud::{centroid, Aabb, PointCloud, PrincipalFrame, MIN_FIT_POINTS};
pub use envelope::{
    build_envelope, build_envelope_with_clouds, extended_cloud, fit_solids, Envelope, EnvelopeOptions, EnvelopeSet, Relationship,
};
pub use fit::{containment_fraction, sq_fit, FitOptions};
pub use parts::{split_by_parts, SplitOptions};
pub use superquadric::{
    rotation_from_columns, union_eval, Superquadric, SuperquadricJson, TriMesh, EPS_MAX, EPS_MIN, MIN_SCALE,
};

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
    #[error("superquadric fit degenerate: {0}")]
    FitDegenerate(String),
    #[error("unknown relationship '{0}'")]
    UnknownRelationship(String),
    #[error("workspace box is degenerate")]
    InvalidWorkspace,
    #[error("invalid superquadric: {0}")]
    InvalidSolid(String),
}
