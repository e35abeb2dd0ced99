//! File formats: PLY clouds, scene manifests, command streams, tick logs and
//! run reports.

mod log;
mod ply;
mod report;
mod scene;
mod stream;

pub use log::{read_tick_log, ClassValues, TickLogWriter, TickRecord};
pub use ply::{read_ply, read_ply_str, write_ply_ascii};
pub use report::{aggregate, violation_fraction, ClassFractions, RunReport, TrajectoryResult};
pub use scene::{load_scene, ObjectEntry, PoseSpec, Scene, SceneManifest, SCENE_SCHEMA};
pub use stream::{smooth_stream, CommandStream, TwistFrame};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("schema: {0}")]
    Schema(String),
    #[error("ply: {0}")]
    Ply(String),
    #[error("stream: {0}")]
    Stream(String),
    #[error("empty cloud for object {0}")]
    EmptyCloud(String),
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<(), IoError> {
    std::fs::write(path, bytes).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}
