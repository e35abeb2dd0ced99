use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{ply::read_ply, read_file, IoError};
use crate::geometry::{Aabb, PointCloud};

pub const SCENE_SCHEMA: &str = "semfilter/scene/1";

/// Rigid transform given as translation plus roll/pitch/yaw (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseSpec {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl PoseSpec {
    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(Vector3::from(self.xyz)),
            UnitQuaternion::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub object_id: String,
    pub label: String,
    /// Relative paths are resolved against the manifest's directory.
    pub ply_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub schema: String,
    pub scene_id: String,
    #[serde(default)]
    pub description: String,
    pub workspace: Aabb,
    pub objects: Vec<ObjectEntry>,
}

impl SceneManifest {
    pub fn validate(&self) -> Result<(), IoError> {
        if self.schema != SCENE_SCHEMA {
            return Err(IoError::Schema(format!("expected schema '{SCENE_SCHEMA}', got '{}'", self.schema)));
        }
        if self.workspace.is_degenerate() {
            return Err(IoError::Schema("workspace box is degenerate".into()));
        }
        let mut ids = BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.object_id.as_str()) {
                return Err(IoError::Schema(format!("duplicate object_id '{}'", o.object_id)));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<String> {
        self.objects.iter().map(|o| o.label.clone()).collect()
    }
}

/// A loaded scene: manifest plus world-frame clouds in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub manifest: SceneManifest,
    pub clouds: Vec<PointCloud>,
}

impl Scene {
    pub fn id(&self) -> &str {
        &self.manifest.scene_id
    }

    pub fn labels(&self) -> Vec<String> {
        self.manifest.labels()
    }

    pub fn workspace(&self) -> Aabb {
        self.manifest.workspace
    }
}

/// Reads a manifest and all of its clouds, applying each object's pose.
pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene, IoError> {
    let path = path.as_ref();
    let manifest: SceneManifest = serde_json::from_slice(&read_file(path)?)?;
    manifest.validate()?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut clouds = Vec::with_capacity(manifest.objects.len());
    for o in &manifest.objects {
        let ply = PathBuf::from(&o.ply_path);
        let ply = if ply.is_absolute() { ply } else { root.join(ply) };
        let mut points = read_ply(&ply)?;
        if points.is_empty() {
            return Err(IoError::EmptyCloud(o.object_id.clone()));
        }
        if let Some(pose) = &o.pose {
            let iso = pose.to_isometry();
            for p in &mut points {
                *p = iso.transform_point(&Point3::from(*p)).coords;
            }
        }
        clouds.push(PointCloud::new(points, o.label.clone(), o.object_id.clone()));
    }
    Ok(Scene { manifest, clouds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_ply_ascii;

    fn write_scene(dir: &Path, objects: serde_json::Value) -> PathBuf {
        let pts: Vec<Vector3<f64>> = (0..60).map(|i| Vector3::new(i as f64 * 0.01, 0.0, 0.1)).collect();
        write_ply_ascii(dir.join("a.ply"), &pts).unwrap();
        write_ply_ascii(dir.join("b.ply"), &pts[..55]).unwrap();
        let manifest = serde_json::json!({
            "schema": SCENE_SCHEMA,
            "scene_id": "desk",
            "description": "a desk",
            "workspace": {"min": [-1, -1, 0], "max": [1, 1, 1]},
            "objects": objects,
        });
        let path = dir.join("scene.json");
        std::fs::write(&path, manifest.to_string()).unwrap();
        path
    }

    #[test]
    fn two_objects_with_pose_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_scene(
            dir.path(),
            serde_json::json!([
                {"object_id": "a", "label": "laptop", "ply_path": "a.ply"},
                {"object_id": "b", "label": "books", "ply_path": "b.ply", "pose": {"xyz": [1, 0, 0]}},
            ]),
        );
        let scene = load_scene(&path).unwrap();
        assert_eq!(scene.clouds.len(), 2);
        assert_eq!(scene.labels(), vec!["laptop", "books"]);
        let raw = PointCloud::new(read_ply(dir.path().join("b.ply")).unwrap(), "", "");
        let shift = scene.clouds[1].centroid() - raw.centroid();
        assert!((shift - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(load_scene(&path).unwrap(), scene);
    }

    #[test]
    fn schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let dup = write_scene(
            dir.path(),
            serde_json::json!([
                {"object_id": "a", "label": "laptop", "ply_path": "a.ply"},
                {"object_id": "a", "label": "books", "ply_path": "b.ply"},
            ]),
        );
        assert!(matches!(load_scene(&dup), Err(IoError::Schema(_))));
        let missing = write_scene(dir.path(), serde_json::json!([{"object_id": "a", "label": "x", "ply_path": "nope.ply"}]));
        assert!(matches!(load_scene(&missing), Err(IoError::File { .. })));
    }
}
