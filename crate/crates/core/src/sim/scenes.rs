//! Built-in desk scenes, held objects and the matching fixture answers.

use std::path::Path;

use nalgebra::{Rotation3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{synthetic, Aabb, PointCloud};
use crate::io::{write_ply_ascii, IoError, ObjectEntry, Scene, SceneManifest, SCENE_SCHEMA};
use crate::semantic::{FixtureClient, SemanticError};

pub const BUILTIN_SCENES: [&str; 3] = ["books", "laptop_books", "balloons_towel"];

/// Held objects used by the batch experiments, with the radius added to the
/// end effector sphere while each is carried. `none` means empty-handed.
pub const HELD_OBJECTS: [(&str, f64); 5] = [
    ("none", 0.0),
    ("dry sponge", 0.03),
    ("cup of water", 0.04),
    ("lit candle", 0.03),
    ("knife", 0.02),
];

pub const NO_OBJECT: &str = "none";

pub fn held_radius(label: &str) -> f64 {
    HELD_OBJECTS
        .iter()
        .find(|(l, _)| *l == label)
        .map(|(_, r)| *r)
        .unwrap_or(0.03)
}

pub const FIXTURE_RULES: &str = include_str!("../../assets/fixture_rules.json");

/// Fixture client answering for the built-in held objects.
pub fn builtin_fixture() -> FixtureClient {
    FixtureClient::from_json_str(FIXTURE_RULES).expect("bundled fixture rules are valid")
}

pub fn load_fixture(path: Option<&Path>) -> Result<FixtureClient, SemanticError> {
    match path {
        Some(p) => FixtureClient::load(p),
        None => Ok(builtin_fixture()),
    }
}

pub fn desk_workspace() -> Aabb {
    Aabb::new([-0.3, -0.7, 0.0], [0.9, 0.7, 1.0])
}

const POINTS: usize = 2000;

struct Object {
    id: &'static str,
    label: &'static str,
    points: Vec<Vector3<f64>>,
}

fn objects(scene_id: &str, rng: &mut ChaCha8Rng) -> Option<(Vec<Object>, &'static str)> {
    let books = |center: Vector3<f64>, half: Vector3<f64>, yaw: f64, rng: &mut ChaCha8Rng| {
        synthetic::oriented_box_surface(center, Rotation3::from_axis_angle(&Vector3::z_axis(), yaw), half, POINTS, rng)
    };
    Some(match scene_id {
        "books" => (
            vec![Object {
                id: "books_0",
                label: "books",
                points: books(Vector3::new(0.5, 0.0, 0.06), Vector3::new(0.1, 0.14, 0.06), 0.2, rng),
            }],
            "A desk with a stack of books in front of the robot.",
        ),
        "laptop_books" => (
            vec![
                Object {
                    id: "laptop_0",
                    label: "laptop",
                    points: synthetic::open_laptop(Vector3::new(0.5, -0.22, 0.0), std::f64::consts::PI, 1.9, POINTS, rng),
                },
                Object {
                    id: "books_0",
                    label: "books",
                    points: books(Vector3::new(0.45, 0.25, 0.05), Vector3::new(0.09, 0.12, 0.05), -0.1, rng),
                },
            ],
            "A desk with an open laptop on the right and a stack of books on the left.",
        ),
        "balloons_towel" => (
            vec![
                Object {
                    id: "balloon_0",
                    label: "balloon",
                    points: synthetic::ellipsoid_surface(Vector3::new(0.45, 0.35, 0.45), Vector3::new(0.1, 0.1, 0.12), POINTS, rng),
                },
                Object {
                    id: "paper_towel_0",
                    label: "paper towel",
                    points: synthetic::cylinder_surface(Vector3::new(0.45, -0.3, 0.0), 0.06, 0.25, POINTS, rng),
                },
            ],
            "A party table with a balloon floating on the left and a paper towel roll standing on the right.",
        ),
        _ => return None,
    })
}

/// Generates a built-in scene in memory. Deterministic in `seed`.
pub fn builtin_scene(scene_id: &str, seed: u64) -> Option<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (objs, description) = objects(scene_id, &mut rng)?;
    let manifest = SceneManifest {
        schema: SCENE_SCHEMA.into(),
        scene_id: scene_id.into(),
        description: description.into(),
        workspace: desk_workspace(),
        objects: objs
            .iter()
            .map(|o| ObjectEntry {
                object_id: o.id.into(),
                label: o.label.into(),
                ply_path: format!("{}.ply", o.id),
                pose: None,
            })
            .collect(),
    };
    let clouds = objs.into_iter().map(|o| PointCloud::new(o.points, o.label, o.id)).collect();
    Some(Scene { manifest, clouds })
}

/// Writes a scene as `<dir>/<scene_id>/scene.json` plus one PLY per object.
pub fn export_scene(scene: &Scene, dir: &Path) -> Result<std::path::PathBuf, IoError> {
    let root = dir.join(scene.id());
    std::fs::create_dir_all(&root).map_err(|source| IoError::File {
        path: root.display().to_string(),
        source,
    })?;
    for (entry, cloud) in scene.manifest.objects.iter().zip(&scene.clouds) {
        write_ply_ascii(root.join(&entry.ply_path), &cloud.points)?;
    }
    let path = root.join("scene.json");
    std::fs::write(&path, serde_json::to_string_pretty(&scene.manifest)?).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })?;
    Ok(path)
}
