//! Spatial-relationship envelopes: regions of end effector positions that a
//! relationship rules out, as unions of superquadrics.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cloud::{Aabb, PointCloud};
use super::fit::{sq_fit, FitOptions};
use super::parts::{split_by_parts, SplitOptions};
use super::superquadric::Superquadric;
use super::GeometryError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relationship {
    Above,
    Under,
    LeftOf,
    RightOf,
    InFrontOf,
    Behind,
    Around,
    Near,
    Inside,
    OnTopOf,
    OverheadColumn,
    BeneathColumn,
}

impl Relationship {
    pub const ALL: [Relationship; 12] = [
        Relationship::Above,
        Relationship::Under,
        Relationship::LeftOf,
        Relationship::RightOf,
        Relationship::InFrontOf,
        Relationship::Behind,
        Relationship::Around,
        Relationship::Near,
        Relationship::Inside,
        Relationship::OnTopOf,
        Relationship::OverheadColumn,
        Relationship::BeneathColumn,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Relationship::Above => "above",
            Relationship::Under => "under",
            Relationship::LeftOf => "left_of",
            Relationship::RightOf => "right_of",
            Relationship::InFrontOf => "in_front_of",
            Relationship::Behind => "behind",
            Relationship::Around => "around",
            Relationship::Near => "near",
            Relationship::Inside => "inside",
            Relationship::OnTopOf => "on_top_of",
            Relationship::OverheadColumn => "overhead_column",
            Relationship::BeneathColumn => "beneath_column",
        }
    }

    /// Plain-language phrase used in prompts ("above", "left of", ...).
    pub fn phrase(&self) -> &'static str {
        match self {
            Relationship::LeftOf => "to the left of",
            Relationship::RightOf => "to the right of",
            Relationship::InFrontOf => "in front of",
            Relationship::Around => "around",
            Relationship::Near => "near",
            Relationship::Inside => "inside",
            Relationship::OnTopOf => "directly on top of",
            Relationship::OverheadColumn => "anywhere in the column over",
            Relationship::BeneathColumn => "directly beneath",
            other => other.as_str(),
        }
    }
}

impl fmt::Display for Relationship {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relationship {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Relationship::ALL
            .into_iter()
            .find(|r| r.as_str() == key)
            .ok_or_else(|| GeometryError::UnknownRelationship(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeOptions {
    pub fit: FitOptions,
    pub split: SplitOptions,
    /// Dilation for `around` (m).
    pub around_margin: f64,
    /// Dilation for `near` (m).
    pub near_margin: f64,
    /// Slab height for `on_top_of` and `beneath_column` (m).
    pub slab_height: f64,
    /// How far past the workspace boundary extended copies are placed (m).
    pub boundary_pad: f64,
    /// Extra per-object growth applied to every member (m), default 0.
    pub margin: f64,
    pub seed: u64,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            split: SplitOptions::default(),
            around_margin: 0.15,
            near_margin: 0.30,
            slab_height: 0.10,
            boundary_pad: 0.10,
            margin: 0.0,
            seed: 0,
        }
    }
}

/// One constrained (object, relationship) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub object_id: String,
    pub label: String,
    pub relationship: Relationship,
    pub members: Vec<Superquadric>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSet {
    pub envelopes: Vec<Envelope>,
}

impl EnvelopeSet {
    pub fn len(&self) -> usize {
        self.envelopes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envelopes.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Envelope> {
        self.envelopes.iter()
    }
}

fn with_coordinate(points: &[Vector3<f64>], axis: usize, value: f64) -> Vec<Vector3<f64>> {
    points
        .iter()
        .map(|p| {
            let mut q = *p;
            q[axis] = value;
            q
        })
        .collect()
}

/// The point set a relationship's envelope is fitted to, built from one part.
/// Dilation families return the raw part; their growth happens after fitting.
pub fn extended_cloud(
    part: &[Vector3<f64>],
    relationship: Relationship,
    workspace: &Aabb,
    opts: &EnvelopeOptions,
) -> Vec<Vector3<f64>> {
    let pad = opts.boundary_pad;
    let axis_copy = |axis: usize, value: f64| {
        let mut out = part.to_vec();
        out.extend(with_coordinate(part, axis, value));
        out
    };
    match relationship {
        Relationship::Above => axis_copy(2, workspace.max[2] + pad),
        Relationship::Under => axis_copy(2, workspace.min[2] - pad),
        Relationship::LeftOf => axis_copy(1, workspace.max[1] + pad),
        Relationship::RightOf => axis_copy(1, workspace.min[1] - pad),
        Relationship::InFrontOf => axis_copy(0, workspace.min[0] - pad),
        Relationship::Behind => axis_copy(0, workspace.max[0] + pad),
        Relationship::OnTopOf => {
            let top = part.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
            axis_copy(2, top + opts.slab_height)
        }
        Relationship::BeneathColumn => {
            let bottom = part.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
            axis_copy(2, bottom - opts.slab_height)
        }
        Relationship::OverheadColumn => {
            let mut out = with_coordinate(part, 2, workspace.min[2] - pad);
            out.extend(with_coordinate(part, 2, workspace.max[2] + pad));
            out
        }
        Relationship::Around | Relationship::Near | Relationship::Inside => part.to_vec(),
    }
}

/// Fits one superquadric per part of `cloud` so that every point is inside
/// (`g <= 1`), grown by `margin`. Used for collision solids.
pub fn fit_solids(cloud: &PointCloud, opts: &EnvelopeOptions) -> Result<Vec<Superquadric>, GeometryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let parts = split_by_parts(cloud, &opts.split, &mut rng);
    parts
        .iter()
        .map(|part| {
            let sq = fit_part(part, &opts.fit, &mut rng)?;
            Ok(sq.inflated_to_contain(&part.points, 1.0, 1.0).grown(opts.margin))
        })
        .collect()
}

fn fit_part(part: &PointCloud, fit: &FitOptions, rng: &mut ChaCha8Rng) -> Result<Superquadric, GeometryError> {
    sq_fit(part, fit, rng)
}

/// Builds the envelope of `relationship` around `cloud`.
///
/// The cloud is split into planar parts first; each part gets the
/// relationship's construction and its own fitted member. Every member is
/// inflated until its whole generating cloud satisfies `g <= 1`, so the union
/// also covers the convex hull of each generating cloud.
pub fn build_envelope(
    cloud: &PointCloud,
    relationship: Relationship,
    workspace: &Aabb,
    opts: &EnvelopeOptions,
) -> Result<Vec<Superquadric>, GeometryError> {
    Ok(build_envelope_with_clouds(cloud, relationship, workspace, opts)?
        .into_iter()
        .map(|(sq, _)| sq)
        .collect())
}

/// [`build_envelope`], also returning each member's generating cloud.
pub fn build_envelope_with_clouds(
    cloud: &PointCloud,
    relationship: Relationship,
    workspace: &Aabb,
    opts: &EnvelopeOptions,
) -> Result<Vec<(Superquadric, Vec<Vector3<f64>>)>, GeometryError> {
    if workspace.is_degenerate() {
        return Err(GeometryError::InvalidWorkspace);
    }
    cloud.validate_for_fit()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let parts = split_by_parts(cloud, &opts.split, &mut rng);
    let mut members = Vec::with_capacity(parts.len());
    for part in &parts {
        let generating = part.with_points(extended_cloud(&part.points, relationship, workspace, opts));
        let sq = fit_part(&generating, &opts.fit, &mut rng)?.inflated_to_contain(&generating.points, 1.0, 1.0);
        let grow = match relationship {
            Relationship::Around => opts.around_margin,
            Relationship::Near => opts.near_margin,
            _ => 0.0,
        } + opts.margin;
        members.push((sq.grown(grow), generating.points));
    }
    Ok(members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fit::containment_fraction;
    use crate::geometry::synthetic;
    use crate::geometry::union_eval;

    fn workspace() -> Aabb {
        Aabb::new([-0.2, -0.8, 0.0], [1.0, 0.8, 1.2])
    }

    fn flat_cloud() -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = synthetic::box_surface(Vector3::new(0.5, 0.0, 0.05), Vector3::new(0.12, 0.09, 0.05), 600, &mut rng);
        PointCloud::new(pts, "books", "books")
    }

    #[test]
    fn tags_round_trip() {
        for r in Relationship::ALL {
            assert_eq!(r.as_str().parse::<Relationship>().unwrap(), r);
            let json = serde_json::to_string(&r).unwrap();
            assert_eq!(json, format!("\"{}\"", r.as_str()));
        }
        assert_eq!("Left of".parse::<Relationship>().unwrap(), Relationship::LeftOf);
        assert!("sideways".parse::<Relationship>().is_err());
    }

    #[test]
    fn above_covers_the_column() {
        let cloud = flat_cloud();
        let env = build_envelope(&cloud, Relationship::Above, &workspace(), &EnvelopeOptions::default()).unwrap();
        let c = cloud.centroid();
        let (g, _) = union_eval(&env, &Vector3::new(c.x, c.y, 0.6)).unwrap();
        assert!(g < 1.0, "g = {g}");
        for k in 0..=12 {
            let z = 0.1 + (1.2 - 0.1) * k as f64 / 12.0;
            for (dx, dy) in [(0.0, 0.0), (0.1, 0.07), (-0.1, -0.07), (0.1, -0.07)] {
                let (g, _) = union_eval(&env, &Vector3::new(c.x + dx, c.y + dy, z)).unwrap();
                assert!(g <= 1.0, "z={z} g={g}");
            }
        }
    }

    #[test]
    fn around_covers_a_shell() {
        let cloud = flat_cloud();
        let env = build_envelope(&cloud, Relationship::Around, &workspace(), &EnvelopeOptions::default()).unwrap();
        let c = Vector3::new(0.5, 0.0, 0.05);
        let half = Vector3::new(0.12, 0.09, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        // points 0.1 m outside each face of the box
        let shell = synthetic::box_surface(c, half.add_scalar(0.1), 500, &mut rng);
        assert_eq!(containment_fraction(&env, &shell, 1.0), 1.0);
    }

    #[test]
    fn near_contains_plain_fit() {
        let cloud = flat_cloud();
        let opts = EnvelopeOptions::default();
        let plain = build_envelope(&cloud, Relationship::Inside, &workspace(), &opts).unwrap();
        let near = build_envelope(&cloud, Relationship::Near, &workspace(), &opts).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                for k in 0..10 {
                    let x = Vector3::new(0.1 + 0.08 * i as f64, -0.4 + 0.08 * j as f64, 0.08 * k as f64);
                    let (gn, _) = union_eval(&near, &x).unwrap();
                    let (gp, _) = union_eval(&plain, &x).unwrap();
                    assert!(gn <= gp, "{x:?}");
                }
            }
        }
    }

    #[test]
    fn every_relationship_contains_its_generating_cloud() {
        let cloud = flat_cloud();
        let opts = EnvelopeOptions::default();
        for r in Relationship::ALL {
            let env = build_envelope(&cloud, r, &workspace(), &opts).unwrap();
            let generating = extended_cloud(&cloud.points, r, &workspace(), &opts);
            assert!(containment_fraction(&env, &generating, 1.1) >= 0.95, "{r}");
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let cloud = flat_cloud();
        let opts = EnvelopeOptions::default();
        let a = build_envelope(&cloud, Relationship::Behind, &workspace(), &opts).unwrap();
        let b = build_envelope(&cloud, Relationship::Behind, &workspace(), &opts).unwrap();
        assert_eq!(a, b);
    }
}
