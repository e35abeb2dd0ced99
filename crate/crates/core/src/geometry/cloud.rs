use nalgebra::{Matrix3, Rotation3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::superquadric::rotation_from_columns;
use super::GeometryError;

/// Minimum number of points a cloud needs before it can be fitted.
pub const MIN_FIT_POINTS: usize = 50;

/// A labeled object point cloud in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub label: String,
    pub object_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>, label: impl Into<String>, object_id: impl Into<String>) -> Self {
        Self {
            points,
            label: label.into(),
            object_id: object_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks the invariants a cloud must satisfy before fitting.
    pub fn validate_for_fit(&self) -> Result<(), GeometryError> {
        if self.points.len() < MIN_FIT_POINTS {
            return Err(GeometryError::InvalidCloud(format!(
                "{}: {} points, need at least {MIN_FIT_POINTS}",
                self.object_id,
                self.points.len()
            )));
        }
        if self.points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(GeometryError::InvalidCloud(format!(
                "{}: non-finite coordinates",
                self.object_id
            )));
        }
        Ok(())
    }

    pub fn centroid(&self) -> Vector3<f64> {
        centroid(&self.points)
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.points)
    }

    /// Same label and id, different points.
    pub fn with_points(&self, points: Vec<Vector3<f64>>) -> Self {
        Self {
            points,
            label: self.label.clone(),
            object_id: self.object_id.clone(),
        }
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn from_points(points: &[Vector3<f64>]) -> Self {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for p in points {
            for k in 0..3 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        Self { min, max }
    }

    pub fn is_degenerate(&self) -> bool {
        (0..3).any(|k| !(self.max[k] > self.min[k]) || !self.min[k].is_finite() || !self.max[k].is_finite())
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn min_v(&self) -> Vector3<f64> {
        Vector3::from(self.min)
    }

    pub fn max_v(&self) -> Vector3<f64> {
        Vector3::from(self.max)
    }
}

pub fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    if points.is_empty() {
        return Vector3::zeros();
    }
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

/// Principal frame of a point set.
#[derive(Debug, Clone, Copy)]
pub struct PrincipalFrame {
    pub centroid: Vector3<f64>,
    /// Columns are the principal axes, by decreasing variance.
    pub axes: Rotation3<f64>,
    /// Half extents along each axis (max absolute projection).
    pub half_extents: Vector3<f64>,
    /// Midpoint of the extents along each axis, in the principal frame.
    pub mid: Vector3<f64>,
}

impl PrincipalFrame {
    pub fn of(points: &[Vector3<f64>]) -> Self {
        let c = centroid(points);
        let mut cov = Matrix3::zeros();
        for p in points {
            let d = p - c;
            cov += d * d.transpose();
        }
        cov /= points.len().max(1) as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let cols: Vec<Vector3<f64>> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
        let axes = rotation_from_columns(cols[0], cols[1], cols[2]);
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in points {
            let t = axes.inverse_transform_vector(&(p - c));
            lo = lo.inf(&t);
            hi = hi.sup(&t);
        }
        Self {
            centroid: c,
            axes,
            half_extents: (hi - lo) * 0.5,
            mid: (hi + lo) * 0.5,
        }
    }

    /// Volume of the oriented bounding box, with a thickness floor.
    pub fn box_volume(&self, floor: f64) -> f64 {
        self.half_extents.iter().map(|e| (2.0 * e).max(floor)).product()
    }
}
