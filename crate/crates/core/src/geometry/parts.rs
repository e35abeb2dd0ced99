//! Plane-based part segmentation.

use nalgebra::Vector3;
use rand::Rng;

use super::cloud::{PointCloud, PrincipalFrame};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOptions {
    /// Point-to-plane inlier distance (m).
    pub inlier_threshold: f64,
    /// A plane must explain at least this fraction of the whole cloud.
    pub min_fraction: f64,
    pub ransac_iterations: usize,
    /// Planes whose normals differ by less than this (rad) belong to one part.
    pub parallel_tolerance: f64,
    /// A split is kept only if the parts' boxes are this much tighter.
    pub volume_ratio: f64,
    pub max_planes: usize,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            inlier_threshold: 0.01,
            min_fraction: 0.15,
            ransac_iterations: 300,
            parallel_tolerance: 20f64.to_radians(),
            volume_ratio: 0.6,
            max_planes: 6,
        }
    }
}

#[derive(Debug, Clone)]
struct Plane {
    normal: Vector3<f64>,
    members: Vec<usize>,
}

impl Plane {
    fn through(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Option<(Vector3<f64>, f64)> {
        let n = (b - a).cross(&(c - a));
        let norm = n.norm();
        if norm < 1e-12 {
            return None;
        }
        let n = n / norm;
        Some((n, n.dot(a)))
    }
}

fn inliers(points: &[Vector3<f64>], pool: &[usize], n: &Vector3<f64>, d: f64, tol: f64) -> Vec<usize> {
    pool.iter()
        .copied()
        .filter(|&i| (n.dot(&points[i]) - d).abs() <= tol)
        .collect()
}

fn ransac_plane<R: Rng + ?Sized>(
    points: &[Vector3<f64>],
    pool: &[usize],
    opts: &SplitOptions,
    rng: &mut R,
) -> Option<Plane> {
    if pool.len() < 3 {
        return None;
    }
    let mut best: Option<Plane> = None;
    for _ in 0..opts.ransac_iterations {
        let i = pool[rng.random_range(0..pool.len())];
        let j = pool[rng.random_range(0..pool.len())];
        let k = pool[rng.random_range(0..pool.len())];
        let Some((n, d)) = Plane::through(&points[i], &points[j], &points[k]) else {
            continue;
        };
        let members = inliers(points, pool, &n, d, opts.inlier_threshold);
        if best.as_ref().is_none_or(|b| members.len() > b.members.len()) {
            best = Some(Plane { normal: n, members });
        }
    }
    // least-squares refit on the consensus set
    let mut plane = best?;
    let subset: Vec<Vector3<f64>> = plane.members.iter().map(|&i| points[i]).collect();
    let frame = PrincipalFrame::of(&subset);
    let n = frame.axes.matrix().column(2).into_owned();
    let d = n.dot(&frame.centroid);
    let refit = inliers(points, pool, &n, d, opts.inlier_threshold);
    if refit.len() >= plane.members.len() {
        plane = Plane { normal: n, members: refit };
    }
    Some(plane)
}

/// Splits `cloud` into approximately planar parts.
///
/// Planes are peeled off with RANSAC until none explains `min_fraction` of
/// the cloud. Parallel planes are merged into one part (the two faces of a
/// slab), leftovers join the part of their nearest assigned point, and the
/// split is kept only if the parts' oriented boxes are markedly tighter than
/// the whole cloud's. Always returns at least one part.
pub fn split_by_parts<R: Rng + ?Sized>(cloud: &PointCloud, opts: &SplitOptions, rng: &mut R) -> Vec<PointCloud> {
    let points = &cloud.points;
    let total = points.len();
    let min_count = ((opts.min_fraction * total as f64).ceil() as usize).max(3);
    let mut remaining: Vec<usize> = (0..total).collect();
    let mut planes: Vec<Plane> = Vec::new();
    while remaining.len() >= min_count && planes.len() < opts.max_planes {
        let Some(plane) = ransac_plane(points, &remaining, opts, rng) else {
            break;
        };
        if plane.members.len() < min_count {
            break;
        }
        let mut taken = vec![false; total];
        for &i in &plane.members {
            taken[i] = true;
        }
        remaining.retain(|&i| !taken[i]);
        planes.push(plane);
    }
    if planes.len() < 2 {
        return vec![cloud.clone()];
    }

    // merge parallel planes
    let cos_tol = opts.parallel_tolerance.cos();
    let mut group_of: Vec<usize> = Vec::with_capacity(planes.len());
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (pi, plane) in planes.iter().enumerate() {
        let found = (0..pi).find(|&pj| planes[pj].normal.dot(&plane.normal).abs() >= cos_tol);
        match found {
            Some(pj) => {
                let g = group_of[pj];
                group_of.push(g);
                groups[g].extend_from_slice(&plane.members);
            }
            None => {
                group_of.push(groups.len());
                groups.push(plane.members.clone());
            }
        }
    }
    if groups.len() < 2 {
        return vec![cloud.clone()];
    }

    let mut label = vec![usize::MAX; total];
    for (g, members) in groups.iter().enumerate() {
        for &i in members {
            label[i] = g;
        }
    }
    let assigned: Vec<usize> = (0..total).filter(|&i| label[i] != usize::MAX).collect();
    for &i in &remaining {
        let nearest = assigned
            .iter()
            .min_by(|&&a, &&b| {
                (points[a] - points[i])
                    .norm_squared()
                    .total_cmp(&(points[b] - points[i]).norm_squared())
            })
            .copied();
        if let Some(a) = nearest {
            groups[label[a]].push(i);
        }
    }

    const THICKNESS_FLOOR: f64 = 1e-3;
    let whole = PrincipalFrame::of(points).box_volume(THICKNESS_FLOOR);
    let parts_volume: f64 = groups
        .iter()
        .map(|g| {
            let pts: Vec<Vector3<f64>> = g.iter().map(|&i| points[i]).collect();
            PrincipalFrame::of(&pts).box_volume(THICKNESS_FLOOR)
        })
        .sum();
    if parts_volume >= opts.volume_ratio * whole {
        return vec![cloud.clone()];
    }
    groups
        .into_iter()
        .map(|mut g| {
            g.sort_unstable();
            cloud.with_points(g.into_iter().map(|i| points[i]).collect())
        })
        .collect()
}
