//! Surface samplers for simple solids, used to generate demo scenes and as
//! test fixtures.

use nalgebra::{Rotation3, Vector3};
use rand::Rng;

use super::superquadric::rotation_from_columns;

fn unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn sphere_surface<R: Rng + ?Sized>(center: Vector3<f64>, radius: f64, n: usize, rng: &mut R) -> Vec<Vector3<f64>> {
    (0..n).map(|_| center + unit_vector(rng) * radius).collect()
}

/// Ellipsoid surface (sphere directions stretched, so not area-uniform).
pub fn ellipsoid_surface<R: Rng + ?Sized>(
    center: Vector3<f64>,
    radii: Vector3<f64>,
    n: usize,
    rng: &mut R,
) -> Vec<Vector3<f64>> {
    (0..n).map(|_| center + unit_vector(rng).component_mul(&radii)).collect()
}

/// Area-weighted samples on the faces of an oriented box.
pub fn oriented_box_surface<R: Rng + ?Sized>(
    center: Vector3<f64>,
    rotation: Rotation3<f64>,
    half: Vector3<f64>,
    n: usize,
    rng: &mut R,
) -> Vec<Vector3<f64>> {
    let areas = [half.y * half.z, half.x * half.z, half.x * half.y];
    let total: f64 = areas.iter().sum();
    (0..n)
        .map(|_| {
            let mut pick = rng.random_range(0.0..total);
            let mut axis = 2;
            for (k, a) in areas.iter().enumerate() {
                if pick < *a {
                    axis = k;
                    break;
                }
                pick -= a;
            }
            let mut local = Vector3::new(
                rng.random_range(-half.x..=half.x),
                rng.random_range(-half.y..=half.y),
                rng.random_range(-half.z..=half.z),
            );
            local[axis] = if rng.random_bool(0.5) { half[axis] } else { -half[axis] };
            center + rotation * local
        })
        .collect()
}

pub fn box_surface<R: Rng + ?Sized>(center: Vector3<f64>, half: Vector3<f64>, n: usize, rng: &mut R) -> Vec<Vector3<f64>> {
    oriented_box_surface(center, Rotation3::identity(), half, n, rng)
}

/// Closed upright cylinder; `base` is the center of the bottom cap.
pub fn cylinder_surface<R: Rng + ?Sized>(
    base: Vector3<f64>,
    radius: f64,
    height: f64,
    n: usize,
    rng: &mut R,
) -> Vec<Vector3<f64>> {
    let side = 2.0 * std::f64::consts::PI * radius * height;
    let cap = std::f64::consts::PI * radius * radius;
    (0..n)
        .map(|_| {
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let pick = rng.random_range(0.0..side + 2.0 * cap);
            if pick < side {
                base + Vector3::new(radius * phi.cos(), radius * phi.sin(), rng.random_range(0.0..=height))
            } else {
                let r = radius * rng.random_range(0.0f64..1.0).sqrt();
                let z = if pick < side + cap { 0.0 } else { height };
                base + Vector3::new(r * phi.cos(), r * phi.sin(), z)
            }
        })
        .collect()
}

/// Open laptop: a base slab resting on `origin` and a screen slab hinged at
/// the back edge, `opening` radians from the base. `yaw` turns the whole
/// laptop about the vertical.
pub fn open_laptop<R: Rng + ?Sized>(
    origin: Vector3<f64>,
    yaw: f64,
    opening: f64,
    n: usize,
    rng: &mut R,
) -> Vec<Vector3<f64>> {
    let (depth, width, base_t, screen_t) = (0.22, 0.32, 0.015, 0.008);
    let turn = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
    let base_center = Vector3::new(0.0, 0.0, base_t / 2.0);
    let mut pts = oriented_box_surface(
        base_center,
        Rotation3::identity(),
        Vector3::new(depth / 2.0, width / 2.0, base_t / 2.0),
        n / 2,
        rng,
    );
    let hinge = Vector3::new(-depth / 2.0, 0.0, base_t);
    let d = Vector3::new(opening.cos(), 0.0, opening.sin());
    let y = Vector3::y();
    let rot = rotation_from_columns(d, y, d.cross(&y));
    pts.extend(oriented_box_surface(
        hinge + d * (depth / 2.0),
        rot,
        Vector3::new(depth / 2.0, width / 2.0, screen_t / 2.0),
        n - n / 2,
        rng,
    ));
    pts.into_iter().map(|p| origin + turn * p).collect()
}
