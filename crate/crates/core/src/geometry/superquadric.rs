use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Smallest allowed semi-axis length (m).
pub const MIN_SCALE: f64 = 1e-3;
/// Shape exponents are kept in this range so the power terms stay finite.
pub const EPS_MIN: f64 = 0.1;
pub const EPS_MAX: f64 = 2.0;

const AXIS_PLANE_TOL: f64 = 1e-9;

/// A superquadric solid with inside-outside function
///
/// ```text
/// g(x) = ((|t1|/ax)^(2/e2) + (|t2|/ay)^(2/e2))^(e2/e1) + (|t3|/az)^(2/e1),
/// t = R^T (x - c)
/// ```
///
/// `g < 1` inside, `g = 1` on the surface, `g > 1` outside. `g` is positively
/// homogeneous of degree `2/e1` in `t`, which several inflation helpers rely on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "SuperquadricJson", try_from = "SuperquadricJson")]
pub struct Superquadric {
    pub center: Vector3<f64>,
    pub orientation: Rotation3<f64>,
    pub scale: Vector3<f64>,
    pub eps1: f64,
    pub eps2: f64,
}

impl Superquadric {
    /// Builds a solid, clamping scales to [`MIN_SCALE`] and exponents into
    /// `[EPS_MIN, EPS_MAX]`.
    pub fn new(
        center: Vector3<f64>,
        orientation: Rotation3<f64>,
        scale: Vector3<f64>,
        eps1: f64,
        eps2: f64,
    ) -> Self {
        Self {
            center,
            orientation,
            scale: scale.map(|a| a.max(MIN_SCALE)),
            eps1: eps1.clamp(EPS_MIN, EPS_MAX),
            eps2: eps2.clamp(EPS_MIN, EPS_MAX),
        }
    }

    pub fn sphere(center: Vector3<f64>, radius: f64) -> Self {
        Self::new(center, Rotation3::identity(), Vector3::repeat(radius), 1.0, 1.0)
    }

    pub fn axis_aligned(center: Vector3<f64>, scale: Vector3<f64>, eps1: f64, eps2: f64) -> Self {
        Self::new(center, Rotation3::identity(), scale, eps1, eps2)
    }

    /// Point expressed in the solid's frame.
    pub fn local(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.orientation.inverse_transform_vector(&(x - self.center))
    }

    /// Inside-outside function.
    pub fn eval(&self, x: &Vector3<f64>) -> f64 {
        let t = self.local(x);
        let (e1, e2) = (self.eps1, self.eps2);
        let tx = (t.x.abs() / self.scale.x).powf(2.0 / e2);
        let ty = (t.y.abs() / self.scale.y).powf(2.0 / e2);
        let tz = (t.z.abs() / self.scale.z).powf(2.0 / e1);
        (tx + ty).powf(e2 / e1) + tz
    }

    /// Analytic gradient of [`Self::eval`] with respect to `x`.
    ///
    /// On the axis planes `|t_k| < 1e-9` the corresponding partial is set to
    /// zero (a valid subgradient; the exact partial vanishes or is undefined).
    pub fn gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let t = self.local(x);
        let (e1, e2) = (self.eps1, self.eps2);
        let rx = t.x.abs() / self.scale.x;
        let ry = t.y.abs() / self.scale.y;
        let rz = t.z.abs() / self.scale.z;
        let inner = rx.powf(2.0 / e2) + ry.powf(2.0 / e2);
        let mut d = Vector3::zeros();
        if inner > 0.0 {
            let outer = (2.0 / e1) * inner.powf(e2 / e1 - 1.0);
            if t.x.abs() >= AXIS_PLANE_TOL {
                d.x = outer * rx.powf(2.0 / e2 - 1.0) * t.x.signum() / self.scale.x;
            }
            if t.y.abs() >= AXIS_PLANE_TOL {
                d.y = outer * ry.powf(2.0 / e2 - 1.0) * t.y.signum() / self.scale.y;
            }
        }
        if t.z.abs() >= AXIS_PLANE_TOL {
            d.z = (2.0 / e1) * rz.powf(2.0 / e1 - 1.0) * t.z.signum() / self.scale.z;
        }
        self.orientation * d
    }

    /// Same solid with every semi-axis grown by `margin`.
    pub fn grown(&self, margin: f64) -> Self {
        Self::new(
            self.center,
            self.orientation,
            self.scale.add_scalar(margin),
            self.eps1,
            self.eps2,
        )
    }

    /// Same solid scaled uniformly about its center by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.center, self.orientation, self.scale * factor, self.eps1, self.eps2)
    }

    /// Uniform scale factor that brings a point with value `g` onto `level`.
    pub fn scale_factor_for(&self, g: f64, level: f64) -> f64 {
        (g / level).powf(self.eps1 / 2.0)
    }

    /// Grows the solid uniformly (never shrinks) so that `g <= level` holds
    /// for the given fraction of `points`.
    pub fn inflated_to_contain(&self, points: &[Vector3<f64>], fraction: f64, level: f64) -> Self {
        if points.is_empty() {
            return *self;
        }
        let mut values: Vec<f64> = points.iter().map(|p| self.eval(p)).collect();
        values.sort_by(f64::total_cmp);
        let idx = ((fraction.clamp(0.0, 1.0) * values.len() as f64).ceil() as usize)
            .clamp(1, values.len())
            - 1;
        let g = values[idx];
        if g <= level {
            return *self;
        }
        // a hair over so the boundary point lands strictly inside
        self.scaled(self.scale_factor_for(g, level) * (1.0 + 1e-9))
    }

    pub fn volume_proxy(&self) -> f64 {
        self.scale.x * self.scale.y * self.scale.z
    }

    /// Triangulated surface from a `nu x nv` parametric grid, in world frame.
    pub fn mesh(&self, nu: usize, nv: usize) -> TriMesh {
        let nu = nu.max(3);
        let nv = nv.max(3);
        let spow = |v: f64, e: f64| v.signum() * v.abs().powf(e);
        let mut vertices = Vec::with_capacity(nu * nv);
        for i in 0..nu {
            // latitude from pole to pole, endpoints included
            let eta = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / (nu - 1) as f64;
            for j in 0..nv {
                let omega = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * j as f64 / nv as f64;
                let ce = spow(eta.cos(), self.eps1);
                let local = Vector3::new(
                    self.scale.x * ce * spow(omega.cos(), self.eps2),
                    self.scale.y * ce * spow(omega.sin(), self.eps2),
                    self.scale.z * spow(eta.sin(), self.eps1),
                );
                let w = self.orientation * local + self.center;
                vertices.push([w.x, w.y, w.z]);
            }
        }
        let mut indices = Vec::with_capacity(2 * (nu - 1) * nv);
        for i in 0..nu - 1 {
            for j in 0..nv {
                let a = (i * nv + j) as u32;
                let b = (i * nv + (j + 1) % nv) as u32;
                let c = ((i + 1) * nv + j) as u32;
                let d = ((i + 1) * nv + (j + 1) % nv) as u32;
                indices.push([a, c, b]);
                indices.push([b, c, d]);
            }
        }
        TriMesh { vertices, indices }
    }
}

/// Minimum of `g` over a union of solids, with the index of the minimizer.
pub fn union_eval(members: &[Superquadric], x: &Vector3<f64>) -> Option<(f64, usize)> {
    members
        .iter()
        .enumerate()
        .map(|(i, sq)| (sq.eval(x), i))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

/// Triangle mesh as flat JSON arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 3]>,
    pub indices: Vec<[u32; 3]>,
}

/// Wire form: orientation as a unit quaternion `[w, x, y, z]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuperquadricJson {
    pub center: [f64; 3],
    pub orientation: [f64; 4],
    pub scale: [f64; 3],
    pub eps1: f64,
    pub eps2: f64,
}

impl From<Superquadric> for SuperquadricJson {
    fn from(sq: Superquadric) -> Self {
        let q = UnitQuaternion::from_rotation_matrix(&sq.orientation);
        Self {
            center: sq.center.into(),
            orientation: [q.w, q.i, q.j, q.k],
            scale: sq.scale.into(),
            eps1: sq.eps1,
            eps2: sq.eps2,
        }
    }
}

impl TryFrom<SuperquadricJson> for Superquadric {
    type Error = String;

    fn try_from(j: SuperquadricJson) -> Result<Self, Self::Error> {
        let [w, x, y, z] = j.orientation;
        let quat = nalgebra::Quaternion::new(w, x, y, z);
        if !(quat.norm() > 1e-9) || !j.center.iter().chain(&j.scale).all(|v| v.is_finite()) {
            return Err("superquadric has a degenerate orientation or non-finite fields".into());
        }
        if j.scale.iter().any(|&a| a <= 0.0) {
            return Err("superquadric scales must be positive".into());
        }
        let rot = UnitQuaternion::from_quaternion(quat).to_rotation_matrix();
        Ok(Superquadric::new(
            Vector3::from(j.center),
            rot,
            Vector3::from(j.scale),
            j.eps1,
            j.eps2,
        ))
    }
}

/// Rotation from three orthonormal columns, flipping the last to keep det +1.
pub fn rotation_from_columns(c0: Vector3<f64>, c1: Vector3<f64>, c2: Vector3<f64>) -> Rotation3<f64> {
    let mut m = Matrix3::from_columns(&[c0, c1, c2]);
    if m.determinant() < 0.0 {
        m.set_column(2, &(-c2));
    }
    Rotation3::from_matrix_unchecked(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_gradient(sq: &Superquadric, x: &Vector3<f64>) -> Vector3<f64> {
        let h = 1e-6;
        let mut g = Vector3::zeros();
        for k in 0..3 {
            let mut xp = *x;
            let mut xm = *x;
            xp[k] += h;
            xm[k] -= h;
            g[k] = (sq.eval(&xp) - sq.eval(&xm)) / (2.0 * h);
        }
        g
    }

    fn random_sq(rng: &mut impl Rng) -> Superquadric {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        Superquadric::new(
            Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            Rotation3::new(axis * rng.random_range(0.0..3.0)),
            Vector3::new(rng.random_range(0.05..1.0), rng.random_range(0.05..1.0), rng.random_range(0.05..1.0)),
            rng.random_range(0.2..1.8),
            rng.random_range(0.2..1.8),
        )
    }

    #[test]
    fn sphere_surface_and_center() {
        let sq = Superquadric::sphere(Vector3::zeros(), 0.5);
        assert!((sq.eval(&Vector3::new(0.5, 0.0, 0.0)) - 1.0).abs() < 1e-12);
        assert_eq!(sq.eval(&Vector3::zeros()), 0.0);
    }

    #[test]
    fn near_cube_contains_its_corner_region() {
        let sq = Superquadric::axis_aligned(Vector3::zeros(), Vector3::repeat(1.0), 0.1, 0.1);
        assert!(sq.eval(&Vector3::new(0.9, 0.9, 0.9)) < 1.0);
        // dense membership sampling: the solid fills most of the bounding cube
        let mut inside = 0;
        let steps = 20;
        for i in 0..steps {
            for j in 0..steps {
                for k in 0..steps {
                    let f = |v: usize| -1.0 + 2.0 * (v as f64 + 0.5) / steps as f64;
                    if sq.eval(&Vector3::new(f(i), f(j), f(k))) < 1.0 {
                        inside += 1;
                    }
                }
            }
        }
        assert!(inside as f64 / (steps * steps * steps) as f64 > 0.9);
    }

    #[test]
    fn sphere_gradient_on_surface() {
        let sq = Superquadric::sphere(Vector3::zeros(), 0.5);
        let x = Vector3::new(0.5, 0.0, 0.0);
        let g = sq.gradient(&x);
        // d/dx (x/a)^2 = 2x/a^2 = 4
        assert!((g - Vector3::new(4.0, 0.0, 0.0)).norm() < 1e-9);
        assert!((g - fd_gradient(&sq, &x)).norm() / g.norm() < 1e-5);
        assert_eq!(sq.gradient(&Vector3::zeros()), Vector3::zeros());
    }

    #[test]
    fn gradient_matches_finite_differences_off_axis_planes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 1000 {
            let sq = random_sq(&mut rng);
            let t = Vector3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            if t.iter().any(|v: &f64| v.abs() <= 1e-3) {
                continue;
            }
            let x = sq.orientation * t + sq.center;
            let g = sq.gradient(&x);
            let fd = fd_gradient(&sq, &x);
            let rel = (g - fd).norm() / g.norm().max(1e-12);
            assert!(rel < 1e-5, "rel err {rel} for {sq:?} at {x:?}");
            checked += 1;
        }
    }

    #[test]
    fn uniform_growth_decreases_g() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let sq = random_sq(&mut rng);
            let big = sq.scaled(rng.random_range(1.01..3.0));
            let x = sq.center + Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            assert!(big.eval(&x) < sq.eval(&x));
        }
    }

    #[test]
    fn inflation_reaches_requested_containment() {
        let sq = Superquadric::sphere(Vector3::zeros(), 0.5);
        let pts: Vec<_> = (0..100).map(|i| Vector3::new(0.4 + 0.01 * i as f64, 0.0, 0.0)).collect();
        let all = sq.inflated_to_contain(&pts, 1.0, 1.0);
        assert!(pts.iter().all(|p| all.eval(p) <= 1.0));
        let most = sq.inflated_to_contain(&pts, 0.95, 1.0);
        let inside = pts.iter().filter(|p| most.eval(p) <= 1.0).count();
        assert!(inside >= 95);
        // already containing: unchanged
        assert_eq!(sq.inflated_to_contain(&[Vector3::zeros()], 1.0, 1.0), sq);
    }

    #[test]
    fn json_round_trip_and_clamps() {
        let sq = Superquadric::new(
            Vector3::new(0.1, 0.2, 0.3),
            Rotation3::from_euler_angles(0.1, 0.2, 0.3),
            Vector3::new(0.2, 0.0, 0.4),
            0.01,
            5.0,
        );
        assert_eq!(sq.scale.y, MIN_SCALE);
        assert_eq!((sq.eps1, sq.eps2), (EPS_MIN, EPS_MAX));
        let text = serde_json::to_string(&sq).unwrap();
        let back: Superquadric = serde_json::from_str(&text).unwrap();
        let x = Vector3::new(0.3, -0.1, 0.5);
        assert!((back.eval(&x) / sq.eval(&x) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mesh_vertices_lie_on_surface() {
        let sq = Superquadric::new(
            Vector3::new(0.3, 0.0, 0.2),
            Rotation3::from_euler_angles(0.0, 0.4, 1.0),
            Vector3::new(0.2, 0.1, 0.3),
            0.5,
            0.8,
        );
        let mesh = sq.mesh(32, 32);
        assert_eq!(mesh.vertices.len(), 32 * 32);
        assert_eq!(mesh.indices.len(), 2 * 31 * 32);
        for v in &mesh.vertices {
            let g = sq.eval(&Vector3::from(*v));
            assert!((g - 1.0).abs() < 1e-6, "g = {g}");
        }
    }
}
