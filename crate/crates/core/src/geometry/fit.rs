//! Least-squares superquadric recovery.
//!
//! Minimizes `sum_j (g(x_j)^e1 - 1)^2 * (ax ay az)^(1/3)` over center,
//! orientation, scales and exponents with a Levenberg-Marquardt loop on a
//! numerically differentiated residual. Several starts (each principal axis
//! as the local z axis, round and boxy exponents) are tried and the lowest
//! cost wins.

use nalgebra::{DMatrix, DVector, Rotation3, Vector3};
use rand::seq::index::sample;
use rand::Rng;

use super::cloud::{PointCloud, PrincipalFrame};
use super::superquadric::{rotation_from_columns, Superquadric, EPS_MAX, EPS_MIN, MIN_SCALE};
use super::GeometryError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Points count as contained when `g <= 1 + fit_slack`.
    pub fit_slack: f64,
    /// Fraction of points that must end up contained.
    pub containment: f64,
    /// Points used by the optimizer (random subsample above this).
    pub max_points: usize,
    pub max_iterations: usize,
    /// Upper bound for fitted exponents. Above 1 the solids get pinched
    /// edges, and a square prism becomes ambiguous with a rotated diamond.
    pub max_exponent: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            fit_slack: 0.1,
            containment: 0.95,
            max_points: 400,
            max_iterations: 150,
            max_exponent: 1.0,
        }
    }
}

const N_PARAMS: usize = 11;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn eps_from_logit(z: f64, hi: f64) -> f64 {
    EPS_MIN + (hi - EPS_MIN) * sigmoid(z)
}

fn logit_from_eps(e: f64, hi: f64) -> f64 {
    let s = ((e - EPS_MIN) / (hi - EPS_MIN)).clamp(1e-6, 1.0 - 1e-6);
    (s / (1.0 - s)).ln()
}

struct Problem<'a> {
    points: &'a [Vector3<f64>],
    base_rotation: Rotation3<f64>,
    eps_hi: f64,
}

impl Problem<'_> {
    fn decode(&self, p: &DVector<f64>) -> Superquadric {
        let rot = self.base_rotation * Rotation3::new(Vector3::new(p[3], p[4], p[5]));
        Superquadric::new(
            Vector3::new(p[0], p[1], p[2]),
            rot,
            Vector3::new(p[6].exp(), p[7].exp(), p[8].exp()),
            eps_from_logit(p[9], self.eps_hi),
            eps_from_logit(p[10], self.eps_hi),
        )
    }

    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        let sq = self.decode(p);
        let weight = sq.volume_proxy().powf(1.0 / 6.0);
        DVector::from_iterator(
            self.points.len(),
            self.points.iter().map(|x| (sq.eval(x).powf(sq.eps1) - 1.0) * weight),
        )
    }

    fn clamp(p: &mut DVector<f64>) {
        let floor = MIN_SCALE.ln();
        for k in 6..9 {
            p[k] = p[k].max(floor);
        }
        for k in 9..11 {
            p[k] = p[k].clamp(-12.0, 12.0);
        }
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let m = self.points.len();
        let mut jac = DMatrix::zeros(m, N_PARAMS);
        for k in 0..N_PARAMS {
            let h = 1e-6 * p[k].abs().max(1.0);
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp[k] += h;
            pm[k] -= h;
            let d = (self.residuals(&pp) - self.residuals(&pm)) / (2.0 * h);
            jac.set_column(k, &d);
        }
        jac
    }

    fn minimize(&self, mut params: DVector<f64>, max_iterations: usize) -> (DVector<f64>, f64) {
        Self::clamp(&mut params);
        let mut r = self.residuals(&params);
        let mut cost = 0.5 * r.norm_squared();
        if !cost.is_finite() {
            return (params, f64::INFINITY);
        }
        let mut lambda = 1e-3;
        let mut stalls = 0;
        for _ in 0..max_iterations {
            let jac = self.jacobian(&params);
            let jtj = jac.tr_mul(&jac);
            let jtr = jac.tr_mul(&r);
            let mut accepted = false;
            for _ in 0..12 {
                let mut a = jtj.clone();
                for i in 0..N_PARAMS {
                    a[(i, i)] += lambda * (jtj[(i, i)] + 1e-12);
                }
                let Some(ch) = a.cholesky() else {
                    lambda *= 4.0;
                    continue;
                };
                let mut trial = &params - ch.solve(&jtr);
                Self::clamp(&mut trial);
                let r_trial = self.residuals(&trial);
                let c_trial = 0.5 * r_trial.norm_squared();
                if c_trial.is_finite() && c_trial < cost {
                    let gain = (cost - c_trial) / cost.max(1e-300);
                    params = trial;
                    r = r_trial;
                    cost = c_trial;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    stalls = if gain < 1e-9 { stalls + 1 } else { 0 };
                    break;
                }
                lambda *= 4.0;
            }
            if !accepted || stalls >= 3 || cost < 1e-20 {
                break;
            }
        }
        (params, cost)
    }
}

/// Fits a single superquadric to `cloud`.
///
/// The result is grown uniformly if needed so that at least
/// `opts.containment` of the input points satisfy `g <= 1 + opts.fit_slack`.
pub fn sq_fit<R: Rng + ?Sized>(
    cloud: &PointCloud,
    opts: &FitOptions,
    rng: &mut R,
) -> Result<Superquadric, GeometryError> {
    cloud.validate_for_fit()?;
    let frame = PrincipalFrame::of(&cloud.points);
    let thin_axes = frame.half_extents.iter().filter(|&&e| 2.0 * e < MIN_SCALE).count();
    if thin_axes >= 2 {
        return Err(GeometryError::FitDegenerate(format!(
            "{}: cloud is degenerate in {thin_axes} principal directions",
            cloud.object_id
        )));
    }

    let subset: Vec<Vector3<f64>> = if cloud.len() > opts.max_points {
        let mut idx = sample(rng, cloud.len(), opts.max_points).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| cloud.points[i]).collect()
    } else {
        cloud.points.clone()
    };

    let center = frame.centroid + frame.axes * frame.mid;
    let cols: [Vector3<f64>; 3] = [
        frame.axes.matrix().column(0).into_owned(),
        frame.axes.matrix().column(1).into_owned(),
        frame.axes.matrix().column(2).into_owned(),
    ];
    let mut best: Option<(f64, Superquadric)> = None;
    let mut fallback: Option<Superquadric> = None;
    // each principal axis takes a turn as the local z axis
    for z_axis in 0..3 {
        let (ix, iy) = match z_axis {
            0 => (1, 2),
            1 => (2, 0),
            _ => (0, 1),
        };
        let base_rotation = rotation_from_columns(cols[ix], cols[iy], cols[z_axis]);
        let extents = Vector3::new(
            frame.half_extents[ix],
            frame.half_extents[iy],
            frame.half_extents[z_axis],
        );
        let problem = Problem {
            points: &subset,
            base_rotation,
            eps_hi: opts.max_exponent.clamp(EPS_MIN + 0.05, EPS_MAX),
        };
        for &eps in &[0.9, 0.3] {
            let mut p0 = DVector::zeros(N_PARAMS);
            p0.fixed_rows_mut::<3>(0).copy_from(&center);
            for k in 0..3 {
                p0[6 + k] = extents[k].max(MIN_SCALE).ln();
            }
            p0[9] = logit_from_eps(eps, problem.eps_hi);
            p0[10] = logit_from_eps(eps, problem.eps_hi);
            if fallback.is_none() && eps < 0.5 {
                fallback = Some(problem.decode(&p0));
            }
            let (p, cost) = problem.minimize(p0.clone(), opts.max_iterations);
            let sq = problem.decode(&p);
            if !plausible(&sq, &frame) {
                continue;
            }
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, sq));
            }
        }
    }
    // every start ran off to a solid that only touches the cloud with one
    // face; keep the principal box instead
    let sq = match (best, fallback) {
        (Some((_, sq)), _) | (None, Some(sq)) => sq,
        (None, None) => return Err(GeometryError::FitDegenerate(cloud.object_id.clone())),
    };
    if !sq.center.iter().chain(sq.scale.iter()).all(|v| v.is_finite()) {
        return Err(GeometryError::FitDegenerate(format!(
            "{}: optimizer diverged",
            cloud.object_id
        )));
    }
    let level = 1.0 + opts.fit_slack;
    let mut out = sq.inflated_to_contain(&cloud.points, opts.containment, level);
    // axes along which the cloud has no thickness go to the clamp, provided
    // containment survives (uniform inflation thickens them otherwise)
    let mut reach = Vector3::<f64>::zeros();
    for p in &cloud.points {
        reach = reach.sup(&out.local(p).abs());
    }
    if (0..3).any(|k| reach[k] < MIN_SCALE && out.scale[k] > MIN_SCALE) {
        let mut thin = out;
        for k in 0..3 {
            if reach[k] < MIN_SCALE {
                thin.scale[k] = MIN_SCALE;
            }
        }
        if containment_fraction(&[thin], &cloud.points, level) >= opts.containment {
            out = thin;
        }
    }
    Ok(out)
}

/// A fit whose center leaves the cloud's principal box, or whose largest
/// semi-axis is more than twice the cloud's largest half extent, wraps the
/// cloud from outside.
fn plausible(sq: &Superquadric, frame: &PrincipalFrame) -> bool {
    let local = frame.axes.inverse_transform_vector(&(sq.center - frame.centroid)) - frame.mid;
    let inside = (0..3).all(|k| local[k].abs() <= frame.half_extents[k] + MIN_SCALE);
    inside && sq.scale.max() <= 2.0 * frame.half_extents.max() + MIN_SCALE
}

/// Fraction of `points` with `g <= level` for at least one member.
pub fn containment_fraction(members: &[Superquadric], points: &[Vector3<f64>], level: f64) -> f64 {
    if points.is_empty() {
        return 1.0;
    }
    let inside = points
        .iter()
        .filter(|p| members.iter().any(|sq| sq.eval(p) <= level))
        .count();
    inside as f64 / points.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::synthetic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_a_sphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = synthetic::sphere_surface(Vector3::new(0.2, -0.1, 0.4), 0.5, 500, &mut rng);
        let sq = sq_fit(&PointCloud::new(pts.clone(), "ball", "ball"), &FitOptions::default(), &mut rng).unwrap();
        for a in sq.scale.iter() {
            assert!((a - 0.5).abs() <= 0.02, "scale {:?}", sq.scale);
        }
        assert!((0.8..=1.2).contains(&sq.eps1) && (0.8..=1.2).contains(&sq.eps2), "{sq:?}");
        assert!(containment_fraction(&[sq], &pts, 1.1) >= 0.95);
    }

    #[test]
    fn recovers_a_cube() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = synthetic::box_surface(Vector3::zeros(), Vector3::repeat(0.5), 600, &mut rng);
        let sq = sq_fit(&PointCloud::new(pts.clone(), "cube", "cube"), &FitOptions::default(), &mut rng).unwrap();
        assert!(sq.eps1 <= 0.3 && sq.eps2 <= 0.3, "{sq:?}");
        for a in sq.scale.iter() {
            assert!((a - 0.5).abs() <= 0.05, "scale {:?}", sq.scale);
        }
        assert!(containment_fraction(&[sq], &pts, 1.1) >= 0.95);
    }

    #[test]
    fn coplanar_cloud_hits_thickness_clamp() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..200)
            .map(|_| Vector3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.1..0.1), 0.0))
            .collect();
        let sq = sq_fit(&PointCloud::new(pts.clone(), "sheet", "sheet"), &FitOptions::default(), &mut rng).unwrap();
        let thinnest = sq.scale.min();
        assert!((thinnest - MIN_SCALE).abs() < 1e-12, "{sq:?}");
        assert!(containment_fraction(&[sq], &pts, 1.1) >= 0.95);
    }

    #[test]
    fn collinear_cloud_is_degenerate() {
        let pts: Vec<_> = (0..100).map(|i| Vector3::new(i as f64 * 0.01, 0.0, 0.0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let err = sq_fit(&PointCloud::new(pts, "rod", "rod"), &FitOptions::default(), &mut rng).unwrap_err();
        assert!(matches!(err, GeometryError::FitDegenerate(_)));
    }
}
