//! Brute-force safety check of logged ticks, independent of the barrier
//! rows: sphere/point containment against the raw clouds, direct envelope
//! membership, direct joint limits and sphere distances.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::barrier::ConstraintClass;
use crate::io::TickRecord;

use super::SimSession;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Same tolerance as the barrier flags: a tick is flagged by the barrier
    /// rows when some `h < -tol`.
    pub tol: f64,
    /// Half width (m) of the rays used by the enclosure test.
    pub ray_radius: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { tol: 1e-3, ray_radius: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTick {
    pub tick: u64,
    pub oracle: bool,
    pub barrier: bool,
    /// Classes the oracle found violated.
    pub classes: Vec<ConstraintClass>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub ticks: Vec<OracleTick>,
}

impl OracleReport {
    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn violations(&self) -> usize {
        self.ticks.iter().filter(|t| t.oracle).count()
    }

    pub fn disagreements(&self) -> usize {
        self.ticks.iter().filter(|t| t.oracle != t.barrier).count()
    }

    pub fn agreement_rate(&self) -> f64 {
        if self.ticks.is_empty() {
            return 1.0;
        }
        1.0 - self.disagreements() as f64 / self.ticks.len() as f64
    }

    pub fn merge(&mut self, other: OracleReport) {
        self.ticks.extend(other.ticks);
    }
}

/// True if cloud points surround `c` along all six axis directions, each
/// within `ray_radius` of the ray. Points on a closed surface around `c`
/// pass; a center outside, or in a concave opening, does not.
fn enclosed(points: &[Vector3<f64>], c: &Vector3<f64>, ray_radius: f64) -> bool {
    let mut hit = [false; 6];
    let r2 = ray_radius * ray_radius;
    for p in points {
        let d = p - c;
        for k in 0..3 {
            let off = d.norm_squared() - d[k] * d[k];
            if off <= r2 {
                hit[2 * k + usize::from(d[k] < 0.0)] = true;
            }
        }
        if hit.iter().all(|&h| h) {
            return true;
        }
    }
    false
}

/// Re-checks every tick of `log`, which must come from `session`'s current
/// context, and compares with the barrier-based flag `min h < -tol`.
pub fn brute_force_oracle(session: &SimSession, log: &[TickRecord], config: &OracleConfig) -> OracleReport {
    let chain = &session.world.chain;
    let stack = &session.stack;
    let clouds = &session.world.scene.clouds;
    let mut ticks = Vec::with_capacity(log.len());
    for record in log {
        let q = DVector::from_column_slice(&record.q);
        let mut classes = Vec::new();
        let Ok(frames) = chain.frames(&q) else {
            continue;
        };
        let centers: Vec<Vector3<f64>> = stack
            .control_points
            .iter()
            .map(|cp| chain.control_point_position(&frames, cp))
            .collect();
        let ee = centers[centers.len() - 1];

        let sem = session
            .envelopes
            .envelopes
            .iter()
            .any(|e| e.members.iter().any(|sq| sq.eval(&ee) < 1.0 - config.tol));
        if sem {
            classes.push(ConstraintClass::Sem);
        }

        let env = clouds.iter().any(|cloud| {
            stack.control_points.iter().zip(&centers).any(|(cp, c)| {
                let r = cp.radius - config.tol;
                cloud.points.iter().any(|p| (p - c).norm_squared() < r * r)
                    || enclosed(&cloud.points, c, config.ray_radius)
            })
        });
        if env {
            classes.push(ConstraintClass::Env);
        }

        // self rows are in squared meters; flag at the depth where the row
        // itself would cross -tol
        let self_hit = stack.self_pairs.iter().any(|pair| {
            let reach = (pair.combined_radius.powi(2) - config.tol).max(0.0).sqrt();
            (centers[pair.a] - centers[pair.b]).norm() < reach
        });
        if self_hit {
            classes.push(ConstraintClass::SelfCollision);
        }

        let lim = &chain.limits;
        if (0..q.len()).any(|j| q[j] > lim.hi[j] + config.tol || q[j] < lim.lo[j] - config.tol) {
            classes.push(ConstraintClass::Lim);
        }

        ticks.push(OracleTick {
            tick: record.tick,
            oracle: !classes.is_empty(),
            barrier: record.min_h() < -config.tol,
            classes,
        });
    }
    OracleReport { ticks }
}
