//! Barrier functions `h(q) >= 0` and their time derivatives `dh/dt = A u`.
//!
//! Rows come in four classes, always stacked in this order: semantic
//! envelopes at the end effector, environment solids against every control
//! sphere, self-collision sphere pairs, and joint limits.

use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix3xX, RowDVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{EnvelopeSet, Relationship, Superquadric};
use crate::kinematics::{ControlPoint, Frames, KinematicChain, KinematicsError};
use crate::semantic::SemanticContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKFamily {
    Linear,
    Quadratic,
}

/// Extended class-K function `alpha(h)`, scaled by a caution weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassK {
    pub family: ClassKFamily,
    pub gain: f64,
    /// Caution weight in (0, 1]; 1 means no extra caution.
    pub weight: f64,
}

impl ClassK {
    pub fn linear(gain: f64) -> Self {
        Self {
            family: ClassKFamily::Linear,
            gain,
            weight: 1.0,
        }
    }

    pub fn quadratic(gain: f64) -> Self {
        Self {
            family: ClassKFamily::Quadratic,
            gain,
            weight: 1.0,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn is_valid(&self) -> bool {
        self.gain > 0.0 && self.weight > 0.0 && self.weight <= 1.0
    }

    /// `w*g*h` or `w*g*sign(h)*h^2`; odd in `h`.
    pub fn eval(&self, h: f64) -> f64 {
        let base = match self.family {
            ClassKFamily::Linear => h,
            ClassKFamily::Quadratic => h.signum() * h * h,
        };
        if h == 0.0 {
            return 0.0;
        }
        self.weight * self.gain * base
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintClass {
    Sem,
    Env,
    #[serde(rename = "self")]
    SelfCollision,
    Lim,
}

impl ConstraintClass {
    pub const ALL: [ConstraintClass; 4] = [
        ConstraintClass::Sem,
        ConstraintClass::Env,
        ConstraintClass::SelfCollision,
        ConstraintClass::Lim,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ConstraintClass::Sem => "sem",
            ConstraintClass::Env => "env",
            ConstraintClass::SelfCollision => "self",
            ConstraintClass::Lim => "lim",
        }
    }

    /// Geometric rows are never relaxed.
    pub fn is_geometric(&self) -> bool {
        !matches!(self, ConstraintClass::Sem)
    }
}

/// Where a barrier row came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowLabel {
    pub class: ConstraintClass,
    /// Scene object id for semantic and environment rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    /// Relationship tag, control point(s), or joint bound.
    pub detail: String,
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.object {
            Some(o) => write!(f, "{}:{}/{}", self.class.as_str(), o, self.detail),
            None => write!(f, "{}:{}", self.class.as_str(), self.detail),
        }
    }
}

/// Stacked barrier values and derivative rows at one configuration.
#[derive(Debug, Clone)]
pub struct BarrierEval {
    pub h: DVector<f64>,
    /// `dh/dt = a * u`, one row per barrier.
    pub a: DMatrix<f64>,
    pub alpha_h: DVector<f64>,
    pub labels: Vec<RowLabel>,
}

impl BarrierEval {
    pub fn rows(&self) -> usize {
        self.h.len()
    }

    pub fn class_of(&self, row: usize) -> ConstraintClass {
        self.labels[row].class
    }

    /// Minimum `h` of a class, `+inf` if it has no rows.
    pub fn min_h(&self, class: ConstraintClass) -> f64 {
        self.labels
            .iter()
            .zip(self.h.iter())
            .filter(|(l, _)| l.class == class)
            .map(|(_, h)| *h)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_all(&self) -> f64 {
        self.h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn values_of(&self, class: ConstraintClass) -> Vec<f64> {
        self.labels
            .iter()
            .zip(self.h.iter())
            .filter(|(l, _)| l.class == class)
            .map(|(_, h)| *h)
            .collect()
    }
}

/// How a union of superquadrics becomes one barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum UnionMode {
    /// One row `g_i - 1` per member. Equivalent to the hard min being
    /// nonnegative, without the argmin switching between ticks.
    PerMember,
    /// `min_i (g_i - 1)` with the gradient of the minimizing member.
    HardMin,
    /// `-(1/beta) log sum exp(-beta (g_i - 1))`, never above the hard min.
    SmoothMin { beta: f64 },
}

/// How a control sphere's radius enters an environment barrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvInflation {
    /// Evaluate a copy of the solid grown by the radius on every semi-axis.
    /// Contains the Minkowski sum of solid and sphere for exponents <= 1.
    Grown,
    /// Subtract `radius / cbrt(a_x a_y a_z)` from `g - 1`. Cheap but can
    /// under-inflate along the thin axes of flat solids.
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierConfig {
    pub semantic_k: ClassK,
    pub env_k: ClassK,
    pub self_k: ClassK,
    pub lim_k: ClassK,
    /// Weight applied to semantic and environment rows of cautious objects.
    pub caution_weight: f64,
    pub union_mode: UnionMode,
    pub env_inflation: EnvInflation,
    /// Extra clearance subtracted from environment barriers (normalized).
    pub env_margin: f64,
    /// Added to the end effector sphere for the held object (m).
    pub held_radius: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            semantic_k: ClassK::quadratic(1.0),
            env_k: ClassK::linear(3.0),
            self_k: ClassK::linear(3.0),
            lim_k: ClassK::linear(3.0),
            caution_weight: 0.25,
            union_mode: UnionMode::PerMember,
            env_inflation: EnvInflation::Grown,
            env_margin: 0.0,
            held_radius: 0.0,
        }
    }
}

/// Fitted collision geometry of one scene object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSolids {
    pub object_id: String,
    pub label: String,
    pub solids: Vec<Superquadric>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticRow {
    pub object_id: String,
    pub relationship: Relationship,
    pub members: Vec<Superquadric>,
    /// Index of the single envelope member this row stands for, when the
    /// union is split into per-member rows.
    pub member: Option<usize>,
    pub class_k: ClassK,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvRow {
    /// Index into [`BarrierStack::control_points`].
    pub point: usize,
    pub object_id: String,
    pub solid: Superquadric,
    pub class_k: ClassK,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfPair {
    pub a: usize,
    pub b: usize,
    pub combined_radius: f64,
    pub class_k: ClassK,
}

/// Every barrier of a session, ready to evaluate at any `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierStack {
    pub sem: Vec<SemanticRow>,
    pub env: Vec<EnvRow>,
    pub self_pairs: Vec<SelfPair>,
    pub lim_k: ClassK,
    /// Body spheres followed by the end effector sphere (always last).
    pub control_points: Vec<ControlPoint>,
    pub union_mode: UnionMode,
    pub env_inflation: EnvInflation,
    pub env_margin: f64,
}

impl BarrierStack {
    /// Assembles rows for `context`. Semantic rows follow `envelopes` order;
    /// environment rows follow `obstacles` order, then solid, then control
    /// point.
    pub fn build(
        chain: &KinematicChain,
        obstacles: &[ObstacleSolids],
        envelopes: &EnvelopeSet,
        context: &SemanticContext,
        config: &BarrierConfig,
    ) -> Self {
        let mut control_points = chain.control_points.clone();
        control_points.push(chain.ee_control_point(config.held_radius));
        let weighted = |k: ClassK, label: &str| {
            if context.is_cautious(label) {
                k.with_weight(config.caution_weight)
            } else {
                k
            }
        };

        let mut sem = Vec::new();
        for e in envelopes.iter() {
            let row = |members: Vec<Superquadric>, member| SemanticRow {
                object_id: e.object_id.clone(),
                relationship: e.relationship,
                members,
                member,
                class_k: weighted(config.semantic_k, &e.label),
            };
            match config.union_mode {
                UnionMode::PerMember if e.members.len() > 1 => {
                    sem.extend(e.members.iter().enumerate().map(|(i, m)| row(vec![*m], Some(i))));
                }
                _ => sem.push(row(e.members.clone(), None)),
            }
        }

        let mut env = Vec::new();
        for obstacle in obstacles {
            for solid in &obstacle.solids {
                for point in 0..control_points.len() {
                    env.push(EnvRow {
                        point,
                        object_id: obstacle.object_id.clone(),
                        solid: *solid,
                        class_k: weighted(config.env_k, &obstacle.label),
                    });
                }
            }
        }

        let mut self_pairs = Vec::new();
        for a in 0..control_points.len() {
            for b in a + 1..control_points.len() {
                let (la, lb) = (control_points[a].link, control_points[b].link);
                if la.abs_diff(lb) <= 1 {
                    continue;
                }
                if chain.self_exclude.iter().any(|&(x, y)| (x, y) == (a, b) || (y, x) == (a, b)) {
                    continue;
                }
                self_pairs.push(SelfPair {
                    a,
                    b,
                    combined_radius: control_points[a].radius + control_points[b].radius,
                    class_k: config.self_k,
                });
            }
        }

        Self {
            sem,
            env,
            self_pairs,
            lim_k: config.lim_k,
            control_points,
            union_mode: config.union_mode,
            env_inflation: config.env_inflation,
            env_margin: config.env_margin,
        }
    }

    pub fn point_name(&self, i: usize) -> String {
        if i + 1 == self.control_points.len() {
            "ee".into()
        } else {
            format!("cp{}", i + 1)
        }
    }

    pub fn row_count(&self, n: usize) -> usize {
        self.sem.len() + self.env.len() + self.self_pairs.len() + 2 * n
    }

    /// Evaluates every row at `q`.
    pub fn eval(&self, chain: &KinematicChain, q: &DVector<f64>) -> Result<BarrierEval, KinematicsError> {
        let frames = chain.frames(q)?;
        Ok(self.eval_frames(chain, &frames, q))
    }

    pub fn eval_frames(&self, chain: &KinematicChain, frames: &Frames, q: &DVector<f64>) -> BarrierEval {
        let n = chain.n();
        let m = self.row_count(n);
        let mut h = DVector::zeros(m);
        let mut a = DMatrix::zeros(m, n);
        let mut alpha = DVector::zeros(m);
        let mut labels = Vec::with_capacity(m);

        let points: Vec<Vector3<f64>> = self
            .control_points
            .iter()
            .map(|cp| chain.control_point_position(frames, cp))
            .collect();
        let jacobians: Vec<Matrix3xX<f64>> = self
            .control_points
            .iter()
            .zip(&points)
            .map(|(cp, p)| frames.point_jacobian(cp.link, p))
            .collect();
        let ee = self.control_points.len() - 1;

        let mut row = 0;
        let mut put = |value: f64, grad: RowDVector<f64>, k: &ClassK, label: RowLabel| {
            h[row] = value;
            a.set_row(row, &grad);
            alpha[row] = k.eval(value);
            labels.push(label);
            row += 1;
        };

        for s in &self.sem {
            let (value, dx) = union_barrier(&s.members, &points[ee], self.union_mode);
            put(
                value,
                dx.transpose() * &jacobians[ee],
                &s.class_k,
                RowLabel {
                    class: ConstraintClass::Sem,
                    object: Some(s.object_id.clone()),
                    detail: match s.member {
                        Some(i) => format!("{}#{}", s.relationship.as_str(), i + 1),
                        None => s.relationship.as_str().to_string(),
                    },
                },
            );
        }

        for e in &self.env {
            let p = &points[e.point];
            let (value, dx) = env_barrier(&e.solid, p, self.control_points[e.point].radius, self.env_inflation, self.env_margin);
            put(
                value,
                dx.transpose() * &jacobians[e.point],
                &e.class_k,
                RowLabel {
                    class: ConstraintClass::Env,
                    object: Some(e.object_id.clone()),
                    detail: self.point_name(e.point),
                },
            );
        }

        for sp in &self.self_pairs {
            let d = points[sp.a] - points[sp.b];
            let value = d.norm_squared() - sp.combined_radius * sp.combined_radius;
            let grad = 2.0 * d.transpose() * (&jacobians[sp.a] - &jacobians[sp.b]);
            put(
                value,
                grad,
                &sp.class_k,
                RowLabel {
                    class: ConstraintClass::SelfCollision,
                    object: None,
                    detail: format!("{}~{}", self.point_name(sp.a), self.point_name(sp.b)),
                },
            );
        }

        for j in 0..n {
            let mut e = RowDVector::zeros(n);
            e[j] = -1.0;
            put(
                chain.limits.hi[j] - q[j],
                e.clone(),
                &self.lim_k,
                RowLabel {
                    class: ConstraintClass::Lim,
                    object: None,
                    detail: format!("q{}_hi", j + 1),
                },
            );
            e[j] = 1.0;
            put(
                q[j] - chain.limits.lo[j],
                e,
                &self.lim_k,
                RowLabel {
                    class: ConstraintClass::Lim,
                    object: None,
                    detail: format!("q{}_lo", j + 1),
                },
            );
        }
        debug_assert_eq!(row, m);
        BarrierEval {
            h,
            a,
            alpha_h: alpha,
            labels,
        }
    }

    /// Same stack with every semantic and environment row of `object_id`
    /// removed.
    pub fn without_object(&self, object_id: &str) -> Self {
        let mut out = self.clone();
        out.sem.retain(|s| s.object_id != object_id);
        out.env.retain(|e| e.object_id != object_id);
        out
    }
}

/// Environment barrier of one sphere of `radius` centred at `p` and its
/// gradient in `p`.
pub fn env_barrier(
    solid: &Superquadric,
    p: &Vector3<f64>,
    radius: f64,
    inflation: EnvInflation,
    margin: f64,
) -> (f64, Vector3<f64>) {
    match inflation {
        EnvInflation::Grown => {
            let inflated = solid.grown(radius);
            (inflated.eval(p) - 1.0 - margin, inflated.gradient(p))
        }
        EnvInflation::Normalized => {
            let mean = (solid.scale.x * solid.scale.y * solid.scale.z).cbrt();
            (solid.eval(p) - 1.0 - radius / mean - margin, solid.gradient(p))
        }
    }
}

/// Barrier value of a union and its gradient in the end effector position.
pub fn union_barrier(members: &[Superquadric], x: &Vector3<f64>, mode: UnionMode) -> (f64, Vector3<f64>) {
    let values: Vec<f64> = members.iter().map(|sq| sq.eval(x) - 1.0).collect();
    let (imin, hmin) = values
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, f64::INFINITY));
    if members.is_empty() {
        return (f64::INFINITY, Vector3::zeros());
    }
    match mode {
        UnionMode::HardMin | UnionMode::PerMember => (hmin, members[imin].gradient(x)),
        UnionMode::SmoothMin { beta } => {
            let weights: Vec<f64> = values.iter().map(|v| (-beta * (v - hmin)).exp()).collect();
            let total: f64 = weights.iter().sum();
            let value = hmin - total.ln() / beta;
            let mut grad = Vector3::zeros();
            for (w, sq) in weights.iter().zip(members) {
                grad += sq.gradient(x) * (w / total);
            }
            (value, grad)
        }
    }
}
