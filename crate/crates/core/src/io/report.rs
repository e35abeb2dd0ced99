use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{log::TickRecord, read_file, write_file, IoError};
use crate::barrier::ConstraintClass;

/// Violation fractions per constraint class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassFractions {
    pub sem: f64,
    pub env: f64,
    #[serde(rename = "self")]
    pub self_collision: f64,
    pub lim: f64,
}

impl ClassFractions {
    pub fn get(&self, class: ConstraintClass) -> f64 {
        match class {
            ConstraintClass::Sem => self.sem,
            ConstraintClass::Env => self.env,
            ConstraintClass::SelfCollision => self.self_collision,
            ConstraintClass::Lim => self.lim,
        }
    }

    fn set(&mut self, class: ConstraintClass, v: f64) {
        match class {
            ConstraintClass::Sem => self.sem = v,
            ConstraintClass::Env => self.env = v,
            ConstraintClass::SelfCollision => self.self_collision = v,
            ConstraintClass::Lim => self.lim = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub name: String,
    pub ticks: usize,
    pub violation_fraction: f64,
    pub by_class: ClassFractions,
    pub min_h: f64,
}

impl TrajectoryResult {
    /// Scores a tick log; a tick violates when any `h < -tol`.
    pub fn from_log(name: impl Into<String>, log: &[TickRecord], tol: f64) -> Self {
        let mut by_class = ClassFractions::default();
        for class in ConstraintClass::ALL {
            by_class.set(class, fraction(log.iter().map(|r| r.h.min_of(class) < -tol)));
        }
        Self {
            name: name.into(),
            ticks: log.len(),
            violation_fraction: violation_fraction(&log.iter().map(TickRecord::min_h).collect::<Vec<_>>(), tol),
            by_class,
            min_h: log.iter().map(TickRecord::min_h).fold(f64::INFINITY, f64::min),
        }
    }
}

fn fraction(flags: impl Iterator<Item = bool>) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for f in flags {
        total += 1;
        hit += f as usize;
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Fraction of ticks whose minimum barrier value is below `-tol`; 0 for an
/// empty series.
pub fn violation_fraction(min_h: &[f64], tol: f64) -> f64 {
    fraction(min_h.iter().map(|h| *h < -tol))
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn aggregate(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub trajectories: Vec<TrajectoryResult>,
    pub mean: f64,
    pub std: f64,
    pub by_class_mean: ClassFractions,
    /// Resolved configuration the runs were produced with.
    pub config: serde_json::Value,
}

impl RunReport {
    pub fn new(trajectories: Vec<TrajectoryResult>, config: serde_json::Value) -> Self {
        let fractions: Vec<f64> = trajectories.iter().map(|t| t.violation_fraction).collect();
        let (mean, std) = aggregate(&fractions);
        let mut by_class_mean = ClassFractions::default();
        for class in ConstraintClass::ALL {
            let v: Vec<f64> = trajectories.iter().map(|t| t.by_class.get(class)).collect();
            by_class_mean.set(class, aggregate(&v).0);
        }
        Self {
            trajectories,
            mean,
            std,
            by_class_mean,
            config,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IoError> {
        write_file(path.as_ref(), serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IoError> {
        Ok(serde_json::from_slice(&read_file(path.as_ref())?)?)
    }
}
