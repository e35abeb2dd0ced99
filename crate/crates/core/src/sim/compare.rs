//! Paired runs of one stream under two variants of the same context:
//! caution on or off, rotation free or constrained.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::barrier::ConstraintClass;
use crate::io::{CommandStream, TickRecord};
use crate::semantic::PoseConstraint;

use super::{SimError, SimSession};

/// Per-tick series of the semantic row. `hdot` is the finite difference
/// `(h[k+1] - h[k]) / dt` along the simulated trajectory, so it has one
/// entry fewer than `h`; `hdot_model` is the linearized rate `A u_cert`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CautionSeries {
    pub caution_weight: f64,
    pub label: String,
    pub h: Vec<f64>,
    pub hdot: Vec<f64>,
    pub hdot_model: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl CautionSeries {
    fn from_log(caution_weight: f64, log: &[TickRecord], dt: f64) -> Self {
        let h: Vec<f64> = log.iter().map(|t| t.h.sem[0]).collect();
        Self {
            caution_weight,
            label: log.first().map(|t| t.labels.sem[0].clone()).unwrap_or_default(),
            hdot: h.windows(2).map(|w| (w[1] - w[0]) / dt).collect(),
            hdot_model: log.iter().map(|t| t.hdot.sem[0]).collect(),
            alpha: log.iter().map(|t| t.alpha.sem[0]).collect(),
            h,
        }
    }

    /// First tick with `h <= level`.
    pub fn first_reaching(&self, level: f64) -> Option<usize> {
        self.h.iter().position(|&h| h <= level)
    }

    /// Largest `-hdot - alpha(h)` over the run (CBF condition slack; at
    /// most 0 when the condition holds along the trajectory).
    pub fn worst_condition(&self) -> f64 {
        self.hdot
            .iter()
            .zip(&self.alpha)
            .map(|(hd, a)| -hd - a)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CautionComparison {
    pub nominal: CautionSeries,
    pub cautious: CautionSeries,
}

/// Runs `stream` from `template`'s state twice: once with the semantic
/// row's object flagged and the caution weight at 1, once at
/// `caution_weight`. The template's context must give exactly one semantic
/// row.
pub fn caution_comparison(template: &SimSession, stream: &CommandStream, caution_weight: f64) -> Result<CautionComparison, SimError> {
    let rows = template.stack.sem.len();
    if rows != 1 {
        return Err(SimError::InvalidConfig(format!("caution comparison needs exactly one semantic row, got {rows}")));
    }
    let object_id = &template.stack.sem[0].object_id;
    let label = template
        .world
        .scene
        .clouds
        .iter()
        .find(|c| &c.object_id == object_id)
        .map(|c| c.label.clone())
        .ok_or_else(|| SimError::InvalidConfig(format!("no object '{object_id}'")))?;
    let mut context = template.context.clone();
    for flag in context.behavioral.iter_mut().filter(|f| f.object == label) {
        flag.caution = true;
    }

    let run = |weight: f64| -> Result<CautionSeries, SimError> {
        let mut session = template.clone();
        session.config.barrier.caution_weight = weight;
        session.set_context(&template.held_object.clone(), context.clone())?;
        let (_, log) = session.run_stream(stream, "caution")?;
        debug_assert!(log.iter().all(|t| t.labels.get(ConstraintClass::Sem).len() == 1));
        Ok(CautionSeries::from_log(weight, &log, session.dt()))
    };
    Ok(CautionComparison {
        nominal: run(1.0)?,
        cautious: run(caution_weight)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationComparison {
    /// `|J_rot u_cert|` per tick with rotation free.
    pub free: Vec<f64>,
    /// Same with rotation constrained.
    pub constrained: Vec<f64>,
}

impl RotationComparison {
    pub fn median_free(&self) -> f64 {
        median(&self.free)
    }

    pub fn median_constrained(&self) -> f64 {
        median(&self.constrained)
    }

    /// `1 - median_constrained / median_free`.
    pub fn reduction(&self) -> f64 {
        1.0 - self.median_constrained() / self.median_free()
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Runs `stream` from `template`'s state with the template's context under
/// free and then constrained rotation, recording the end effector angular
/// speed of the certified command.
pub fn rotation_comparison(template: &SimSession, stream: &CommandStream) -> Result<RotationComparison, SimError> {
    let run = |pose: PoseConstraint| -> Result<Vec<f64>, SimError> {
        let mut session = template.clone();
        let mut context = template.context.clone();
        context.pose = pose;
        session.set_context(&template.held_object.clone(), context)?;
        let (_, log) = session.run_stream(stream, "rotation")?;
        let chain = &session.world.chain;
        log.iter()
            .map(|t| {
                let frames = chain.frames(&DVector::from_column_slice(&t.q))?;
                Ok((frames.rotation_jacobian() * DVector::from_column_slice(&t.u_cert)).norm())
            })
            .collect()
    };
    Ok(RotationComparison {
        free: run(PoseConstraint::FreeRotation)?,
        constrained: run(PoseConstraint::ConstrainedRotation)?,
    })
}
