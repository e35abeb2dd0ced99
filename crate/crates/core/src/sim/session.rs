use std::sync::Arc;

use nalgebra::{DVector, Matrix3, Vector6};
use serde::{Deserialize, Serialize};

use crate::barrier::{BarrierConfig, BarrierEval, BarrierStack};
use crate::filter::{certify_frames, CertStatus, CertifyConfig, RotationObjective, DEFAULT_W_ROT};
use crate::geometry::EnvelopeSet;
use crate::io::{ClassValues, CommandStream, TickRecord, TrajectoryResult};
use crate::kinematics::{diff_ik_frames, DEFAULT_IK_DAMPING};
use crate::semantic::{synthesize_context, LlmClient, SemanticContext, SynthOptions};

use super::scenes::{held_radius, NO_OBJECT};
use super::{SimError, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub dt: f64,
    pub barrier: BarrierConfig,
    pub certify: CertifyConfig,
    /// Rotation weights applied when the context constrains rotation.
    pub w_rot: [f64; 2],
    pub ik_damping: f64,
    /// When false, commands bypass the filter (`u_cert = u_cmd`).
    pub filter: bool,
    /// Ticks with any `h` below `-violation_tol` count as violations.
    pub violation_tol: f64,
    #[serde(skip)]
    pub synth: SynthOptions,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 45.0,
            barrier: BarrierConfig::default(),
            certify: CertifyConfig::default(),
            w_rot: DEFAULT_W_ROT,
            ik_damping: DEFAULT_IK_DAMPING,
            filter: true,
            violation_tol: 1e-3,
            synth: SynthOptions::default(),
        }
    }
}

/// One robot on one scene, advanced tick by tick.
#[derive(Debug, Clone)]
pub struct SimSession {
    pub world: Arc<World>,
    pub config: SessionConfig,
    pub held_object: String,
    pub context: SemanticContext,
    pub envelopes: EnvelopeSet,
    pub stack: BarrierStack,
    pub rotation: RotationObjective,
    pub q: DVector<f64>,
    pub tick: u64,
    /// Non-fatal notes, e.g. unknown held objects.
    pub warnings: Vec<String>,
}

impl SimSession {
    /// Empty-handed session at the chain's home configuration.
    pub fn new(world: Arc<World>, config: SessionConfig) -> Result<Self, SimError> {
        if !(config.dt > 0.0) {
            return Err(SimError::InvalidConfig(format!("dt must be positive, got {}", config.dt)));
        }
        let q = world.chain.home.clone();
        if !world.chain.limits.contains(&q) {
            return Err(SimError::InvalidConfig("start configuration violates joint limits".into()));
        }
        let context = SemanticContext::permissive(NO_OBJECT, &world.labels());
        let stack = BarrierStack::build(&world.chain, &world.obstacles, &EnvelopeSet::default(), &context, &config.barrier);
        let mut session = Self {
            rotation: RotationObjective::free(config.dt),
            world,
            config,
            held_object: NO_OBJECT.into(),
            context,
            envelopes: EnvelopeSet::default(),
            stack,
            q,
            tick: 0,
            warnings: Vec::new(),
        };
        session.set_context(NO_OBJECT, session.context.clone())?;
        Ok(session)
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.config.dt
    }

    pub fn current_rotation(&self) -> Result<Matrix3<f64>, SimError> {
        let frames = self.world.chain.frames(&self.q)?;
        Ok(frames.ee.rotation.to_rotation_matrix().into_inner())
    }

    /// Installs a context directly: rebuilds envelopes and barrier rows and
    /// takes the current end effector rotation as the one to keep.
    pub fn set_context(&mut self, held_object: &str, context: SemanticContext) -> Result<(), SimError> {
        context.validate(&self.world.labels())?;
        let envelopes = self.world.envelopes(&context)?;
        let barrier = BarrierConfig {
            held_radius: if held_object == NO_OBJECT { 0.0 } else { held_radius(held_object) },
            ..self.config.barrier.clone()
        };
        let stack = BarrierStack::build(&self.world.chain, &self.world.obstacles, &envelopes, &context, &barrier);
        let rotation = RotationObjective::for_pose(context.pose, self.current_rotation()?, self.config.dt, self.config.w_rot);
        self.held_object = held_object.to_string();
        self.context = context;
        self.envelopes = envelopes;
        self.stack = stack;
        self.rotation = rotation;
        Ok(())
    }

    /// Context for holding `label`, without installing it. `none` gives the
    /// permissive context without asking the client; objects the client knows
    /// nothing about also get it, together with a warning.
    pub fn context_for<C: LlmClient + ?Sized>(&self, label: &str, client: &C) -> Result<(SemanticContext, Option<String>), SimError> {
        let labels = self.world.labels();
        if label == NO_OBJECT {
            Ok((SemanticContext::permissive(NO_OBJECT, &labels), None))
        } else if !client.knows_object(label) {
            let msg = format!("no knowledge about '{label}', using the permissive context");
            tracing::warn!("{msg}");
            Ok((SemanticContext::permissive(label, &labels), Some(msg)))
        } else {
            let ctx = synthesize_context(&labels, label, &self.world.scene.manifest.description, client, &self.config.synth)?;
            Ok((ctx, None))
        }
    }

    /// [`Self::context_for`] followed by [`Self::set_context`]. On error the
    /// session is unchanged.
    pub fn set_held_object<C: LlmClient + ?Sized>(&mut self, label: &str, client: &C) -> Result<&SemanticContext, SimError> {
        let (context, warning) = self.context_for(label, client)?;
        self.set_context(label, context)?;
        self.warnings.extend(warning);
        Ok(&self.context)
    }

    pub fn barriers(&self) -> Result<BarrierEval, SimError> {
        Ok(self.stack.eval(&self.world.chain, &self.q)?)
    }

    /// Maps an end effector twist to joint velocities, certifies them and
    /// integrates one tick.
    pub fn step(&mut self, twist: &Vector6<f64>) -> Result<TickRecord, SimError> {
        let frames = self.world.chain.frames(&self.q)?;
        let u_cmd = diff_ik_frames(&frames, twist, self.config.ik_damping);
        self.advance(frames, u_cmd)
    }

    /// Certifies a joint velocity command directly (replayed policies).
    pub fn step_joint(&mut self, u_cmd: &DVector<f64>) -> Result<TickRecord, SimError> {
        let frames = self.world.chain.frames(&self.q)?;
        if u_cmd.len() != self.q.len() {
            return Err(SimError::InvalidConfig("joint command has the wrong length".into()));
        }
        self.advance(frames, u_cmd.clone())
    }

    fn advance(&mut self, frames: crate::kinematics::Frames, u_cmd: DVector<f64>) -> Result<TickRecord, SimError> {
        let chain = &self.world.chain;
        let eval = self.stack.eval_frames(chain, &frames, &self.q);
        let (u_cert, status, active, solve_time, eval) = if self.config.filter {
            let r = certify_frames(&frames, &u_cmd, eval, &self.rotation, &chain.limits.vel, &self.config.certify)?;
            (r.u_cert, r.status, r.active_rows, r.solve_time, r.barriers)
        } else {
            (u_cmd.clone(), CertStatus::Optimal, Vec::new(), 0.0, eval)
        };
        let hdot = &eval.a * &u_cert;
        let x = frames.ee.translation.vector;
        let record = TickRecord {
            tick: self.tick,
            t: self.time(),
            q: self.q.iter().copied().collect(),
            x_ee: [x.x, x.y, x.z],
            u_cmd: u_cmd.iter().copied().collect(),
            u_cert: u_cert.iter().copied().collect(),
            status,
            filtered: self.config.filter,
            h: ClassValues::split(eval.h.iter().copied(), &eval),
            alpha: ClassValues::split(eval.alpha_h.iter().copied(), &eval),
            hdot: ClassValues::split(hdot.iter().copied(), &eval),
            labels: ClassValues::split(eval.labels.iter().map(|l| l.to_string()), &eval),
            active_rows: active.iter().map(|l| l.to_string()).collect(),
            solve_time,
        };
        self.q += u_cert * self.config.dt;
        self.tick += 1;
        Ok(record)
    }

    /// Replays a twist stream (resampled to the session rate if needed).
    pub fn run_stream(&mut self, stream: &CommandStream, name: &str) -> Result<(TrajectoryResult, Vec<TickRecord>), SimError> {
        let rate = 1.0 / self.config.dt;
        let stream = if (stream.rate_hz - rate).abs() > 1e-9 * rate && !stream.is_empty() {
            stream.resample(rate)?
        } else {
            stream.clone()
        };
        let mut log = Vec::with_capacity(stream.len());
        for frame in &stream.frames {
            log.push(self.step(&frame.twist())?);
        }
        Ok((TrajectoryResult::from_log(name, &log, self.config.violation_tol), log))
    }
}
