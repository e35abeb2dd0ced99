//! Message schema spoken over `/ws/session/{id}`.
//!
//! Every message is a JSON object with a `type` tag, a `seq` that strictly
//! increases per direction and `t_ms`, milliseconds since the session
//! started. The server sends `hello` once, then `state` every tick plus
//! `context` and `error` as they happen. Clients only send `cmd`.

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use semfilter::filter::CertStatus;
use semfilter::geometry::{EnvelopeSet, Relationship, TriMesh};
use semfilter::io::{ClassValues, TickRecord};
use semfilter::SemanticContext;

pub const WIRE_SCHEMA: &str = "semfilter/wire/1";

/// Mesh resolution used for envelope and obstacle solids.
pub const MESH_RES: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub seq: u64,
    pub t_ms: u64,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello(Hello),
    State(State),
    Context(ContextUpdate),
    Error(WireError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Driver,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInfo {
    pub object_id: String,
    pub label: String,
}

/// One member solid of a relationship envelope, triangulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeMesh {
    pub object_id: String,
    pub label: String,
    pub relationship: Relationship,
    pub member: usize,
    pub cautious: bool,
    pub mesh: TriMesh,
}

pub fn envelope_meshes(envelopes: &EnvelopeSet, context: &SemanticContext) -> Vec<EnvelopeMesh> {
    let mut out = Vec::new();
    for env in &envelopes.envelopes {
        for (member, sq) in env.members.iter().enumerate() {
            out.push(EnvelopeMesh {
                object_id: env.object_id.clone(),
                label: env.label.clone(),
                relationship: env.relationship,
                member,
                cautious: context.is_cautious(&env.label),
                mesh: sq.mesh(MESH_RES, MESH_RES),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub schema: String,
    pub session_id: String,
    pub scene_id: String,
    pub role: Role,
    pub n: usize,
    pub dt: f64,
    pub objects: Vec<ObjectInfo>,
    pub held_object: String,
    pub context: SemanticContext,
    pub envelopes: Vec<EnvelopeMesh>,
}

/// Telemetry for one tick. `q` is the configuration the barriers were
/// evaluated at; `u_cert` is what was integrated from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub tick: u64,
    pub t: f64,
    pub q: Vec<f64>,
    pub x_ee: [f64; 3],
    /// End effector orientation as `[w, x, y, z]`.
    pub r_cur: [f64; 4],
    pub u_cmd: Vec<f64>,
    pub u_cert: Vec<f64>,
    pub status: CertStatus,
    pub h: ClassValues<f64>,
    pub labels: ClassValues<String>,
    pub active_rows: Vec<String>,
    /// True when the driver's twist was replaced by zero this tick.
    pub deadman: bool,
}

impl State {
    pub fn from_record(rec: TickRecord, r_cur: &UnitQuaternion<f64>, deadman: bool) -> Self {
        let Quaternion { coords } = r_cur.quaternion();
        Self {
            tick: rec.tick,
            t: rec.t,
            q: rec.q,
            x_ee: rec.x_ee,
            r_cur: [coords.w, coords.x, coords.y, coords.z],
            u_cmd: rec.u_cmd,
            u_cert: rec.u_cert,
            status: rec.status,
            h: rec.h,
            labels: rec.labels,
            active_rows: rec.active_rows,
            deadman,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextUpdate {
    pub held_object: String,
    pub context: SemanticContext,
    pub envelopes: Vec<EnvelopeMesh>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    UnknownType,
    StaleSeq,
    ReadOnly,
    StepFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub code: ErrorCode,
    pub message: String,
}

impl WireError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

/// Driver input: an end effector twist in the base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cmd {
    pub v: [f64; 3],
    pub w: [f64; 3],
    /// True only while the operator is actively commanding.
    pub deadman: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Cmd(Cmd),
}

/// Parses one client text frame. Anything other than a well formed `cmd`
/// with finite numbers is an error.
pub fn parse_client(text: &str) -> Result<Envelope<Cmd>, WireError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| WireError::new(ErrorCode::Malformed, format!("invalid json: {e}")))?;
    match value.get("type").and_then(|t| t.as_str()) {
        None => return Err(WireError::new(ErrorCode::Malformed, "missing string field 'type'")),
        Some("cmd") => {}
        Some(other) => return Err(WireError::new(ErrorCode::UnknownType, format!("unsupported message type '{other}'"))),
    }
    let msg: Envelope<ClientMessage> =
        serde_json::from_value(value).map_err(|e| WireError::new(ErrorCode::Malformed, format!("bad cmd: {e}")))?;
    let Envelope {
        seq,
        t_ms,
        body: ClientMessage::Cmd(cmd),
    } = msg;
    if !cmd.v.iter().chain(&cmd.w).all(|x| x.is_finite()) {
        return Err(WireError::new(ErrorCode::Malformed, "twist must be finite"));
    }
    Ok(Envelope { seq, t_ms, body: cmd })
}
