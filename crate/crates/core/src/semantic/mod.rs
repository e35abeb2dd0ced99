//! Semantic context synthesis: which spatial relationships, caution flags and
//! pose constraints apply to the object the robot is carrying.

mod client;
mod eval;
mod prompt;
mod synth;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use crate::geometry::Relationship;
pub use client::{ClientError, FixtureClient, FixtureRule, FixtureTable, HttpClient, LlmClient, LlmRequest};
pub use eval::{
    build_single_prompt, evaluate, parse_single_response, single_prompt_context, GroundTruthEntry, GroundTruthSet,
    Score,
};
pub use prompt::{build_prompt, parse_answer, IN_CONTEXT_EXAMPLES};
pub use synth::{majority, synthesize_context, SynthOptions};

#[derive(Debug, thiserror::Error)]
pub enum SemanticError {
    #[error("LLM client unavailable after {attempts} attempts: {message}")]
    ClientUnavailable { attempts: usize, message: String },
    #[error("every vote for '{0}' was unparseable")]
    MalformedResponse(String),
    #[error("vote count must be odd and at least 1, got {0}")]
    InvalidVotes(usize),
    #[error("unknown question kind '{0}'")]
    UnknownQuestion(String),
    #[error("fixture table: {0}")]
    Fixture(String),
    #[error("evaluation keys do not match: {0}")]
    KeyMismatch(String),
    #[error("invalid context: {0}")]
    InvalidContext(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Whether the held object must keep its pick-up orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PoseConstraint {
    ConstrainedRotation,
    #[default]
    FreeRotation,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpatialConstraint {
    pub object: String,
    pub relationship: Relationship,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CautionFlag {
    pub object: String,
    pub caution: bool,
}

/// Constraints that apply while `manipulated_object` is held.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticContext {
    pub manipulated_object: String,
    pub spatial: Vec<SpatialConstraint>,
    /// One entry per scene object.
    pub behavioral: Vec<CautionFlag>,
    pub pose: PoseConstraint,
}

impl SemanticContext {
    /// Context with no spatial constraints, no caution and free rotation.
    pub fn permissive(manipulated_object: impl Into<String>, scene_labels: &[String]) -> Self {
        Self {
            manipulated_object: manipulated_object.into(),
            spatial: Vec::new(),
            behavioral: scene_labels
                .iter()
                .map(|l| CautionFlag {
                    object: l.clone(),
                    caution: false,
                })
                .collect(),
            pose: PoseConstraint::FreeRotation,
        }
    }

    pub fn is_cautious(&self, object: &str) -> bool {
        self.behavioral.iter().any(|b| b.object == object && b.caution)
    }

    pub fn relationships_for<'a>(&'a self, object: &'a str) -> impl Iterator<Item = Relationship> + 'a {
        self.spatial
            .iter()
            .filter(move |s| s.object == object)
            .map(|s| s.relationship)
    }

    /// Checks that labels refer to `scene_labels` and that caution has exactly
    /// one entry per scene object.
    pub fn validate(&self, scene_labels: &[String]) -> Result<(), SemanticError> {
        let known: BTreeSet<&str> = scene_labels.iter().map(String::as_str).collect();
        if let Some(s) = self.spatial.iter().find(|s| !known.contains(s.object.as_str())) {
            return Err(SemanticError::InvalidContext(format!(
                "spatial constraint on unknown object '{}'",
                s.object
            )));
        }
        let mut seen = BTreeSet::new();
        for b in &self.behavioral {
            if !known.contains(b.object.as_str()) || !seen.insert(b.object.as_str()) {
                return Err(SemanticError::InvalidContext(format!(
                    "caution entry for '{}' is unknown or repeated",
                    b.object
                )));
            }
        }
        if seen.len() != known.len() {
            return Err(SemanticError::InvalidContext(
                "caution entries do not cover every scene object".into(),
            ));
        }
        Ok(())
    }
}

/// What a single prompt asks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "relationship", rename_all = "snake_case")]
pub enum QuestionKind {
    Relationship(Relationship),
    Caution,
    Rotation,
    /// Every constraint in one prompt; used only by the evaluation harness.
    AllAtOnce,
}

impl QuestionKind {
    /// Key used by fixture tables: the relationship tag, `caution` or `rotation`.
    pub fn key(&self) -> &'static str {
        match self {
            QuestionKind::Relationship(r) => r.as_str(),
            QuestionKind::Caution => "caution",
            QuestionKind::Rotation => "rotation",
            QuestionKind::AllAtOnce => "all_at_once",
        }
    }

    /// Answer text that means "no constraint".
    pub fn permissive_answer(&self) -> &'static str {
        match self {
            QuestionKind::Relationship(_) => "SAFE",
            QuestionKind::Caution => "NO CAUTION",
            QuestionKind::Rotation => "FREE",
            QuestionKind::AllAtOnce => "ROTATION: FREE",
        }
    }

    pub fn restrictive_answer(&self) -> &'static str {
        match self {
            QuestionKind::Relationship(_) => "UNSAFE",
            QuestionKind::Caution => "CAUTION",
            QuestionKind::Rotation => "CONSTRAINED",
            QuestionKind::AllAtOnce => "ROTATION: CONSTRAINED",
        }
    }
}

impl fmt::Display for QuestionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for QuestionKind {
    type Err = SemanticError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "caution" => Ok(QuestionKind::Caution),
            "rotation" => Ok(QuestionKind::Rotation),
            "all_at_once" => Ok(QuestionKind::AllAtOnce),
            other => other
                .parse::<Relationship>()
                .map(QuestionKind::Relationship)
                .map_err(|_| SemanticError::UnknownQuestion(s.to_string())),
        }
    }
}

/// One question about one (held object, scene object) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub scene_description: String,
    pub manipulated_object: String,
    /// For rotation questions this is the held object itself.
    pub target_object: String,
    pub question_kind: QuestionKind,
    pub votes: usize,
}

impl QuerySpec {
    pub fn validate(&self) -> Result<(), SemanticError> {
        if self.votes == 0 || self.votes % 2 == 0 {
            return Err(SemanticError::InvalidVotes(self.votes));
        }
        Ok(())
    }
}
