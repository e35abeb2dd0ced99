//! Precision/recall of synthesized contexts against hand-labeled ones, and
//! the single-prompt baseline used for comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::client::{LlmClient, LlmRequest};
use super::prompt::build_prompt;
use super::{
    PoseConstraint, QuerySpec, QuestionKind, Relationship, SemanticContext, SemanticError, SpatialConstraint,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    pub scene_id: String,
    pub manipulated_object: String,
    pub expected: SemanticContext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSet {
    #[serde(default = "truth_schema")]
    pub schema: String,
    pub entries: Vec<GroundTruthEntry>,
}

fn truth_schema() -> String {
    "semfilter/groundtruth/1".into()
}

impl GroundTruthSet {
    pub fn new(entries: Vec<GroundTruthEntry>) -> Result<Self, SemanticError> {
        let set = Self {
            schema: truth_schema(),
            entries,
        };
        set.validate()?;
        Ok(set)
    }

    /// Each (scene, held object) key appears once.
    pub fn validate(&self) -> Result<(), SemanticError> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert((e.scene_id.as_str(), e.manipulated_object.as_str())) {
                return Err(SemanticError::KeyMismatch(format!(
                    "duplicate entry {} / {}",
                    e.scene_id, e.manipulated_object
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SemanticError> {
        let set: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        set.validate()?;
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Item {
    Spatial(String, Relationship),
    Caution(String),
    Constrained,
}

fn items(ctx: &SemanticContext) -> BTreeSet<Item> {
    let mut out: BTreeSet<Item> = ctx
        .spatial
        .iter()
        .map(|s| Item::Spatial(s.object.clone(), s.relationship))
        .collect();
    out.extend(ctx.behavioral.iter().filter(|b| b.caution).map(|b| Item::Caution(b.object.clone())));
    if ctx.pose == PoseConstraint::ConstrainedRotation {
        out.insert(Item::Constrained);
    }
    out
}

/// Constraint-level precision and recall. `predicted` pairs a scene id with
/// a context; keys must match the truth set exactly. Spatial pairs, caution
/// flags and a constrained pose each count as one positive.
pub fn evaluate(predicted: &[(String, SemanticContext)], truth: &GroundTruthSet) -> Result<Score, SemanticError> {
    let expected: BTreeMap<(&str, &str), &SemanticContext> = truth
        .entries
        .iter()
        .map(|e| ((e.scene_id.as_str(), e.manipulated_object.as_str()), &e.expected))
        .collect();
    let mut seen = BTreeSet::new();
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    for (scene, ctx) in predicted {
        let key = (scene.as_str(), ctx.manipulated_object.as_str());
        let want = expected
            .get(&key)
            .ok_or_else(|| SemanticError::KeyMismatch(format!("{scene} / {} not in truth", ctx.manipulated_object)))?;
        if !seen.insert(key) {
            return Err(SemanticError::KeyMismatch(format!(
                "{scene} / {} predicted twice",
                ctx.manipulated_object
            )));
        }
        let got = items(ctx);
        let want = items(want);
        tp += got.intersection(&want).count();
        fp += got.difference(&want).count();
        fneg += want.difference(&got).count();
    }
    if seen.len() != expected.len() {
        return Err(SemanticError::KeyMismatch(format!(
            "{} truth entries, {} predicted",
            expected.len(),
            seen.len()
        )));
    }
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Ok(Score {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fneg),
        true_positives: tp,
        false_positives: fp,
        false_negatives: fneg,
    })
}

pub(super) fn single_prompt_request(held: &str) -> String {
    let tags: Vec<&str> = Relationship::ALL.iter().map(|r| r.as_str()).collect();
    format!(
        "Objects: listed in the scene above.\n\
         Question: List every constraint for moving the {held}. Write one line per constraint:\n\
         UNSAFE: <object> <relationship>, with relationship one of {}\n\
         CAUTION: <object>\n\
         and finish with ROTATION: CONSTRAINED or ROTATION: FREE.\n\
         Answer:",
        tags.join(", ")
    )
}

/// The prompt for the single-prompt baseline.
pub fn build_single_prompt(scene_labels: &[String], held_object: &str, scene_description: &str) -> String {
    build_prompt(&QuerySpec {
        scene_description: format!("{} Objects: {}.", scene_description.trim(), scene_labels.join(", ")),
        manipulated_object: held_object.to_string(),
        target_object: String::new(),
        question_kind: QuestionKind::AllAtOnce,
        votes: 1,
    })
}

/// Parses a single-prompt reply. Lines naming objects outside the scene or
/// tags outside the catalog are ignored.
pub fn parse_single_response(text: &str, scene_labels: &[String], held_object: &str) -> SemanticContext {
    let mut ctx = SemanticContext::permissive(held_object, scene_labels);
    let mut spatial = BTreeSet::new();
    for line in text.lines() {
        let Some((head, rest)) = line.split_once(':') else {
            continue;
        };
        let rest = rest.trim().to_lowercase();
        match head.trim().to_ascii_uppercase().as_str() {
            "UNSAFE" => {
                for label in scene_labels {
                    let Some(tail) = rest.strip_prefix(&label.to_lowercase()) else {
                        continue;
                    };
                    if let Ok(rel) = tail.trim().parse::<Relationship>() {
                        spatial.insert(SpatialConstraint {
                            object: label.clone(),
                            relationship: rel,
                        });
                    }
                }
            }
            "CAUTION" => {
                for flag in ctx.behavioral.iter_mut() {
                    if flag.object.to_lowercase() == rest {
                        flag.caution = true;
                    }
                }
            }
            "ROTATION" => {
                if rest.contains("constrained") {
                    ctx.pose = PoseConstraint::ConstrainedRotation;
                }
            }
            _ => {}
        }
    }
    ctx.spatial = spatial.into_iter().collect();
    ctx
}

/// Single-prompt baseline: one request for the whole context.
pub fn single_prompt_context<C: LlmClient + ?Sized>(
    scene_labels: &[String],
    held_object: &str,
    scene_description: &str,
    client: &C,
) -> Result<SemanticContext, SemanticError> {
    let request = LlmRequest {
        prompt: build_single_prompt(scene_labels, held_object, scene_description),
        spec: QuerySpec {
            scene_description: scene_description.to_string(),
            manipulated_object: held_object.to_string(),
            target_object: String::new(),
            question_kind: QuestionKind::AllAtOnce,
            votes: 1,
        },
        vote: 0,
    };
    let text = client
        .complete(&request)
        .map_err(|e| SemanticError::ClientUnavailable {
            attempts: 1,
            message: e.to_string(),
        })?;
    Ok(parse_single_response(&text, scene_labels, held_object))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantic::{CautionFlag, FixtureClient};

    fn labels() -> Vec<String> {
        vec!["laptop".into(), "books".into()]
    }

    fn truth_ctx() -> SemanticContext {
        let mut ctx = SemanticContext::permissive("cup of water", &labels());
        ctx.spatial = vec![
            SpatialConstraint {
                object: "laptop".into(),
                relationship: Relationship::Above,
            },
            SpatialConstraint {
                object: "books".into(),
                relationship: Relationship::Above,
            },
        ];
        ctx.behavioral[0] = CautionFlag {
            object: "laptop".into(),
            caution: true,
        };
        ctx.pose = PoseConstraint::ConstrainedRotation;
        ctx
    }

    fn truth() -> GroundTruthSet {
        GroundTruthSet::new(vec![GroundTruthEntry {
            scene_id: "desk".into(),
            manipulated_object: "cup of water".into(),
            expected: truth_ctx(),
        }])
        .unwrap()
    }

    #[test]
    fn exact_prediction_scores_one() {
        let s = evaluate(&[("desk".into(), truth_ctx())], &truth()).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 1.0));
    }

    #[test]
    fn one_extra_of_four() {
        let mut p = truth_ctx();
        p.spatial.push(SpatialConstraint {
            object: "laptop".into(),
            relationship: Relationship::Near,
        });
        let s = evaluate(&[("desk".into(), p)], &truth()).unwrap();
        assert!((s.precision - 0.8).abs() < 1e-12);
        assert_eq!(s.recall, 1.0);
    }

    #[test]
    fn empty_prediction_edge_case() {
        let empty = SemanticContext::permissive("cup of water", &labels());
        let set = GroundTruthSet::new(vec![GroundTruthEntry {
            scene_id: "desk".into(),
            manipulated_object: "cup of water".into(),
            expected: empty.clone(),
        }])
        .unwrap();
        let s = evaluate(&[("desk".into(), empty)], &set).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 1.0));
    }

    #[test]
    fn key_mismatch() {
        assert!(evaluate(&[("kitchen".into(), truth_ctx())], &truth()).is_err());
        assert!(evaluate(&[], &truth()).is_err());
    }

    #[test]
    fn single_prompt_round_trip() {
        let reply = "UNSAFE: laptop above\nUNSAFE: books above\nUNSAFE: sofa above\nCAUTION: laptop\nROTATION: CONSTRAINED";
        let table = serde_json::json!({"rules": [
            {"object": "cup of water", "question": "all_at_once", "answer": reply}
        ]});
        let client = FixtureClient::from_json_str(&table.to_string()).unwrap();
        let ctx = single_prompt_context(&labels(), "cup of water", "a desk", &client).unwrap();
        let s = evaluate(&[("desk".into(), ctx)], &truth()).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 1.0));
        let prompt = build_single_prompt(&labels(), "cup of water", "a desk");
        assert!(prompt.contains("laptop, books"));
    }
}
