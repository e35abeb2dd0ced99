use super::{QuerySpec, QuestionKind};

/// In-context examples prepended to every prompt. Editable asset.
pub const IN_CONTEXT_EXAMPLES: &str = include_str!("../../assets/prompt_examples.txt");

/// Builds the prompt for one question. Deterministic: equal specs give
/// byte-identical prompts. The vote count does not enter the text; the same
/// prompt is issued once per vote.
pub fn build_prompt(spec: &QuerySpec) -> String {
    let held = spec.manipulated_object.trim();
    let target = spec.target_object.trim();
    let mut out = String::with_capacity(IN_CONTEXT_EXAMPLES.len() + 512);
    out.push_str(IN_CONTEXT_EXAMPLES.trim_end());
    out.push_str("\n\nNow answer the real question.\n");
    out.push_str(&format!("Scene: {}\n", spec.scene_description.trim()));
    out.push_str(&format!("Robot is holding: {held}\n"));
    match spec.question_kind {
        QuestionKind::Relationship(rel) => {
            out.push_str(&format!("Object: {target}\n"));
            out.push_str(&format!(
                "Question: Is it unsafe for the robot to move the {held} {} the {target}?\n",
                rel.phrase()
            ));
            out.push_str("Answer (UNSAFE or SAFE):");
        }
        QuestionKind::Caution => {
            out.push_str(&format!("Object: {target}\n"));
            out.push_str(&format!(
                "Question: Should the robot move with extra caution when the {held} is close to the {target}?\n"
            ));
            out.push_str("Answer (CAUTION or NO CAUTION):");
        }
        QuestionKind::Rotation => {
            out.push_str(&format!(
                "Question: Must the robot keep the {held} in its pick-up orientation, or may it rotate it freely?\n"
            ));
            out.push_str("Answer (CONSTRAINED or FREE):");
        }
        QuestionKind::AllAtOnce => {
            out.push_str(&super::eval::single_prompt_request(held));
        }
    }
    out
}

/// Reads a forced-choice answer. `Some(true)` is the restrictive choice
/// (UNSAFE, CAUTION, CONSTRAINED), `Some(false)` the permissive one, `None`
/// when the text names neither or both.
pub fn parse_answer(kind: QuestionKind, text: &str) -> Option<bool> {
    let words: Vec<String> = text
        .split(|c: char| !c.is_ascii_alphabetic())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_ascii_uppercase())
        .collect();
    let has = |w: &str| words.iter().any(|x| x == w);
    match kind {
        QuestionKind::Relationship(_) => match (has("UNSAFE"), has("SAFE")) {
            (true, false) => Some(true),
            (false, true) => Some(false),
            _ => None,
        },
        QuestionKind::Caution => {
            let negated = words
                .windows(2)
                .any(|w| (w[0] == "NO" || w[0] == "NOT") && w[1] == "CAUTION");
            let bare = words.iter().enumerate().any(|(i, w)| {
                w == "CAUTION" && (i == 0 || (words[i - 1] != "NO" && words[i - 1] != "NOT"))
            });
            match (bare, negated) {
                (true, false) => Some(true),
                (false, true) => Some(false),
                _ => None,
            }
        }
        QuestionKind::Rotation => match (has("CONSTRAINED"), has("FREE")) {
            (true, false) => Some(true),
            (false, true) => Some(false),
            _ => None,
        },
        QuestionKind::AllAtOnce => None,
    }
}
