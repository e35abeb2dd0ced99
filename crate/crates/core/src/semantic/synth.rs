use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use super::client::{ClientError, LlmClient, LlmRequest};
use super::prompt::{build_prompt, parse_answer};
use super::{CautionFlag, PoseConstraint, QuerySpec, QuestionKind, Relationship, SemanticContext, SemanticError, SpatialConstraint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    /// Prompts per question; must be odd.
    pub votes: usize,
    /// Retries per prompt after the first failed attempt.
    pub retries: usize,
    /// First backoff delay; doubles on every retry.
    pub backoff: Duration,
    /// Questions in flight at once.
    pub max_in_flight: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            votes: 5,
            retries: 3,
            backoff: Duration::from_millis(200),
            max_in_flight: 4,
        }
    }
}

/// Strict majority of restrictive votes. Unparseable votes (`None`) count as
/// permissive. Returns `None` only if every vote is unparseable.
pub fn majority(votes: &[Option<bool>]) -> Option<bool> {
    if !votes.is_empty() && votes.iter().all(Option::is_none) {
        return None;
    }
    let yes = votes.iter().filter(|v| **v == Some(true)).count();
    Some(2 * yes > votes.len())
}

fn ask<C: LlmClient + ?Sized>(client: &C, request: &LlmRequest, opts: &SynthOptions) -> Result<String, SemanticError> {
    let mut delay = opts.backoff;
    let mut last: Option<ClientError> = None;
    for attempt in 0..=opts.retries {
        if attempt > 0 {
            std::thread::sleep(delay);
            delay *= 2;
        }
        match client.complete(request) {
            Ok(text) => return Ok(text),
            Err(e) => {
                tracing::debug!(attempt, error = %e, "LLM request failed");
                last = Some(e);
            }
        }
    }
    Err(SemanticError::ClientUnavailable {
        attempts: opts.retries + 1,
        message: last.map(|e| e.to_string()).unwrap_or_default(),
    })
}

fn decide<C: LlmClient + ?Sized>(client: &C, spec: &QuerySpec, opts: &SynthOptions) -> Result<bool, SemanticError> {
    let prompt = build_prompt(spec);
    let mut votes = Vec::with_capacity(spec.votes);
    for vote in 0..spec.votes {
        let request = LlmRequest {
            prompt: prompt.clone(),
            spec: spec.clone(),
            vote,
        };
        let text = ask(client, &request, opts)?;
        let parsed = parse_answer(spec.question_kind, &text);
        if parsed.is_none() {
            tracing::warn!(question = %spec.question_kind, object = %spec.target_object, reply = %text, "unparseable vote");
        }
        votes.push(parsed);
    }
    majority(&votes).ok_or_else(|| {
        SemanticError::MalformedResponse(format!(
            "{} / {} / {}",
            spec.manipulated_object, spec.target_object, spec.question_kind
        ))
    })
}

/// Asks every (object, relationship) pair, every caution question and the
/// rotation question `opts.votes` times each and assembles the majority
/// answers. Questions run concurrently up to `opts.max_in_flight`; the result
/// does not depend on completion order.
pub fn synthesize_context<C: LlmClient + ?Sized>(
    scene_labels: &[String],
    held_object: &str,
    scene_description: &str,
    client: &C,
    opts: &SynthOptions,
) -> Result<SemanticContext, SemanticError> {
    if opts.votes == 0 || opts.votes % 2 == 0 {
        return Err(SemanticError::InvalidVotes(opts.votes));
    }
    let mut specs = Vec::with_capacity(scene_labels.len() * (Relationship::ALL.len() + 1) + 1);
    let spec = |target: &str, kind| QuerySpec {
        scene_description: scene_description.to_string(),
        manipulated_object: held_object.to_string(),
        target_object: target.to_string(),
        question_kind: kind,
        votes: opts.votes,
    };
    for label in scene_labels {
        for rel in Relationship::ALL {
            specs.push(spec(label, QuestionKind::Relationship(rel)));
        }
    }
    for label in scene_labels {
        specs.push(spec(label, QuestionKind::Caution));
    }
    specs.push(spec(held_object, QuestionKind::Rotation));

    let answers: Vec<Mutex<Option<Result<bool, SemanticError>>>> = specs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = opts.max_in_flight.clamp(1, specs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= specs.len() {
                    break;
                }
                let out = decide(client, &specs[i], opts);
                *answers[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(out);
            });
        }
    });

    let mut ctx = SemanticContext::permissive(held_object, scene_labels);
    for (spec, slot) in specs.iter().zip(answers) {
        let restrictive = slot
            .into_inner()
            .unwrap_or_else(|e| e.into_inner())
            .expect("every question is answered")?;
        if !restrictive {
            continue;
        }
        match spec.question_kind {
            QuestionKind::Relationship(relationship) => ctx.spatial.push(SpatialConstraint {
                object: spec.target_object.clone(),
                relationship,
            }),
            QuestionKind::Caution => {
                if let Some(flag) = ctx.behavioral.iter_mut().find(|b| b.object == spec.target_object) {
                    *flag = CautionFlag {
                        object: spec.target_object.clone(),
                        caution: true,
                    };
                }
            }
            QuestionKind::Rotation => ctx.pose = PoseConstraint::ConstrainedRotation,
            QuestionKind::AllAtOnce => {}
        }
    }
    Ok(ctx)
}
