use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{QuerySpec, SemanticError};

/// One prompt sent to a language model, tagged with its vote index.
#[derive(Debug, Clone)]
pub struct LlmRequest {
    pub prompt: String,
    pub spec: QuerySpec,
    pub vote: usize,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("bad reply: {0}")]
    BadReply(String),
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, request: &LlmRequest) -> Result<String, ClientError>;

    /// Whether the client has any knowledge of `object`. Fixture tables use
    /// this to warn about unknown held objects; live models always say yes.
    fn knows_object(&self, _object: &str) -> bool {
        true
    }
}

impl<T: LlmClient + ?Sized> LlmClient for &T {
    fn complete(&self, request: &LlmRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }

    fn knows_object(&self, object: &str) -> bool {
        (**self).knows_object(object)
    }
}

impl<T: LlmClient + ?Sized> LlmClient for std::sync::Arc<T> {
    fn complete(&self, request: &LlmRequest) -> Result<String, ClientError> {
        (**self).complete(request)
    }

    fn knows_object(&self, object: &str) -> bool {
        (**self).knows_object(object)
    }
}

/// Rule-table entry. `target` is omitted for rotation questions; `*` matches
/// any target. Either a single `answer` or a per-vote `answers` sequence,
/// replayed cyclically by vote index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRule {
    pub object: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureTable {
    #[serde(default = "fixture_schema")]
    pub schema: String,
    pub rules: Vec<FixtureRule>,
}

fn fixture_schema() -> String {
    "semfilter/fixture/1".into()
}

/// Deterministic offline client answering from a rule table.
#[derive(Debug, Clone)]
pub struct FixtureClient {
    rules: HashMap<(String, String, String), Vec<String>>,
    objects: Vec<String>,
}

fn norm(s: &str) -> String {
    s.trim().to_lowercase()
}

impl FixtureClient {
    pub fn new(table: FixtureTable) -> Result<Self, SemanticError> {
        let mut rules = HashMap::new();
        let mut objects = Vec::new();
        for (i, r) in table.rules.into_iter().enumerate() {
            let seq = match (r.answer, r.answers.is_empty()) {
                (Some(a), true) => vec![a],
                (None, false) => r.answers,
                _ => {
                    return Err(SemanticError::Fixture(format!(
                        "rule {i}: give exactly one of `answer` or a non-empty `answers`"
                    )))
                }
            };
            r.question.parse::<super::QuestionKind>()?;
            let object = norm(&r.object);
            let target = r.target.as_deref().map(norm).unwrap_or_default();
            if !objects.contains(&object) {
                objects.push(object.clone());
            }
            if rules.insert((object, target, norm(&r.question)), seq).is_some() {
                return Err(SemanticError::Fixture(format!("rule {i} repeats an earlier key")));
            }
        }
        Ok(Self { rules, objects })
    }

    pub fn from_json_str(text: &str) -> Result<Self, SemanticError> {
        let table: FixtureTable = serde_json::from_str(text).map_err(|e| SemanticError::Fixture(e.to_string()))?;
        Self::new(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SemanticError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    fn lookup(&self, spec: &QuerySpec) -> Option<&Vec<String>> {
        let object = norm(&spec.manipulated_object);
        let question = spec.question_kind.key().to_string();
        let target = match spec.question_kind {
            super::QuestionKind::Rotation | super::QuestionKind::AllAtOnce => String::new(),
            _ => norm(&spec.target_object),
        };
        self.rules
            .get(&(object.clone(), target, question.clone()))
            .or_else(|| self.rules.get(&(object, "*".into(), question)))
    }
}

impl LlmClient for FixtureClient {
    fn complete(&self, request: &LlmRequest) -> Result<String, ClientError> {
        Ok(match self.lookup(&request.spec) {
            Some(seq) => seq[request.vote % seq.len()].clone(),
            None => request.spec.question_kind.permissive_answer().to_string(),
        })
    }

    fn knows_object(&self, object: &str) -> bool {
        self.objects.contains(&norm(object))
    }
}

/// Chat-completion client for an OpenAI-compatible endpoint.
///
/// Configured from `SEMFILTER_LLM_URL` (full URL of the chat completions
/// route), `SEMFILTER_LLM_MODEL` and `SEMFILTER_LLM_KEY`.
pub struct HttpClient {
    url: String,
    model: String,
    key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpClient {
    pub fn new(url: impl Into<String>, model: impl Into<String>, key: Option<String>) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self {
            url: url.into(),
            model: model.into(),
            key,
            http,
        })
    }

    pub fn from_env() -> Result<Self, ClientError> {
        let url = std::env::var("SEMFILTER_LLM_URL")
            .map_err(|_| ClientError::Transport("SEMFILTER_LLM_URL is not set".into()))?;
        let model = std::env::var("SEMFILTER_LLM_MODEL").unwrap_or_else(|_| "gpt-4o-mini".into());
        Self::new(url, model, std::env::var("SEMFILTER_LLM_KEY").ok())
    }
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl LlmClient for HttpClient {
    fn complete(&self, request: &LlmRequest) -> Result<String, ClientError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": 0.7,
            "max_tokens": 256,
        });
        let mut req = self.http.post(&self.url).json(&body);
        if let Some(key) = &self.key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ClientError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(ClientError::Transport(format!("HTTP {}", resp.status())));
        }
        let reply: ChatReply = resp.json().map_err(|e| ClientError::BadReply(e.to_string()))?;
        reply
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ClientError::BadReply("no choices".into()))
    }
}
