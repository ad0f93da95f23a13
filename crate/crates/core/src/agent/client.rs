//! Language-model client contract and the deterministic test clients.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

/// Wire request: `{system, messages[], model, temperature}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub messages: Vec<ChatMessage>,
    pub model: String,
    pub temperature: f64,
}

/// Wire response: `{text}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
}

pub trait LlmClient: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, req: &ChatRequest) -> Result<String, ClientError>;
}

/// Replays a fixed list of replies and records every request.
#[derive(Debug)]
pub struct ScriptedClient {
    model: String,
    replies: Mutex<VecDeque<Result<String, ClientError>>>,
    seen: Mutex<Vec<ChatRequest>>,
}

impl ScriptedClient {
    pub fn new(model: &str, replies: impl IntoIterator<Item = Result<String, ClientError>>) -> Self {
        ScriptedClient {
            model: model.into(),
            replies: Mutex::new(replies.into_iter().collect()),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn texts<S: Into<String>>(model: &str, replies: impl IntoIterator<Item = S>) -> Self {
        Self::new(model, replies.into_iter().map(|s| Ok(s.into())))
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.seen.lock().expect("client lock").clone()
    }
}

impl LlmClient for ScriptedClient {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, ClientError> {
        self.seen.lock().expect("client lock").push(req.clone());
        self.replies
            .lock()
            .expect("client lock")
            .pop_front()
            .unwrap_or_else(|| Err(ClientError::Transport("script exhausted".into())))
    }
}

/// Keyword mock: maps the request text to a canned spec. Stateless and
/// deterministic; requests it does not recognise get a prose reply.
#[derive(Debug, Clone)]
pub struct MockClient {
    model: String,
}

impl Default for MockClient {
    fn default() -> Self {
        MockClient {
            model: "mock-keyword/1".into(),
        }
    }
}

const CANNED: &[(&[&str], &str)] = &[
    (
        &["pentagram", "star"],
        "(objective :name \"star\"\n  (term shape.curve :curve (star :points 5 :outer 25 :inner 10))\n  (term spacing.repel :d0 3))",
    ),
    (
        &["hexagon"],
        "(objective :name \"hexagon-trio\"\n  (term shape.points :targets (hexagon-trio :side 10)))",
    ),
    (
        &["concentrat", "density", "gather", "cluster"],
        "(objective :name \"concentrate\"\n  (term region.density :region (disk :r 4.514 :w 8)))",
    ),
    (&["kit"], "(objective :name \"KIT\"\n  (term shape.curve :curve (text \"KIT\" :height 20)))"),
    (&["square"], "(objective :name \"square\" (term shape.square))"),
    (
        &["heart"],
        "(objective :name \"heart\"\n  (term shape.curve :curve (heart :size 40))\n  (term spacing.repel :d0 3))",
    ),
    (
        &["circle", "ring"],
        "(objective :name \"circle\"\n  (term shape.curve :curve (circle :r 20))\n  (term spacing.repel :d0 4))",
    ),
];

impl MockClient {
    pub fn new(model: &str) -> Self {
        MockClient { model: model.into() }
    }

    /// The canned spec for a request, if any keyword matches.
    pub fn canned(request: &str) -> Option<&'static str> {
        let r = request.to_lowercase();
        CANNED
            .iter()
            .find(|(keys, _)| keys.iter().any(|k| r.contains(k)))
            .map(|(_, spec)| *spec)
    }
}

impl LlmClient for MockClient {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, ClientError> {
        let last = req
            .messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or("");
        // Negative guidance sits before the request proper.
        let request = last.rsplit("New request: ").next().unwrap_or(last);
        Ok(match Self::canned(request) {
            Some(spec) => format!("Here is the objective.\n\n```objective-dsl\n{spec}\n```\n"),
            None => "I do not know how to arrange particles for that request.".into(),
        })
    }
}
