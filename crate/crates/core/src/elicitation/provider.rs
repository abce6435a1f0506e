use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ssr::EmbeddingVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    /// Network or server-side failure; worth retrying.
    #[error("transport error: {0}")]
    Transport(String),
    /// The provider refused the request; retrying will not help.
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Single-number answer.
    Direct,
    /// Free-text answer.
    Textual,
    /// Rating-expert follow-up on a free-text answer.
    Rate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Direct => "direct",
            Stage::Textual => "textual",
            Stage::Rate => "rate",
        })
    }
}

/// Bookkeeping attached to a request. Never sent over the wire.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RequestTag {
    pub survey_id: String,
    pub consumer_id: String,
    pub sample_index: u32,
    pub stage: Stage,
    pub attempt: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub text: String,
    /// Path of an image attached to a user turn.
    pub image: Option<String>,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::User,
            text: text.into(),
            image: None,
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::Assistant,
            text: text.into(),
            image: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    /// Distinct per conversation; follow-up turns reuse it, fresh chats do not.
    pub conversation_id: String,
    pub model: String,
    pub system: String,
    pub turns: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub seed: Option<u64>,
    pub tag: RequestTag,
}

impl ChatRequest {
    pub fn new(
        conversation_id: String,
        model: &str,
        system: String,
        turns: Vec<ChatMessage>,
        sampling: (f64, f64),
        seed: Option<u64>,
        tag: RequestTag,
    ) -> Result<Self, ProviderError> {
        if system.trim().is_empty() {
            return Err(ProviderError::Rejected("system prompt is empty".into()));
        }
        Ok(ChatRequest {
            conversation_id,
            model: model.to_string(),
            system,
            turns,
            temperature: sampling.0,
            top_p: sampling.1,
            seed,
            tag,
        })
    }

    pub fn has_image(&self) -> bool {
        self.turns.iter().any(|t| t.image.is_some())
    }

    /// Text of the last user turn.
    pub fn last_user_text(&self) -> &str {
        self.turns
            .iter()
            .rev()
            .find(|t| t.role == ChatRole::User)
            .map(|t| t.text.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChatResponse {
    pub text: String,
    pub metadata: BTreeMap<String, String>,
}

pub trait ChatProvider: Send + Sync {
    fn name(&self) -> &str;
    fn supports_images(&self) -> bool;
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn embed(&self, model: &str, text: &str) -> Result<EmbeddingVector, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(attempts: u32) -> Self {
        RetryPolicy {
            attempts,
            base_delay: Duration::ZERO,
        }
    }

    /// Runs `op`, retrying transport errors with exponential backoff.
    pub fn run<T>(
        &self,
        mut op: impl FnMut() -> Result<T, ProviderError>,
    ) -> Result<T, ProviderError> {
        let attempts = self.attempts.max(1);
        let mut delay = self.base_delay;
        let mut attempt = 1;
        loop {
            match op() {
                Err(e) if e.is_retryable() && attempt < attempts => {
                    log::debug!("attempt {attempt}/{attempts} failed: {e}; retrying in {delay:?}");
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag() -> RequestTag {
        RequestTag {
            survey_id: "s".into(),
            consumer_id: "c".into(),
            sample_index: 0,
            stage: Stage::Direct,
            attempt: 0,
        }
    }

    #[test]
    fn empty_system_prompt_rejected() {
        let r = ChatRequest::new(
            "x".into(),
            "m",
            "  ".into(),
            vec![],
            (1.0, 1.0),
            None,
            tag(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn retries_transport_errors_only() {
        let policy = RetryPolicy::immediate(3);
        let mut calls = 0;
        let out: Result<u32, _> = policy.run(|| {
            calls += 1;
            if calls < 3 {
                Err(ProviderError::Transport("503".into()))
            } else {
                Ok(7)
            }
        });
        assert_eq!(out, Ok(7));
        assert_eq!(calls, 3);

        let mut calls = 0;
        let out: Result<u32, _> = policy.run(|| {
            calls += 1;
            Err(ProviderError::Transport("down".into()))
        });
        assert!(out.is_err());
        assert_eq!(calls, 3);

        let mut calls = 0;
        let out: Result<u32, _> = policy.run(|| {
            calls += 1;
            Err(ProviderError::Rejected("401".into()))
        });
        assert!(out.is_err());
        assert_eq!(calls, 1);
    }
}
