//! Chat and embedding providers for OpenAI-compatible HTTP endpoints.

use std::time::Duration;

use base64::Engine;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};
use url::Url;

use super::provider::{
    ChatProvider, ChatRequest, ChatResponse, ChatRole, EmbeddingProvider, ProviderError,
};
use super::ElicitationError;
use crate::ssr::EmbeddingVector;

pub const API_BASE_ENV: &str = "SYNPANEL_API_BASE";
pub const API_KEY_ENV: &str = "SYNPANEL_API_KEY";

pub struct HttpProvider {
    client: Client,
    base: Url,
    api_key: Option<String>,
    images: bool,
}

impl HttpProvider {
    /// Validates the base URL without contacting it.
    pub fn new(base: &str, api_key: Option<String>) -> Result<Self, ElicitationError> {
        let mut base = Url::parse(base)
            .map_err(|e| ElicitationError::Config(format!("bad API base URL '{base}': {e}")))?;
        if !matches!(base.scheme(), "http" | "https") || base.host_str().is_none() {
            return Err(ElicitationError::Config(format!(
                "API base URL '{base}' must be http(s) with a host"
            )));
        }
        if !base.path().ends_with('/') {
            let path = format!("{}/", base.path());
            base.set_path(&path);
        }
        let client = Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ElicitationError::Config(format!("http client: {e}")))?;
        Ok(HttpProvider {
            client,
            base,
            api_key,
            images: true,
        })
    }

    pub fn with_images(mut self, supported: bool) -> Self {
        self.images = supported;
        self
    }

    fn post(&self, endpoint: &str, body: &Value) -> Result<Value, ProviderError> {
        let url = self
            .base
            .join(endpoint)
            .map_err(|e| ProviderError::Rejected(e.to_string()))?;
        let mut req = self.client.post(url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(ProviderError::Transport(format!("{status}: {text}")));
        }
        if !status.is_success() {
            return Err(ProviderError::Rejected(format!("{status}: {text}")));
        }
        serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(e.to_string()))
    }
}

fn image_url(path: &str) -> Result<String, ProviderError> {
    if path.starts_with("http://") || path.starts_with("https://") || path.starts_with("data:") {
        return Ok(path.to_string());
    }
    let bytes =
        std::fs::read(path).map_err(|e| ProviderError::Rejected(format!("image '{path}': {e}")))?;
    let mime = match path
        .rsplit('.')
        .next()
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "image/png",
    };
    Ok(format!(
        "data:{mime};base64,{}",
        base64::engine::general_purpose::STANDARD.encode(bytes)
    ))
}

fn chat_body(request: &ChatRequest) -> Result<Value, ProviderError> {
    let mut messages = vec![json!({"role": "system", "content": request.system})];
    for turn in &request.turns {
        let role = match turn.role {
            ChatRole::System => "system",
            ChatRole::User => "user",
            ChatRole::Assistant => "assistant",
        };
        let content = match &turn.image {
            None => json!(turn.text),
            Some(path) => json!([
                {"type": "text", "text": turn.text},
                {"type": "image_url", "image_url": {"url": image_url(path)?}},
            ]),
        };
        messages.push(json!({"role": role, "content": content}));
    }
    let mut body = json!({
        "model": request.model,
        "messages": messages,
        "temperature": request.temperature,
        "top_p": request.top_p,
    });
    if let Some(seed) = request.seed {
        body["seed"] = json!(seed);
    }
    Ok(body)
}

impl ChatProvider for HttpProvider {
    fn name(&self) -> &str {
        self.base.as_str()
    }

    fn supports_images(&self) -> bool {
        self.images
    }

    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let body = chat_body(request)?;
        let reply = self.post("chat/completions", &body)?;
        let text = reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| ProviderError::Malformed("missing choices[0].message.content".into()))?;
        let mut response = ChatResponse {
            text: text.to_string(),
            ..Default::default()
        };
        for field in ["id", "model", "system_fingerprint"] {
            if let Some(v) = reply.get(field).and_then(Value::as_str) {
                response.metadata.insert(field.to_string(), v.to_string());
            }
        }
        Ok(response)
    }
}

impl EmbeddingProvider for HttpProvider {
    fn name(&self) -> &str {
        self.base.as_str()
    }

    fn embed(&self, model: &str, text: &str) -> Result<EmbeddingVector, ProviderError> {
        let reply = self.post("embeddings", &json!({"model": model, "input": text}))?;
        let values = reply
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::Malformed("missing data[0].embedding".into()))?
            .iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| ProviderError::Malformed("non-numeric embedding".into()))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        EmbeddingVector::new(values).map_err(|e| ProviderError::Malformed(e.to_string()))
    }
}
