//! OpenAI-compatible chat-completions and embeddings over HTTP.

use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, ChatCall, ChatReply, ChatRole, TransportError};
use crate::config::BackendConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal HTTP client surface, swappable in tests.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError>;

    fn get(&self, url: &str, headers: &[(String, String)], timeout: Duration) -> Result<HttpResponse, TransportError>;
}

pub struct UreqTransport;

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn read(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<HttpResponse, TransportError> {
    let mut resp = resp.map_err(|e| TransportError::Retryable(e.to_string()))?;
    let status = resp.status().as_u16();
    let body = resp
        .body_mut()
        .with_config()
        .limit(64 * 1024 * 1024)
        .read_to_string()
        .map_err(|e| TransportError::Retryable(e.to_string()))?;
    Ok(HttpResponse { status, body })
}

impl Transport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        let mut req = agent(timeout).post(url);
        for (k, v) in headers {
            req = req.header(k, v);
        }
        read(req.send_json(body))
    }

    fn get(&self, url: &str, headers: &[(String, String)], timeout: Duration) -> Result<HttpResponse, TransportError> {
        let mut req = agent(timeout).get(url);
        for (k, v) in headers {
            req = req.header(k, v);
        }
        read(req.call())
    }
}

/// Maps an HTTP status to success, a retryable error or a fatal one.
pub fn classify(resp: HttpResponse) -> Result<String, TransportError> {
    match resp.status {
        200..=299 => Ok(resp.body),
        408 | 409 | 425 | 429 | 500..=599 => Err(TransportError::Retryable(format!(
            "HTTP {}: {}",
            resp.status,
            snippet(&resp.body)
        ))),
        s => Err(TransportError::Fatal(format!("HTTP {s}: {}", snippet(&resp.body)))),
    }
}

fn snippet(s: &str) -> &str {
    let end = s.char_indices().nth(200).map_or(s.len(), |(i, _)| i);
    &s[..end]
}

pub struct LiveBackend {
    transport: Arc<dyn Transport>,
}

impl LiveBackend {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self { transport }
    }

    fn headers(config: &BackendConfig) -> Result<Vec<(String, String)>, TransportError> {
        let mut h = vec![("Content-Type".to_string(), "application/json".to_string())];
        if let Some(var) = &config.auth_env {
            let key = std::env::var(var)
                .map_err(|_| TransportError::Fatal(format!("environment variable {var} is not set")))?;
            h.push(("Authorization".into(), format!("Bearer {key}")));
        }
        Ok(h)
    }

    fn url(config: &BackendConfig, path: &str) -> Result<String, TransportError> {
        let base = config
            .endpoint
            .as_deref()
            .ok_or_else(|| TransportError::Fatal("backend has no endpoint".into()))?;
        Ok(format!("{}/{}", base.trim_end_matches('/'), path))
    }

    fn post(&self, config: &BackendConfig, path: &str, body: &Value) -> Result<Value, TransportError> {
        let resp = self.transport.post_json(
            &Self::url(config, path)?,
            &Self::headers(config)?,
            body,
            Duration::from_secs(config.timeout_s),
        )?;
        let text = classify(resp)?;
        serde_json::from_str(&text).map_err(|e| TransportError::Retryable(format!("bad JSON: {e}")))
    }
}

/// Request body for one chat call.
pub fn chat_body(model: &str, call: &ChatCall<'_>) -> Value {
    let messages: Vec<Value> = call
        .messages
        .iter()
        .map(|m| {
            let role = match m.role {
                ChatRole::System => "system",
                ChatRole::User => "user",
                ChatRole::Assistant => "assistant",
            };
            json!({"role": role, "content": m.content})
        })
        .collect();
    let mut body = json!({"model": model, "messages": messages});
    if let Some(t) = call.config.temperature {
        body["temperature"] = json!(t);
    }
    if let Some(r) = &call.config.reasoning {
        body["reasoning_effort"] = json!(r);
    }
    body
}

impl Backend for LiveBackend {
    fn chat(&self, call: &ChatCall<'_>) -> Result<ChatReply, TransportError> {
        let model = call.config.model.as_deref().unwrap_or(call.backend_id);
        let v = self.post(call.config, "chat/completions", &chat_body(model, call))?;
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| TransportError::Retryable("response has no message content".into()))?
            .to_string();
        Ok(ChatReply {
            text,
            prompt_tokens: v["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: v["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        })
    }

    fn embed(&self, backend_id: &str, config: &BackendConfig, texts: &[String]) -> Result<Vec<Vec<f32>>, TransportError> {
        let model = config.model.as_deref().unwrap_or(backend_id);
        let v = self.post(config, "embeddings", &json!({"model": model, "input": texts}))?;
        let data = v["data"]
            .as_array()
            .ok_or_else(|| TransportError::Retryable("response has no data".into()))?;
        let mut rows: Vec<(u64, Vec<f32>)> = Vec::with_capacity(data.len());
        for (i, d) in data.iter().enumerate() {
            let idx = d["index"].as_u64().unwrap_or(i as u64);
            let vec = d["embedding"]
                .as_array()
                .ok_or_else(|| TransportError::Retryable("embedding missing".into()))?
                .iter()
                .map(|x| x.as_f64().map(|f| f as f32))
                .collect::<Option<Vec<f32>>>()
                .ok_or_else(|| TransportError::Retryable("non-numeric embedding".into()))?;
            rows.push((idx, vec));
        }
        rows.sort_by_key(|r| r.0);
        Ok(rows.into_iter().map(|r| r.1).collect())
    }
}
