//! Chat-completions and embedding transports.

use std::collections::HashMap;

use base64::Engine;
use base64::engine::general_purpose::STANDARD;
use serde::Deserialize;
use serde_json::{Value, json};
use tokio::sync::Mutex;

use crate::config::{AdapterConfig, RetryPolicy};

/// Failure of a single request attempt.
#[derive(Debug)]
pub(crate) enum AttemptError {
    /// Worth retrying: connection failures, timeouts, 429 and 5xx.
    Transient(String),
    Fatal(String),
}

impl std::fmt::Display for AttemptError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttemptError::Transient(m) | AttemptError::Fatal(m) => f.write_str(m),
        }
    }
}

pub struct HttpClient {
    client: reqwest::Client,
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl HttpClient {
    pub fn new(cfg: &AdapterConfig) -> Result<Self, reqwest::Error> {
        Ok(HttpClient {
            client: reqwest::Client::builder().timeout(cfg.timeout).build()?,
            endpoint: cfg.endpoint.clone().unwrap_or_default(),
            api_key: cfg.api_key.clone(),
            retry: cfg.retry,
        })
    }

    async fn post_once(&self, body: &Value) -> Result<Value, AttemptError> {
        let mut req = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| AttemptError::Transient(format!("request failed: {e}")))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(AttemptError::Transient(format!("endpoint returned {status}")));
        }
        if !status.is_success() {
            let text = resp.text().await.unwrap_or_default();
            return Err(AttemptError::Fatal(format!("endpoint returned {status}: {text}")));
        }
        resp.json::<Value>()
            .await
            .map_err(|e| AttemptError::Fatal(format!("unreadable response body: {e}")))
    }

    /// POST with bounded retries on transient failures.
    pub async fn post(&self, body: &Value) -> Result<Value, String> {
        let mut attempt = 1;
        loop {
            match self.post_once(body).await {
                Ok(v) => return Ok(v),
                Err(AttemptError::Transient(msg)) if attempt < self.retry.attempts => {
                    log::warn!("attempt {attempt} failed ({msg}), retrying");
                    tokio::time::sleep(self.retry.backoff(attempt)).await;
                    attempt += 1;
                }
                Err(e) => return Err(format!("{e} (after {attempt} attempt(s))")),
            }
        }
    }
}

pub(crate) fn data_url(png: &[u8]) -> String {
    format!("data:image/png;base64,{}", STANDARD.encode(png))
}

/// Request body for one greedy chat completion: a single user turn carrying
/// the prompt text and the scene image.
pub fn chat_request(model: &str, prompt: &str, png: &[u8]) -> Value {
    json!({
        "model": model,
        "temperature": 0.0,
        "top_p": 1.0,
        "n": 1,
        "stream": false,
        "messages": [{
            "role": "user",
            "content": [
                {"type": "text", "text": prompt},
                {"type": "image_url", "image_url": {"url": data_url(png)}}
            ]
        }]
    })
}

pub(crate) fn chat_answer(resp: &Value) -> Result<String, String> {
    let content = &resp["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        // some servers return content parts
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err(format!("response has no choices[0].message.content: {resp}")),
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    embedding: Vec<f32>,
}

pub fn embedding_text_request(model: &str, text: &str) -> Value {
    json!({"model": model, "input": {"text": text}})
}

pub fn embedding_image_request(model: &str, png: &[u8]) -> Value {
    json!({"model": model, "input": {"image": STANDARD.encode(png)}})
}

pub(crate) fn parse_embedding(resp: Value) -> Result<Vec<f32>, String> {
    serde_json::from_value::<EmbeddingResponse>(resp)
        .map(|r| r.embedding)
        .map_err(|e| format!("malformed embedding response: {e}"))
}

/// Caches option-text embeddings; every stimulus reuses the same few options.
#[derive(Default)]
pub struct TextEmbeddingCache {
    cache: Mutex<HashMap<String, Vec<f32>>>,
}

impl TextEmbeddingCache {
    pub async fn get(&self, http: &HttpClient, model: &str, text: &str) -> Result<Vec<f32>, String> {
        if let Some(v) = self.cache.lock().await.get(text) {
            return Ok(v.clone());
        }
        let v = parse_embedding(http.post(&embedding_text_request(model, text)).await?)?;
        self.cache.lock().await.insert(text.to_string(), v.clone());
        Ok(v)
    }
}
