use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Environment variable holding the bearer token for HTTP adapters.
pub const API_KEY_ENV: &str = "CIVET_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    ChatEndpoint,
    EmbeddingEndpoint,
    ReplayFile,
}

/// Bounded retry with exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff * 2u32.saturating_pow(retry.saturating_sub(1))
    }
}

#[derive(Debug, Clone)]
pub struct AdapterConfig {
    pub kind: AdapterKind,
    pub endpoint: Option<String>,
    pub model: String,
    pub replay_file: Option<PathBuf>,
    pub timeout: Duration,
    /// Maximum requests in flight.
    pub parallel: usize,
    pub retry: RetryPolicy,
    pub api_key: Option<String>,
}

impl AdapterConfig {
    pub fn replay(path: impl Into<PathBuf>) -> Self {
        AdapterConfig {
            kind: AdapterKind::ReplayFile,
            endpoint: None,
            model: "replay".into(),
            replay_file: Some(path.into()),
            timeout: Duration::from_secs(60),
            parallel: 1,
            retry: RetryPolicy::default(),
            api_key: None,
        }
    }

    pub fn http(kind: AdapterKind, endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        AdapterConfig {
            kind,
            endpoint: Some(endpoint.into()),
            model: model.into(),
            replay_file: None,
            timeout: Duration::from_secs(120),
            parallel: 4,
            retry: RetryPolicy::default(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.parallel == 0 {
            return Err(HarnessError::Config("parallelism must be at least 1".into()));
        }
        if self.retry.attempts == 0 {
            return Err(HarnessError::Config("at least one attempt is required".into()));
        }
        match self.kind {
            AdapterKind::ReplayFile if self.replay_file.is_none() => {
                Err(HarnessError::Config("replay adapter needs a replay file".into()))
            }
            AdapterKind::ChatEndpoint | AdapterKind::EmbeddingEndpoint if self.endpoint.is_none() => {
                Err(HarnessError::Config("HTTP adapters need an endpoint URL".into()))
            }
            _ => Ok(()),
        }
    }
}
