//! Minimal JSON-over-HTTPS transport used by the remote providers.

use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
#[error("{message}")]
pub struct TransportError {
    pub status: Option<u16>,
    pub message: String,
    /// Worth retrying: network failures, 429 and 5xx responses.
    pub retriable: bool,
}

impl TransportError {
    pub fn retriable(message: impl Into<String>) -> Self {
        Self { status: None, message: message.into(), retriable: true }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self { status: None, message: message.into(), retriable: false }
    }
}

pub trait JsonTransport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<Value, TransportError>;
}

/// Blocking transport over `ureq`.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build();
        Self { agent: config.into() }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

impl JsonTransport for UreqTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<Value, TransportError> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = bearer {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| TransportError::retriable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::retriable(format!("reading response body: {e}")))?;
        if !(200..300).contains(&status) {
            let retriable = status == 429 || status >= 500;
            let snippet: String = text.chars().take(500).collect();
            return Err(TransportError {
                status: Some(status),
                message: format!("HTTP {status}: {snippet}"),
                retriable,
            });
        }
        serde_json::from_str(&text).map_err(|e| TransportError::fatal(format!("invalid JSON response: {e}")))
    }
}

/// Exponential backoff: `base * 2^(attempt-1)`, `attempt` starting at 1.
pub(crate) fn backoff_delay(base: Duration, attempt: u32) -> Duration {
    base.saturating_mul(1u32 << attempt.saturating_sub(1).min(16))
}
