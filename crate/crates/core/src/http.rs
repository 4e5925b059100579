//! Minimal blocking JSON-over-HTTP helper shared by the remote backends.

use std::time::Duration;

use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum PostError {
    Timeout,
    Status(u16, String),
    Transport(String),
    Decode(String),
}

impl PostError {
    pub(crate) fn is_timeout(&self) -> bool {
        matches!(self, PostError::Timeout)
    }
}

impl std::fmt::Display for PostError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PostError::Timeout => f.write_str("request timed out"),
            PostError::Status(code, body) => write!(f, "HTTP {code}: {body}"),
            PostError::Transport(m) => write!(f, "transport error: {m}"),
            PostError::Decode(m) => write!(f, "undecodable response: {m}"),
        }
    }
}

pub(crate) fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

/// Reads a positive integer from the environment, falling back to `default`.
pub(crate) fn env_u64(name: &str, default: u64) -> u64 {
    std::env::var(name)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(default)
}

/// POSTs pre-serialized JSON so that retries send identical bytes.
pub(crate) fn post_json(
    agent: &ureq::Agent,
    url: &str,
    headers: &[(&str, &str)],
    body: &[u8],
) -> Result<Value, PostError> {
    let mut req = agent.post(url).header("content-type", "application/json");
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let mut resp = match req.send(body) {
        Ok(r) => r,
        Err(ureq::Error::Timeout(_)) => return Err(PostError::Timeout),
        Err(ureq::Error::Io(e)) if e.kind() == std::io::ErrorKind::TimedOut => {
            return Err(PostError::Timeout)
        }
        Err(e) => return Err(PostError::Transport(e.to_string())),
    };
    let status = resp.status().as_u16();
    let text = match resp.body_mut().read_to_string() {
        Ok(t) => t,
        Err(ureq::Error::Timeout(_)) => return Err(PostError::Timeout),
        Err(e) => return Err(PostError::Transport(e.to_string())),
    };
    if !(200..300).contains(&status) {
        return Err(PostError::Status(status, text));
    }
    serde_json::from_str(&text).map_err(|e| PostError::Decode(e.to_string()))
}
