//! Blocking JSON-over-HTTP POST shared by the remote learner and the judge.

use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HttpError {
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("transport error: {0}")]
    Transport(String),
}

impl HttpError {
    /// Rate limiting, server errors and transport failures may succeed later.
    pub fn is_transient(&self) -> bool {
        match self {
            HttpError::Status { status, .. } => *status == 429 || *status >= 500,
            HttpError::Timeout(_) | HttpError::Transport(_) => true,
        }
    }
}

/// Agent that reports non-2xx statuses as values and aborts after `timeout`.
pub fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into()
}

/// POSTs a JSON body and returns the response body of a 2xx reply.
pub fn post_json(agent: &ureq::Agent, url: &str, headers: &[(&str, String)], body: &str) -> Result<String, HttpError> {
    let mut req = agent.post(url).header("Content-Type", "application/json");
    for (k, v) in headers {
        req = req.header(*k, v.as_str());
    }
    let mut resp = req.send(body).map_err(classify)?;
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().map_err(classify)?;
    if (200..300).contains(&status) {
        Ok(text)
    } else {
        Err(HttpError::Status { status, body: text })
    }
}

fn classify(e: ureq::Error) -> HttpError {
    match e {
        ureq::Error::Timeout(_) => HttpError::Timeout(e.to_string()),
        e => HttpError::Transport(e.to_string()),
    }
}
