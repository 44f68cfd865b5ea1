//! Judge endpoint client: retries, content-addressed caching, bounded
//! parallelism.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::http::{self, HttpError};
use crate::io::sha256_hex;

use super::JudgeError;

/// Sends one request body to a URL.
pub trait Transport: Send + Sync {
    fn post(&self, url: &str, headers: &[(&str, String)], body: &str) -> Result<String, HttpError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        UreqTransport { agent: http::agent(timeout) }
    }
}

impl Transport for UreqTransport {
    fn post(&self, url: &str, headers: &[(&str, String)], body: &str) -> Result<String, HttpError> {
        http::post_json(&self.agent, url, headers, body)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub url: String,
    pub model: String,
    pub timeout_ms: u64,
    /// Extra attempts after the first one.
    pub max_retries: u32,
    /// Delay before retry `i` (0-based) is `backoff_ms · 2^i`.
    pub backoff_ms: u64,
    /// Environment variable holding a bearer token; unset variable means no
    /// authorization header.
    pub api_key_env: Option<String>,
    /// Directory of `<hash>.txt` responses; `None` keeps the cache in memory.
    pub cache_dir: Option<PathBuf>,
    pub cache: bool,
    pub parallelism: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            url: String::new(),
            model: "gemini-2.5-flash-lite".into(),
            timeout_ms: 60_000,
            max_retries: 3,
            backoff_ms: 500,
            api_key_env: Some("JUDGE_API_KEY".into()),
            cache_dir: None,
            cache: true,
            parallelism: 4,
        }
    }
}

/// Content hash identifying a request: prompt bytes and model name.
pub fn request_hash(model: &str, prompt: &str) -> String {
    let mut bytes = Vec::with_capacity(model.len() + 1 + prompt.len());
    bytes.extend_from_slice(model.as_bytes());
    bytes.push(0);
    bytes.extend_from_slice(prompt.as_bytes());
    sha256_hex(&bytes)
}

pub struct JudgeClient {
    cfg: EndpointConfig,
    transport: Box<dyn Transport>,
    memory: Mutex<HashMap<String, String>>,
    network_calls: AtomicUsize,
}

impl JudgeClient {
    pub fn new(cfg: EndpointConfig) -> Self {
        let transport = UreqTransport::new(Duration::from_millis(cfg.timeout_ms));
        Self::with_transport(cfg, Box::new(transport))
    }

    pub fn with_transport(cfg: EndpointConfig, transport: Box<dyn Transport>) -> Self {
        JudgeClient { cfg, transport, memory: Mutex::new(HashMap::new()), network_calls: AtomicUsize::new(0) }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    /// Requests sent to the transport so far, including retries.
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    fn cache_get(&self, hash: &str) -> Option<String> {
        if !self.cfg.cache {
            return None;
        }
        if let Some(v) = self.memory.lock().unwrap().get(hash) {
            return Some(v.clone());
        }
        let dir = self.cfg.cache_dir.as_ref()?;
        let text = fs::read_to_string(dir.join(format!("{hash}.txt"))).ok()?;
        self.memory.lock().unwrap().insert(hash.to_string(), text.clone());
        Some(text)
    }

    fn cache_put(&self, hash: &str, text: &str) -> Result<(), JudgeError> {
        if !self.cfg.cache {
            return Ok(());
        }
        self.memory.lock().unwrap().insert(hash.to_string(), text.to_string());
        if let Some(dir) = &self.cfg.cache_dir {
            let cache_err = |e: std::io::Error| JudgeError::Cache(e.to_string());
            fs::create_dir_all(dir).map_err(cache_err)?;
            // rename keeps concurrent readers from seeing partial files
            let tmp = dir.join(format!(".{hash}.{:?}.tmp", std::thread::current().id()));
            fs::write(&tmp, text).map_err(cache_err)?;
            fs::rename(&tmp, dir.join(format!("{hash}.txt"))).map_err(cache_err)?;
        }
        Ok(())
    }

    fn headers(&self) -> Vec<(&'static str, String)> {
        match self.cfg.api_key_env.as_deref().and_then(|k| std::env::var(k).ok()) {
            Some(key) => vec![("Authorization", format!("Bearer {key}"))],
            None => Vec::new(),
        }
    }

    /// Returns the endpoint's response text for `prompt`. Transient failures
    /// are retried up to `max_retries` times; with no retry budget the
    /// failure itself is reported.
    pub fn call(&self, prompt: &str) -> Result<String, JudgeError> {
        let hash = request_hash(&self.cfg.model, prompt);
        if let Some(hit) = self.cache_get(&hash) {
            return Ok(hit);
        }
        let body = serde_json::json!({ "model": self.cfg.model, "prompt": prompt }).to_string();
        let headers = self.headers();
        let attempts = self.cfg.max_retries + 1;
        let mut attempt = 0;
        loop {
            self.network_calls.fetch_add(1, Ordering::SeqCst);
            let err = match self.transport.post(&self.cfg.url, &headers, &body) {
                Ok(text) => {
                    self.cache_put(&hash, &text)?;
                    return Ok(text);
                }
                Err(e) => e,
            };
            attempt += 1;
            if !err.is_transient() || self.cfg.max_retries == 0 {
                return Err(match err {
                    HttpError::Timeout(_) => JudgeError::Timeout { hash },
                    e => JudgeError::Transport { hash, message: e.to_string() },
                });
            }
            if attempt == attempts {
                return Err(JudgeError::RetriesExhausted { hash, attempts, last: err.to_string() });
            }
            log::warn!("judge request {} failed (attempt {attempt}/{attempts}): {err}", &hash[..12]);
            let delay = self.cfg.backoff_ms.saturating_mul(1u64 << (attempt - 1).min(20));
            std::thread::sleep(Duration::from_millis(delay));
        }
    }

    /// Calls for every prompt with at most `parallelism` in flight; results
    /// keep the input order.
    pub fn call_many(&self, prompts: &[String]) -> Vec<Result<String, JudgeError>> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(self.cfg.parallelism.max(1)).build();
        match pool {
            Ok(pool) => pool.install(|| prompts.par_iter().map(|p| self.call(p)).collect()),
            Err(_) => prompts.iter().map(|p| self.call(p)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    struct Mock {
        calls: Arc<AtomicUsize>,
        reply: Result<String, HttpError>,
    }

    impl Transport for Mock {
        fn post(&self, _: &str, _: &[(&str, String)], body: &str) -> Result<String, HttpError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let v: serde_json::Value = serde_json::from_str(body).unwrap();
            assert!(v["model"].is_string() && v["prompt"].is_string());
            self.reply.clone()
        }
    }

    fn client(reply: Result<String, HttpError>, max_retries: u32) -> (JudgeClient, Arc<AtomicUsize>) {
        let calls = Arc::new(AtomicUsize::new(0));
        let cfg = EndpointConfig { url: "mock".into(), max_retries, backoff_ms: 0, api_key_env: None, ..Default::default() };
        (JudgeClient::with_transport(cfg, Box::new(Mock { calls: calls.clone(), reply })), calls)
    }

    #[test]
    fn mock_reply_passes_through_and_caches() {
        let (c, calls) = client(Ok("{\"x\": 1}".into()), 2);
        assert_eq!(c.call("p").unwrap(), "{\"x\": 1}");
        assert_eq!(c.call("p").unwrap(), "{\"x\": 1}");
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        c.call("q").unwrap();
        assert_eq!(c.network_calls(), 2);
    }

    #[test]
    fn retries_exhausted_after_three_attempts() {
        let (c, calls) = client(Err(HttpError::Transport("connection refused".into())), 2);
        let err = c.call("p").unwrap_err();
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        assert!(matches!(&err, JudgeError::RetriesExhausted { attempts: 3, hash, .. } if *hash == request_hash("gemini-2.5-flash-lite", "p")));
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (c, calls) = client(Err(HttpError::Status { status: 400, body: "bad".into() }), 5);
        assert!(matches!(c.call("p"), Err(JudgeError::Transport { .. })));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        let (c, _) = client(Err(HttpError::Timeout("slow".into())), 0);
        assert!(matches!(c.call("p"), Err(JudgeError::Timeout { .. })));
    }

    #[test]
    fn hash_separates_model_and_prompt() {
        assert_ne!(request_hash("ab", "c"), request_hash("a", "bc"));
        assert_eq!(request_hash("m", "p"), request_hash("m", "p"));
    }

    #[test]
    fn directory_cache_survives_new_client() {
        let dir = tempfile::tempdir().unwrap();
        let calls = Arc::new(AtomicUsize::new(0));
        let cfg = EndpointConfig { url: "mock".into(), cache_dir: Some(dir.path().into()), api_key_env: None, ..Default::default() };
        let mk = || JudgeClient::with_transport(cfg.clone(), Box::new(Mock { calls: calls.clone(), reply: Ok("v".into()) }));
        assert_eq!(mk().call("p").unwrap(), "v");
        assert_eq!(mk().call("p").unwrap(), "v");
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn call_many_keeps_order() {
        let (c, calls) = client(Ok("v".into()), 0);
        let prompts: Vec<String> = (0..20).map(|i| format!("p{i}")).collect();
        let out = c.call_many(&prompts);
        assert_eq!(out.len(), 20);
        assert!(out.iter().all(|r| r.as_deref() == Ok("v")));
        assert_eq!(calls.load(Ordering::SeqCst), 20);
    }

    #[test]
    fn unreachable_endpoint_is_transport_failure() {
        let cfg = EndpointConfig { url: "http://127.0.0.1:9/judge".into(), max_retries: 1, backoff_ms: 0, timeout_ms: 500, ..Default::default() };
        assert!(matches!(JudgeClient::new(cfg).call("p"), Err(JudgeError::RetriesExhausted { attempts: 2, .. })));
    }
}
