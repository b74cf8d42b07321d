//! Language-model backends: a chat-completion HTTP client, a scripted
//! backend for offline runs, and a null backend.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Environment variable holding the bearer token for the remote backend.
pub const API_KEY_ENV: &str = "ADI_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Transport failure or non-success HTTP status.
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    /// The backend answered but the body had no completion in it.
    #[error("malformed backend response: {0}")]
    BadResponse(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, prompt: &str, temperature: f64) -> Result<String, BackendError>;

    fn name(&self) -> &str;
}

/// Always fails; used when no model is configured.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullBackend;

impl LlmBackend for NullBackend {
    fn complete(&self, _prompt: &str, _temperature: f64) -> Result<String, BackendError> {
        Err(BackendError::Unavailable("no language model configured".into()))
    }

    fn name(&self) -> &str {
        "none"
    }
}

/// Hex SHA-256 of a prompt; the key scripted responses are stored under.
pub fn prompt_key(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScriptedCall {
    pub prompt_key: String,
    pub temperature: f64,
}

/// Canned responses keyed by prompt hash.
///
/// Keys are tried in order: `<hash>@<temperature>`, `<hash>`, `*@<temperature>`, `*`,
/// with the temperature printed to two decimals. Responses never depend on
/// call history, so one instance can serve concurrent callers.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    responses: BTreeMap<String, String>,
    calls: Mutex<Vec<ScriptedCall>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScriptFile {
    responses: BTreeMap<String, String>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_map(responses: BTreeMap<String, String>) -> Self {
        Self { responses, calls: Mutex::default() }
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Unavailable(format!("{}: {e}", path.display())))?;
        let file: ScriptFile = serde_json::from_str(&text)
            .map_err(|e| BackendError::Unavailable(format!("{}: {e}", path.display())))?;
        Ok(Self::from_map(file.responses))
    }

    /// Responds to the exact prompt at any temperature.
    pub fn with_prompt(mut self, prompt: &str, response: impl Into<String>) -> Self {
        self.responses.insert(prompt_key(prompt), response.into());
        self
    }

    pub fn with_key(mut self, key: impl Into<String>, response: impl Into<String>) -> Self {
        self.responses.insert(key.into(), response.into());
        self
    }

    /// Fallback for any prompt.
    pub fn with_default(self, response: impl Into<String>) -> Self {
        self.with_key("*", response)
    }

    pub fn calls(&self) -> Vec<ScriptedCall> {
        self.calls.lock().expect("call log poisoned").clone()
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, prompt: &str, temperature: f64) -> Result<String, BackendError> {
        let key = prompt_key(prompt);
        self.calls
            .lock()
            .expect("call log poisoned")
            .push(ScriptedCall { prompt_key: key.clone(), temperature });
        let t = format!("{temperature:.2}");
        [format!("{key}@{t}"), key.clone(), format!("*@{t}"), "*".to_string()]
            .iter()
            .find_map(|k| self.responses.get(k))
            .cloned()
            .ok_or_else(|| BackendError::Unavailable(format!("no scripted response for prompt {key}")))
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub url: String,
    pub model: String,
    pub timeout_secs: u64,
    /// Extra tries on transport errors, 429 and 5xx.
    pub max_retries: u32,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self { url: String::new(), model: String::new(), timeout_secs: 60, max_retries: 2 }
    }
}

/// OpenAI-style chat-completion endpoint.
#[derive(Debug)]
pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteBackend {
    /// Reads the API key from [`API_KEY_ENV`].
    pub fn new(config: RemoteConfig) -> Self {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_api_key(config, api_key)
    }

    pub fn with_api_key(config: RemoteConfig, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, api_key, agent }
    }

    pub fn request_body(&self, prompt: &str, temperature: f64) -> Value {
        json!({
            "model": self.config.model,
            "temperature": temperature,
            "messages": [{"role": "user", "content": prompt}],
        })
    }

    fn post_once(&self, body: &Value) -> Result<String, Attempt> {
        let mut req = self.agent.post(&self.config.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| Attempt::Retry(e.to_string()))?;
        match status {
            200..=299 => extract_completion(&text).map_err(Attempt::Fatal),
            429 | 500..=599 => Err(Attempt::Retry(format!("HTTP {status}: {}", truncate(&text, 200)))),
            _ => Err(Attempt::Fatal(BackendError::Unreachable(format!("HTTP {status}: {}", truncate(&text, 200))))),
        }
    }
}

enum Attempt {
    Retry(String),
    Fatal(BackendError),
}

impl LlmBackend for RemoteBackend {
    fn complete(&self, prompt: &str, temperature: f64) -> Result<String, BackendError> {
        let body = self.request_body(prompt, temperature);
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(250 << attempt.min(4)));
            }
            match self.post_once(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("chat completion attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(BackendError::Unreachable(last))
    }

    fn name(&self) -> &str {
        "remote"
    }
}

/// Pulls `choices[0].message.content` out of a chat-completion body.
pub fn extract_completion(body: &str) -> Result<String, BackendError> {
    let v: Value = serde_json::from_str(body).map_err(|e| BackendError::BadResponse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::BadResponse("no choices[0].message.content".into()))
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_lookup_order() {
        let b = ScriptedBackend::new()
            .with_default("fallback")
            .with_key("*@0.80", "warmer")
            .with_prompt("hello", "hi");
        assert_eq!(b.complete("hello", 0.7).unwrap(), "hi");
        assert_eq!(b.complete("other", 0.8).unwrap(), "warmer");
        assert_eq!(b.complete("other", 0.7).unwrap(), "fallback");
        let key = prompt_key("hello");
        let b = b.with_key(format!("{key}@0.90"), "hot hi");
        assert_eq!(b.complete("hello", 0.9).unwrap(), "hot hi");
        assert_eq!(b.calls().len(), 4);
    }

    #[test]
    fn scripted_miss_and_null() {
        assert!(matches!(ScriptedBackend::new().complete("x", 0.7), Err(BackendError::Unavailable(_))));
        assert!(matches!(NullBackend.complete("x", 0.7), Err(BackendError::Unavailable(_))));
    }

    #[test]
    fn scripted_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        std::fs::write(&path, r#"{"responses": {"*": "[]"}}"#).unwrap();
        assert_eq!(ScriptedBackend::from_file(&path).unwrap().complete("a", 1.0).unwrap(), "[]");
    }

    #[test]
    fn completion_extraction() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"ok"}}]}"#;
        assert_eq!(extract_completion(body).unwrap(), "ok");
        assert!(matches!(extract_completion("{}"), Err(BackendError::BadResponse(_))));
    }

    #[test]
    fn prompt_key_is_sha256_hex() {
        assert_eq!(prompt_key(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
