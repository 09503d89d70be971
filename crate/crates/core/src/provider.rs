//! Text-generation backends behind one trait: a scripted offline provider
//! for tests and reproducible runs, and an OpenAI-compatible HTTP client.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::sim::ProcessPool;

#[derive(Clone, Debug, PartialEq)]
pub struct CompletionRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Stable id; sent as the idempotency key so retries are not billed twice.
    pub request_id: String,
}

impl CompletionRequest {
    pub fn new(system: impl Into<String>, user: impl Into<String>, request_id: impl Into<String>) -> Self {
        Self { system: system.into(), user: user.into(), temperature: 0.0, max_tokens: 2048, request_id: request_id.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// The provider stopped at the token limit.
    pub truncated: bool,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ProviderError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("environment variable {0} is not set")]
    MissingKey(String),
    #[error("response script: {0}")]
    Script(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no scripted response matches request {0}")]
    NoMatch(String),
}

impl ProviderError {
    fn retryable(&self) -> bool {
        match self {
            ProviderError::Timeout | ProviderError::Transport(_) => true,
            ProviderError::Status { code, .. } => *code == 429 || *code >= 500,
            _ => false,
        }
    }
}

pub trait TextProvider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError>;

    fn name(&self) -> &str;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedFailure {
    Timeout,
    ServerError,
}

/// One rule of a response script. A rule matches when every `contains`
/// string occurs in the request (system and user text joined by a newline)
/// and `pattern`, if given, matches. `$1`-style references in `response`
/// expand from the pattern's captures.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default)]
    pub pattern: Option<String>,
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default)]
    pub fail: Option<ScriptedFailure>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseScript {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    /// Used when no rule matches; without it an unmatched request is an error.
    #[serde(default)]
    pub default: Option<String>,
}

/// Offline provider answering from a [`ResponseScript`]. Responses depend
/// only on the request text, so runs are reproducible under any thread
/// count. Never touches the network.
pub struct ScriptedProvider {
    rules: Vec<(ScriptRule, Option<Regex>)>,
    default: Option<String>,
    calls: AtomicUsize,
    log: Mutex<Vec<CompletionRequest>>,
}

impl ScriptedProvider {
    pub fn new(script: ResponseScript) -> Result<Self, ProviderError> {
        let rules = script
            .rules
            .into_iter()
            .map(|r| {
                let re = r
                    .pattern
                    .as_deref()
                    .map(Regex::new)
                    .transpose()
                    .map_err(|e| ProviderError::Script(e.to_string()))?;
                if r.response.is_none() && r.fail.is_none() {
                    return Err(ProviderError::Script("rule needs `response` or `fail`".into()));
                }
                Ok((r, re))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { rules, default: script.default, calls: AtomicUsize::new(0), log: Mutex::new(Vec::new()) })
    }

    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path).map_err(|e| ProviderError::Script(format!("{}: {e}", path.display())))?;
        let script: ResponseScript =
            serde_json::from_str(&text).map_err(|e| ProviderError::Script(format!("{}: {e}", path.display())))?;
        Self::new(script)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.log.lock().expect("log lock").clone()
    }
}

impl TextProvider for ScriptedProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log.lock().expect("log lock").push(request.clone());
        let haystack = format!("{}\n{}", request.system, request.user);
        for (rule, re) in &self.rules {
            if !rule.contains.iter().all(|c| haystack.contains(c.as_str())) {
                continue;
            }
            let caps = match re {
                Some(re) => match re.captures(&haystack) {
                    Some(c) => Some(c),
                    None => continue,
                },
                None => None,
            };
            match rule.fail {
                Some(ScriptedFailure::Timeout) => return Err(ProviderError::Timeout),
                Some(ScriptedFailure::ServerError) => {
                    return Err(ProviderError::Status { code: 500, body: "scripted failure".into() })
                }
                None => {}
            }
            let template = rule.response.as_deref().unwrap_or_default();
            let text = match caps {
                Some(c) => {
                    let mut out = String::new();
                    c.expand(template, &mut out);
                    out
                }
                None => template.to_string(),
            };
            return Ok(Completion { text, truncated: false });
        }
        self.default
            .clone()
            .map(|text| Completion { text, truncated: false })
            .ok_or_else(|| ProviderError::NoMatch(request.request_id.clone()))
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpProviderConfig {
    /// Base URL up to and including the API version, e.g. `https://host/v1`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub max_concurrency: usize,
}

impl Default for HttpProviderConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120,
            max_attempts: 3,
            backoff_ms: 1000,
            max_concurrency: 4,
        }
    }
}

/// OpenAI-compatible chat-completions client with bounded concurrency and
/// exponential backoff on timeouts, 429 and 5xx.
pub struct HttpProvider {
    config: HttpProviderConfig,
    key: String,
    client: reqwest::blocking::Client,
    slots: ProcessPool,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Result<Self, ProviderError> {
        let key = std::env::var(&config.api_key_env).map_err(|_| ProviderError::MissingKey(config.api_key_env.clone()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let slots = ProcessPool::new(config.max_concurrency.max(1));
        Ok(Self { config, key, client, slots })
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<Completion, ProviderError> {
        let body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let resp = self
            .client
            .post(url)
            .bearer_auth(&self.key)
            .header("Idempotency-Key", &request.request_id)
            .json(&body)
            .send()
            .map_err(|e| if e.is_timeout() { ProviderError::Timeout } else { ProviderError::Transport(e.to_string()) })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Status { code: status.as_u16(), body: text.chars().take(500).collect() });
        }
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        let choice = &v["choices"][0];
        let content = choice["message"]["content"]
            .as_str()
            .ok_or_else(|| ProviderError::Malformed("missing choices[0].message.content".into()))?;
        Ok(Completion { text: content.to_string(), truncated: choice["finish_reason"] == "length" })
    }
}

impl TextProvider for HttpProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError> {
        let _permit = self.slots.acquire();
        let mut attempt = 1;
        loop {
            match self.attempt(request) {
                Err(e) if e.retryable() && attempt < self.config.max_attempts => {
                    let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1));
                    log::warn!("{} attempt {attempt} failed ({e}); retrying in {wait} ms", request.request_id);
                    std::thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn name(&self) -> &str {
        "http"
    }
}

/// Provider selection as written in config files.
#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProviderConfig {
    #[default]
    None,
    Scripted {
        script: PathBuf,
    },
    Http(HttpProviderConfig),
}

pub fn build_provider(config: &ProviderConfig) -> Result<Option<Box<dyn TextProvider>>, ProviderError> {
    Ok(match config {
        ProviderConfig::None => None,
        ProviderConfig::Scripted { script } => Some(Box::new(ScriptedProvider::from_file(script)?)),
        ProviderConfig::Http(c) => Some(Box::new(HttpProvider::new(c.clone())?)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script(rules: serde_json::Value) -> ScriptedProvider {
        ScriptedProvider::new(serde_json::from_value(rules).unwrap()).unwrap()
    }

    #[test]
    fn rules_match_in_order_and_expand_captures() {
        let p = script(json!({
            "rules": [
                {"contains": ["alpha"], "response": "first"},
                {"pattern": "<i>(.*)</i>", "response": "got $1"},
                {"contains": ["boom"], "fail": "timeout"}
            ],
            "default": "fallback"
        }));
        let ask = |u: &str| p.complete(&CompletionRequest::new("sys", u, "r"));
        assert_eq!(ask("alpha <i>x</i>").unwrap().text, "first");
        assert_eq!(ask("<i>hello</i>").unwrap().text, "got hello");
        assert_eq!(ask("boom").unwrap_err(), ProviderError::Timeout);
        assert_eq!(ask("other").unwrap().text, "fallback");
        assert_eq!(p.calls(), 4);
    }

    #[test]
    fn unmatched_without_default_is_an_error() {
        let p = script(json!({"rules": []}));
        assert!(matches!(p.complete(&CompletionRequest::new("", "x", "id7")), Err(ProviderError::NoMatch(id)) if id == "id7"));
    }

    #[test]
    fn rule_without_outcome_is_rejected() {
        let s: ResponseScript = serde_json::from_value(json!({"rules": [{"contains": ["a"]}]})).unwrap();
        assert!(ScriptedProvider::new(s).is_err());
    }

    #[test]
    fn http_provider_needs_its_key() {
        let cfg = HttpProviderConfig { api_key_env: "VFORGE_SURELY_UNSET_KEY".into(), ..Default::default() };
        assert!(matches!(HttpProvider::new(cfg), Err(ProviderError::MissingKey(_))));
    }

    #[test]
    fn provider_config_forms() {
        let c: ProviderConfig = serde_json::from_value(json!({"type": "scripted", "script": "s.json"})).unwrap();
        assert_eq!(c, ProviderConfig::Scripted { script: "s.json".into() });
        let h: ProviderConfig = serde_json::from_value(json!({"type": "http", "model": "m"})).unwrap();
        assert!(matches!(h, ProviderConfig::Http(HttpProviderConfig { ref model, .. }) if model == "m"));
    }
}
