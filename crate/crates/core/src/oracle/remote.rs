use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::{Backend, OracleError, OracleRequest};

fn default_temperature() -> f64 {
    0.0
}
fn default_max_retries() -> u32 {
    4
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_timeout_secs() -> u64 {
    120
}
fn default_key_env() -> String {
    "AUTOSKILL_API_KEY".into()
}
fn default_max_reasks() -> u32 {
    1
}

/// Chat-completion endpoint settings. The key itself is only ever read
/// from the environment variable named by `key_env`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_key_env")]
    pub key_env: String,
    #[serde(default = "default_max_reasks")]
    pub max_reasks: u32,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: default_temperature(),
            max_retries: default_max_retries(),
            backoff_ms: default_backoff_ms(),
            timeout_secs: default_timeout_secs(),
            key_env: default_key_env(),
            max_reasks: default_max_reasks(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, OracleError> {
        toml::from_str(text).map_err(|e| OracleError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, OracleError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| OracleError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, OracleError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| OracleError::Transport(e.to_string()))?;
        Ok(RemoteBackend { config, client })
    }

    fn body(&self, prompt: &str) -> Json {
        json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [
                {"role": "system", "content": "You are a careful assistant for a robot arm. Follow the requested output format exactly."},
                {"role": "user", "content": prompt},
            ],
        })
    }
}

fn retryable(status: reqwest::StatusCode) -> bool {
    status == reqwest::StatusCode::TOO_MANY_REQUESTS || status.is_server_error()
}

impl Backend for RemoteBackend {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn complete(&self, _req: &OracleRequest, prompt: &str) -> Result<String, OracleError> {
        let key = std::env::var(&self.config.key_env).ok();
        let body = self.body(prompt);
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                log::warn!("retrying chat request in {wait} ms ({last})");
                std::thread::sleep(Duration::from_millis(wait));
            }
            let mut rb = self.client.post(&self.config.endpoint).json(&body);
            if let Some(k) = &key {
                rb = rb.bearer_auth(k);
            }
            let resp = match rb.send() {
                Ok(r) => r,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            if retryable(status) {
                last = format!("HTTP {status}");
                continue;
            }
            if !status.is_success() {
                return Err(OracleError::Transport(format!("HTTP {status}")));
            }
            let doc: Json = resp.json().map_err(|e| OracleError::Transport(e.to_string()))?;
            return doc["choices"][0]["message"]["content"]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| OracleError::Transport("reply has no choices[0].message.content".into()));
        }
        if last.starts_with("HTTP 429") {
            Err(OracleError::RateLimited(self.config.max_retries + 1))
        } else {
            Err(OracleError::Transport(last))
        }
    }
}
