//! Chat-completions endpoint access.
//!
//! [`ChatEndpoint`] is the seam between analysis code and the network:
//! production uses [`ChatClient`] against an OpenAI-compatible endpoint,
//! tests use closures or a local mock server. Configuration comes from
//! `LEXI_LLM_BASE_URL`, `LEXI_LLM_API_KEY`, and `LEXI_LLM_MODEL`.

use std::time::Duration;

use once_cell::sync::Lazy;
use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("missing configuration: {0}")]
    MissingConfig(&'static str),
    #[error("transport: {0}")]
    Transport(String),
    #[error("http {status}: {body}")]
    Http { status: u16, body: String },
    #[error("empty reply")]
    EmptyReply,
    #[error("endpoint refused: {0}")]
    Refused(String),
    #[error("bad reply: {0}")]
    BadReply(String),
}

/// Anything that can answer a single-turn prompt. Closures implement this,
/// which keeps tests free of network plumbing.
pub trait ChatEndpoint {
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

impl<F> ChatEndpoint for F
where
    F: Fn(&str) -> Result<String, LlmError>,
{
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        self(prompt)
    }
}

static REFUSAL: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)^\s*(i'?m sorry|i am sorry|i cannot|i can'?t|sorry[,.])").unwrap()
});

/// Heuristic for "the model declined": empty replies or stock apology
/// openers.
pub fn is_refusal(reply: &str) -> bool {
    reply.trim().is_empty() || REFUSAL.is_match(reply)
}

#[derive(Debug, Clone)]
pub struct ChatConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub timeout: Duration,
    /// Transport-level retries (the refusal policy lives with the callers).
    pub max_retries: u32,
    pub backoff_base: Duration,
}

impl ChatConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> ChatConfig {
        ChatConfig {
            base_url: base_url.into(),
            api_key: None,
            model: model.into(),
            temperature: 0.0,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            backoff_base: Duration::from_millis(250),
        }
    }

    /// Read `LEXI_LLM_BASE_URL`, `LEXI_LLM_API_KEY` (optional), and
    /// `LEXI_LLM_MODEL` from the environment.
    pub fn from_env() -> Result<ChatConfig, LlmError> {
        let base_url = std::env::var("LEXI_LLM_BASE_URL")
            .map_err(|_| LlmError::MissingConfig("LEXI_LLM_BASE_URL"))?;
        let model = std::env::var("LEXI_LLM_MODEL")
            .map_err(|_| LlmError::MissingConfig("LEXI_LLM_MODEL"))?;
        let mut cfg = ChatConfig::new(base_url, model);
        cfg.api_key = std::env::var("LEXI_LLM_API_KEY").ok();
        Ok(cfg)
    }
}

#[cfg(feature = "net")]
pub use net::ChatClient;

#[cfg(feature = "net")]
mod net {
    use super::*;

    /// Blocking client for the OpenAI-compatible `/chat/completions` wire
    /// format: temperature 0, a single user message, first choice read back.
    pub struct ChatClient {
        cfg: ChatConfig,
        agent: ureq::Agent,
    }

    impl ChatClient {
        pub fn new(cfg: ChatConfig) -> ChatClient {
            let agent = ureq::Agent::config_builder()
                .timeout_global(Some(cfg.timeout))
                .http_status_as_error(false)
                .build()
                .into();
            ChatClient { cfg, agent }
        }

        pub fn from_env() -> Result<ChatClient, LlmError> {
            Ok(ChatClient::new(ChatConfig::from_env()?))
        }

        pub fn config(&self) -> &ChatConfig {
            &self.cfg
        }

        fn request_once(&self, url: &str, body: &serde_json::Value) -> Result<String, LlmError> {
            let mut req = self
                .agent
                .post(url)
                .header("content-type", "application/json");
            if let Some(key) = &self.cfg.api_key {
                req = req.header("authorization", &format!("Bearer {key}"));
            }
            let mut resp = req
                .send_json(body)
                .map_err(|e| LlmError::Transport(e.to_string()))?;
            let status = resp.status().as_u16();
            let text = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| LlmError::Transport(e.to_string()))?;
            if status != 200 {
                return Err(LlmError::Http { status, body: text });
            }
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| LlmError::BadReply(format!("invalid JSON: {e}")))?;
            let content = value
                .pointer("/choices/0/message/content")
                .and_then(|v| v.as_str())
                .ok_or_else(|| LlmError::BadReply("no choices[0].message.content".into()))?;
            let content = content.trim();
            if content.is_empty() {
                return Err(LlmError::EmptyReply);
            }
            Ok(content.to_string())
        }
    }

    impl ChatEndpoint for ChatClient {
        fn complete(&self, prompt: &str) -> Result<String, LlmError> {
            let url = format!(
                "{}/chat/completions",
                self.cfg.base_url.trim_end_matches('/')
            );
            let body = serde_json::json!({
                "model": self.cfg.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": self.cfg.temperature,
            });

            let mut delay = self.cfg.backoff_base;
            let mut last_err = LlmError::Transport("no attempts made".into());
            for attempt in 0..=self.cfg.max_retries {
                match self.request_once(&url, &body) {
                    Ok(reply) => return Ok(reply),
                    Err(e @ LlmError::Transport(_))
                    | Err(e @ LlmError::Http { status: 429, .. })
                    | Err(e @ LlmError::Http { status: 500..=599, .. }) => {
                        log::warn!("chat request attempt {attempt} failed: {e}");
                        last_err = e;
                        if attempt < self.cfg.max_retries {
                            std::thread::sleep(delay);
                            delay *= 2;
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(last_err)
        }
    }
}
