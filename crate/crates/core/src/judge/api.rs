//! Chat-completion client for a live judge.

use std::env;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{approx_tokens, check_request, Judge, JudgeError, JudgeRequest, JudgeResponse, TokenUsage};

pub const ENV_API_KEY: &str = "JUDGE_API_KEY";
pub const ENV_API_BASE: &str = "JUDGE_API_BASE";
const DEFAULT_BASE: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial_backoff_ms: 1000,
            max_backoff_ms: 30_000,
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = self.multiplier.max(1.0).powi(retry.saturating_sub(1) as i32);
        let ms = (self.initial_backoff_ms as f64 * factor).min(self.max_backoff_ms as f64);
        Duration::from_millis(ms as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiConfig {
    pub base_url: String,
    #[serde(skip_serializing)]
    pub api_key: String,
    pub model: String,
    pub system_prompt: Option<String>,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl ApiConfig {
    /// Reads the key and base URL from `JUDGE_API_KEY` / `JUDGE_API_BASE`.
    pub fn from_env(model: impl Into<String>) -> Result<Self, JudgeError> {
        let api_key = env::var(ENV_API_KEY)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| JudgeError::AuthFailure(format!("{ENV_API_KEY} is not set")))?;
        Ok(Self {
            base_url: env::var(ENV_API_BASE).unwrap_or_else(|_| DEFAULT_BASE.to_string()),
            api_key,
            model: model.into(),
            system_prompt: None,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
        })
    }
}

enum Failure {
    Retry(JudgeError),
    Fatal(JudgeError),
}

pub struct ApiJudge {
    cfg: ApiConfig,
    agent: ureq::Agent,
}

impl ApiJudge {
    pub fn new(cfg: ApiConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs.max(1))))
            .build()
            .into();
        Self { cfg, agent }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    fn body(&self, request: &JudgeRequest) -> Value {
        let mut messages = Vec::new();
        if let Some(system) = &self.cfg.system_prompt {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": request.prompt}));
        json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output,
        })
    }

    fn attempt(&self, request: &JudgeRequest, attempts: u32) -> Result<JudgeResponse, Failure> {
        let sent = self
            .agent
            .post(&self.endpoint())
            .header("Authorization", &format!("Bearer {}", self.cfg.api_key))
            .send_json(self.body(request));
        let mut response = match sent {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(Failure::Retry(JudgeError::Timeout { attempts })),
            Err(e) => {
                return Err(Failure::Retry(JudgeError::Unavailable {
                    attempts,
                    reason: e.to_string(),
                }))
            }
        };
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retry(JudgeError::Unavailable { attempts, reason: e.to_string() }))?;
        match status {
            200..=299 => parse_completion(&text, request).map_err(Failure::Fatal),
            401 | 403 => Err(Failure::Fatal(JudgeError::AuthFailure(format!("HTTP {status}")))),
            408 => Err(Failure::Retry(JudgeError::Timeout { attempts })),
            429 => Err(Failure::Retry(JudgeError::RateLimited { attempts })),
            500..=599 => Err(Failure::Retry(JudgeError::Unavailable {
                attempts,
                reason: format!("HTTP {status}"),
            })),
            _ => Err(Failure::Fatal(JudgeError::InvalidRequest(format!(
                "HTTP {status}: {}",
                text.chars().take(200).collect::<String>()
            )))),
        }
    }
}

fn parse_completion(text: &str, request: &JudgeRequest) -> Result<JudgeResponse, JudgeError> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| JudgeError::InvalidRequest(format!("unreadable completion: {e}")))?;
    let content = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| JudgeError::InvalidRequest("completion has no message content".into()))?
        .to_string();
    let reported = |field: &str| value.pointer(&format!("/usage/{field}")).and_then(Value::as_u64);
    let usage = TokenUsage {
        prompt_tokens: reported("prompt_tokens").unwrap_or_else(|| approx_tokens(&request.prompt)),
        completion_tokens: reported("completion_tokens").unwrap_or_else(|| approx_tokens(&content)),
    };
    Ok(JudgeResponse { text: content, usage })
}

impl Judge for ApiJudge {
    fn complete(&self, request: &JudgeRequest) -> Result<JudgeResponse, JudgeError> {
        check_request(request)?;
        let max = self.cfg.retry.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match self.attempt(request, attempt) {
                Ok(response) => return Ok(response),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(e)) if attempt >= max => return Err(e),
                Err(Failure::Retry(_)) => {
                    thread::sleep(self.cfg.retry.backoff(attempt));
                    attempt += 1;
                }
            }
        }
    }

    fn mode(&self) -> &str {
        "api"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_grows_and_caps() {
        let p = RetryPolicy {
            max_attempts: 6,
            initial_backoff_ms: 100,
            max_backoff_ms: 1000,
            multiplier: 3.0,
        };
        let ms: Vec<u128> = (1..=4).map(|r| p.backoff(r).as_millis()).collect();
        assert_eq!(ms, vec![100, 300, 900, 1000]);
    }

    #[test]
    fn completion_parsing_prefers_reported_usage() {
        let req = JudgeRequest {
            prompt: "a b c".into(),
            temperature: 0.2,
            max_output: 10,
            round: 0,
            batch_index: 0,
            sample_ids: vec![],
        };
        let with = r#"{"choices":[{"message":{"content":"x y"}}],"usage":{"prompt_tokens":7,"completion_tokens":2}}"#;
        assert_eq!(
            parse_completion(with, &req).unwrap().usage,
            TokenUsage { prompt_tokens: 7, completion_tokens: 2 }
        );
        let without = r#"{"choices":[{"message":{"content":"x y"}}]}"#;
        assert_eq!(
            parse_completion(without, &req).unwrap().usage,
            TokenUsage { prompt_tokens: 3, completion_tokens: 2 }
        );
        assert!(parse_completion("{}", &req).is_err());
    }
}
