//! OpenAI-compatible chat-completions provider over blocking HTTP.

use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use crate::error::{Error, Result};

use super::{ChatRequest, ChatResponse, Provider, Role, Usage};

pub struct HttpProvider {
    base_url: String,
    api_key: String,
    provider_id: String,
    timeout: Duration,
    http: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ApiChoice {
    message: ApiMessage,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ApiMessage {
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct ApiUsage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

#[derive(Deserialize)]
struct ApiResponse {
    choices: Vec<ApiChoice>,
    #[serde(default)]
    usage: Option<ApiUsage>,
}

impl HttpProvider {
    /// Credentials come from the named environment variable; the base URL
    /// can point at any OpenAI-compatible endpoint.
    pub fn new(
        provider_id: impl Into<String>,
        base_url: impl Into<String>,
        api_key_env: &str,
        timeout_secs: u64,
    ) -> Result<Self> {
        let api_key =
            std::env::var(api_key_env).map_err(|_| Error::Auth(api_key_env.to_string()))?;
        let timeout = Duration::from_secs(timeout_secs);
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            provider_id: provider_id.into(),
            timeout,
            http: reqwest::blocking::Client::builder()
                .timeout(timeout)
                .build()
                .map_err(|e| Error::Http(e.to_string()))?,
        })
    }
}

impl Provider for HttpProvider {
    fn complete_once(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let body = json!({
            "model": request.model_id,
            "messages": request.messages.iter().map(|m| json!({
                "role": match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                },
                "content": m.content,
            })).collect::<Vec<_>>(),
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
        });

        let started = Instant::now();
        let response = self
            .http
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    Error::Timeout(self.timeout.as_millis() as u64)
                } else {
                    Error::Http(e.to_string())
                }
            })?;
        let latency_ms = started.elapsed().as_millis() as u64;

        let status = response.status().as_u16();
        let text = response.text().map_err(|e| Error::Http(e.to_string()))?;
        if status == 429 {
            return Err(Error::RateLimited {
                attempts: 1,
                message: text,
            });
        }
        if status == 401 || status == 403 {
            return Err(Error::Auth(format!("provider rejected credentials: {text}")));
        }
        if status >= 400 {
            return Err(Error::Provider { status, body: text });
        }

        let parsed: ApiResponse = serde_json::from_str(&text).map_err(|e| Error::Provider {
            status,
            body: format!("unparseable response body ({e}): {text}"),
        })?;
        let choice = parsed.choices.into_iter().next().ok_or(Error::Provider {
            status,
            body: "response has no choices".into(),
        })?;
        Ok(ChatResponse {
            content: choice.message.content.unwrap_or_default(),
            finish_reason: choice.finish_reason.unwrap_or_else(|| "stop".into()),
            usage: parsed
                .usage
                .map(|u| Usage {
                    prompt_tokens: u.prompt_tokens,
                    completion_tokens: u.completion_tokens,
                })
                .unwrap_or_default(),
            latency_ms,
        })
    }

    fn id(&self) -> &str {
        &self.provider_id
    }
}
