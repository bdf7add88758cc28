//! Client for an external completion endpoint.
//!
//! The request is a JSON object with the rendered prompt. The response may
//! be plain text, `{"text": ..}`, `{"completion": ..}`, or a chat-style
//! `{"choices": [{"message": {"content": ..}}]}` body.

use super::{Reasoner, ReasonerError, ReasonerRequest};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::time::{Duration, Instant};

pub const DEFAULT_TIMEOUT_S: f64 = 2.0;
pub const TOKEN_ENV: &str = "UUV_REASONER_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub url: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default)]
    pub model: Option<String>,
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_S
}

/// One request/response pair, kept verbatim for the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: String,
    pub response: String,
    pub latency_s: f64,
}

pub struct EndpointReasoner {
    pub config: EndpointConfig,
    agent: ureq::Agent,
    token: Option<String>,
    exchanges: Vec<Exchange>,
}

impl EndpointReasoner {
    pub fn new(config: EndpointConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(true)
            .build()
            .into();
        Self {
            config,
            agent,
            token: std::env::var(TOKEN_ENV).ok(),
            exchanges: Vec::new(),
        }
    }
}

/// Pull the completion text out of a response body.
pub fn extract_completion(body: &str) -> Result<String, ReasonerError> {
    let v: Value = match serde_json::from_str(body) {
        Ok(v) => v,
        Err(_) if !body.trim().is_empty() => return Ok(body.to_string()),
        Err(_) => return Err(ReasonerError::Malformed("empty response body".into())),
    };
    let text = v
        .get("text")
        .or_else(|| v.get("completion"))
        .or_else(|| v.pointer("/choices/0/message/content"))
        .or_else(|| v.pointer("/choices/0/text"))
        .and_then(Value::as_str);
    match (text, &v) {
        (Some(t), _) => Ok(t.to_string()),
        (None, Value::String(s)) => Ok(s.clone()),
        _ => Err(ReasonerError::Malformed(format!("no completion text in {body:.200}"))),
    }
}

impl Reasoner for EndpointReasoner {
    fn generate(&mut self, request: &ReasonerRequest) -> Result<String, ReasonerError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "prompt": request.prompt.text(),
            "retry_index": request.prompt.retry_index,
        })
        .to_string();
        let mut call = self
            .agent
            .post(&self.config.url)
            .header("Content-Type", "application/json");
        if let Some(tok) = &self.token {
            call = call.header("Authorization", &format!("Bearer {tok}"));
        }
        let start = Instant::now();
        let result = call
            .send(body.as_bytes())
            .and_then(|mut r| r.body_mut().read_to_string());
        let latency_s = start.elapsed().as_secs_f64();
        let response = match result {
            Ok(text) => text,
            Err(ureq::Error::Timeout(_)) => return Err(ReasonerError::Timeout(self.config.timeout_s)),
            Err(e) => {
                self.exchanges.push(Exchange {
                    request: body,
                    response: format!("error: {e}"),
                    latency_s,
                });
                return Err(ReasonerError::Transport(e.to_string()));
            }
        };
        self.exchanges.push(Exchange {
            request: body,
            response: response.clone(),
            latency_s,
        });
        extract_completion(&response)
    }

    fn name(&self) -> &str {
        "endpoint"
    }

    fn take_exchanges(&mut self) -> Vec<Exchange> {
        std::mem::take(&mut self.exchanges)
    }
}
