//! Blocking HTTP client for the REST API.

use std::time::Duration;

use serde_json::Value;

use crate::command::{Command, Method, ACTOR_HEADER, IDEMPOTENCY_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The service answered with an error document.
    #[error("{code}: {message}")]
    Api {
        status: u16,
        code: String,
        message: String,
        body: Value,
    },
    #[error("transport error: {0}")]
    Transport(String),
}

pub struct Client {
    base: String,
    agent: ureq::Agent,
}

impl Client {
    pub fn new(base: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self {
            base: base.trim_end_matches('/').to_owned(),
            agent,
        }
    }

    pub fn execute(&self, actor: Option<&str>, command: &Command) -> Result<Value, ClientError> {
        let call = command.to_http();
        let url = format!("{}{}", self.base, call.path);
        let transport = |e: ureq::Error| ClientError::Transport(e.to_string());
        let mut response = match call.method {
            Method::Get => {
                let mut req = self.agent.get(&url);
                for (k, v) in &call.query {
                    req = req.query(k, v);
                }
                if let Some(a) = actor {
                    req = req.header(ACTOR_HEADER, a);
                }
                req.call().map_err(transport)?
            }
            Method::Post => {
                let mut req = self.agent.post(&url).header("Content-Type", "application/json");
                if let Some(a) = actor {
                    req = req.header(ACTOR_HEADER, a);
                }
                if let Some(key) = &call.idempotency_key {
                    req = req.header(IDEMPOTENCY_HEADER, key);
                }
                let body = call.body.unwrap_or(Value::Null).to_string();
                req.send(body.as_str()).map_err(transport)?
            }
        };
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(transport)?;
        let body: Value = serde_json::from_str(&text)
            .map_err(|e| ClientError::Transport(format!("undecodable response ({status}): {e}")))?;
        if (200..300).contains(&status) {
            return Ok(body);
        }
        let field = |name: &str| {
            body.pointer(&format!("/error/{name}"))
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_owned()
        };
        Err(ClientError::Api {
            status,
            code: field("code"),
            message: field("message"),
            body,
        })
    }

    pub fn health(&self) -> Result<(u16, Value), ClientError> {
        let mut response = self
            .agent
            .get(&format!("{}/health", self.base))
            .call()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let body = serde_json::from_str(&text).unwrap_or(Value::Null);
        Ok((status, body))
    }
}
