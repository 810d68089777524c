use std::time::Duration;

use super::{ChatPayload, ChatTransport, TransportFailure, TransportReply};

/// Blocking client for an OpenAI-style `/chat/completions` endpoint.
pub struct HttpTransport {
    endpoint_url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(endpoint_url: String, api_key: Option<String>) -> Self {
        HttpTransport {
            endpoint_url,
            api_key,
        }
    }
}

fn reply_from_body(body: &serde_json::Value) -> Result<TransportReply, TransportFailure> {
    let choice = &body["choices"][0];
    let text = choice["message"]["content"]
        .as_str()
        .ok_or_else(|| TransportFailure::Other("response has no choices[0].message.content".into()))?;
    Ok(TransportReply {
        text: text.to_string(),
        truncated: choice["finish_reason"].as_str() == Some("length"),
    })
}

impl ChatTransport for HttpTransport {
    fn send(&self, payload: &ChatPayload, timeout: Duration) -> Result<TransportReply, TransportFailure> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        let mut request = agent.post(&self.endpoint_url);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let response = request.send_json(payload).map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportFailure::Timeout,
            other => TransportFailure::Other(other.to_string()),
        })?;
        let body: serde_json::Value = response
            .into_body()
            .read_json()
            .map_err(|e| TransportFailure::Other(e.to_string()))?;
        reply_from_body(&body)
    }
}
