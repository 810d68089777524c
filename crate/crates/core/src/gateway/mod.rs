//! Single-turn chat completion with live, record and replay modes.
//!
//! Every request is a fresh conversation carrying exactly one user message.

mod http;
mod scripted;
mod transcript;

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

pub use http::HttpTransport;
pub use scripted::{FnTransport, ScriptedTransport};
pub use transcript::{prompt_hash, Transcript, TranscriptEntry};

use transcript::ReplayCursor;

use crate::dot::extract_dot_block;
use crate::prompt::TaskKind;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GatewayError {
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("transport error after {attempts} attempts: {message}")]
    TransportError { attempts: u32, message: String },
    #[error("no transcript entry for prompt {prompt_hash} (sequence {sequence_no})")]
    ReplayMiss { prompt_hash: String, sequence_no: u64 },
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("transcript sequence {next} does not follow {previous}")]
    TranscriptOrder { previous: u64, next: u64 },
    #[error("transcript: {0}")]
    TranscriptFormat(String),
    #[error("live mode needs an endpoint_url")]
    NoEndpoint,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayMode {
    Live,
    Record,
    #[default]
    Replay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub mode: GatewayMode,
    pub endpoint_url: Option<String>,
    pub model_name: String,
    /// Left to the provider default when unset.
    pub temperature: Option<f64>,
    pub timeout_s: u64,
    pub max_retries: u32,
    pub backoff_base_s: f64,
    /// Name of the environment variable holding the API key. The key itself
    /// is never stored.
    pub api_key_env: String,
    pub refusal_patterns: Vec<String>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            mode: GatewayMode::Replay,
            endpoint_url: None,
            model_name: "gpt-3.5-turbo".into(),
            temperature: None,
            timeout_s: 60,
            max_retries: 3,
            backoff_base_s: 2.0,
            api_key_env: "ONTODISTILL_API_KEY".into(),
            refusal_patterns: [
                "no possible relationships",
                "no relationships exist",
                "there are no relationships",
                "there is no relationship",
                "i'm sorry, but",
                "i cannot help",
                "i can't help",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub prompt_text: String,
    pub request_id: Uuid,
    pub session_id: Uuid,
    pub sequence_no: u64,
}

impl ChatRequest {
    pub fn new(session_id: Uuid, sequence_no: u64, prompt_text: impl Into<String>) -> Self {
        ChatRequest {
            prompt_text: prompt_text.into(),
            request_id: Uuid::new_v4(),
            session_id,
            sequence_no,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    Live,
    Replay,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub latency_ms: u64,
    pub transport: TransportKind,
    pub truncated: bool,
    pub attempts: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Outgoing body in the common chat-completions shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatPayload {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

impl ChatPayload {
    /// A fresh conversation: one user message, no history.
    pub fn single_turn(config: &GatewayConfig, prompt: &str) -> Self {
        ChatPayload {
            model: config.model_name.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt.to_string(),
            }],
            temperature: config.temperature,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransportReply {
    pub text: String,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TransportFailure {
    Timeout,
    Other(String),
}

pub trait ChatTransport: Send + Sync {
    fn send(&self, payload: &ChatPayload, timeout: Duration) -> Result<TransportReply, TransportFailure>;
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, duration: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

pub struct Gateway {
    config: GatewayConfig,
    transport: Option<Arc<dyn ChatTransport>>,
    sleeper: Arc<dyn Sleeper>,
    transcript: Transcript,
    cursor: ReplayCursor,
    calls: u64,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.config.mode)
            .field("transcript_len", &self.transcript.len())
            .field("calls", &self.calls)
            .finish()
    }
}

impl Gateway {
    /// Replay-only gateway answering from `transcript`.
    pub fn replay(transcript: Transcript) -> Self {
        Gateway {
            config: GatewayConfig::default(),
            transport: None,
            sleeper: Arc::new(ThreadSleeper),
            transcript,
            cursor: ReplayCursor::default(),
            calls: 0,
        }
    }

    /// Live or record gateway over `transport`. In record mode responses
    /// are appended to a fresh transcript.
    pub fn with_transport(config: GatewayConfig, transport: Arc<dyn ChatTransport>) -> Self {
        Gateway {
            config,
            transport: Some(transport),
            sleeper: Arc::new(ThreadSleeper),
            transcript: Transcript::new(),
            cursor: ReplayCursor::default(),
            calls: 0,
        }
    }

    /// Builds the gateway `config` describes; live/record use HTTP.
    pub fn from_config(config: GatewayConfig, transcript: Transcript) -> Result<Self, GatewayError> {
        match config.mode {
            GatewayMode::Replay => {
                let mut g = Gateway::replay(transcript);
                g.config = config;
                Ok(g)
            }
            GatewayMode::Live | GatewayMode::Record => {
                let url = config.endpoint_url.clone().ok_or(GatewayError::NoEndpoint)?;
                let key = std::env::var(&config.api_key_env).ok();
                let transport = Arc::new(HttpTransport::new(url, key));
                let mut g = Gateway::with_transport(config, transport);
                g.transcript = transcript;
                Ok(g)
            }
        }
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn mode(&self) -> GatewayMode {
        self.config.mode
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    /// Requests answered so far (including replayed ones).
    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn complete(&mut self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        if request.prompt_text.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let hash = prompt_hash(&request.prompt_text);
        let response = match (self.config.mode, &self.transport) {
            (GatewayMode::Replay, _) | (_, None) => {
                let entry = self
                    .cursor
                    .take(&self.transcript, &hash, request.sequence_no)
                    .ok_or_else(|| GatewayError::ReplayMiss {
                        prompt_hash: hash.clone(),
                        sequence_no: request.sequence_no,
                    })?;
                ChatResponse {
                    text: entry.response_text.clone(),
                    latency_ms: 0,
                    transport: TransportKind::Replay,
                    truncated: false,
                    attempts: 1,
                }
            }
            (mode, Some(transport)) => {
                let transport = Arc::clone(transport);
                let response = self.send_with_retries(transport.as_ref(), &request.prompt_text)?;
                if mode == GatewayMode::Record {
                    self.transcript.push(TranscriptEntry {
                        prompt_hash: hash,
                        sequence_no: request.sequence_no,
                        response_text: response.text.clone(),
                    })?;
                }
                response
            }
        };
        self.calls += 1;
        Ok(response)
    }

    fn send_with_retries(
        &self,
        transport: &dyn ChatTransport,
        prompt: &str,
    ) -> Result<ChatResponse, GatewayError> {
        let payload = ChatPayload::single_turn(&self.config, prompt);
        let timeout = Duration::from_secs(self.config.timeout_s);
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let started = Instant::now();
            match transport.send(&payload, timeout) {
                Ok(reply) => {
                    return Ok(ChatResponse {
                        text: reply.text,
                        latency_ms: started.elapsed().as_millis() as u64,
                        transport: TransportKind::Live,
                        truncated: reply.truncated,
                        attempts,
                    })
                }
                Err(failure) => {
                    if attempts > self.config.max_retries {
                        return Err(match failure {
                            TransportFailure::Timeout => GatewayError::Timeout { attempts },
                            TransportFailure::Other(message) => {
                                GatewayError::TransportError { attempts, message }
                            }
                        });
                    }
                    let backoff = self.config.backoff_base_s * 2f64.powi(attempts as i32 - 1);
                    self.sleeper.sleep(Duration::from_secs_f64(backoff));
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseClass {
    Ok,
    Empty,
    Refusal,
}

/// Empty when there is nothing to extract for `task` (no DOT block, or no
/// delimited line); Refusal when such a body matches a refusal pattern.
pub fn detect_refusal_or_empty(
    text: &str,
    task: TaskKind,
    delimiter: char,
    refusal_patterns: &[String],
) -> ResponseClass {
    if text.trim().is_empty() {
        return ResponseClass::Empty;
    }
    let has_content = match task {
        TaskKind::Hierarchy => extract_dot_block(text).is_ok(),
        _ => text.lines().any(|l| l.contains(delimiter)),
    };
    if has_content {
        return ResponseClass::Ok;
    }
    let lower = text.to_lowercase();
    if refusal_patterns.iter().any(|p| lower.contains(&p.to_lowercase())) {
        ResponseClass::Refusal
    } else {
        ResponseClass::Empty
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Scripted {
        replies: Mutex<Vec<Result<TransportReply, TransportFailure>>>,
        seen: Mutex<Vec<ChatPayload>>,
    }

    impl Scripted {
        fn new(mut replies: Vec<Result<TransportReply, TransportFailure>>) -> Arc<Self> {
            replies.reverse();
            Arc::new(Scripted {
                replies: Mutex::new(replies),
                seen: Mutex::new(Vec::new()),
            })
        }
    }

    impl ChatTransport for Scripted {
        fn send(&self, payload: &ChatPayload, _: Duration) -> Result<TransportReply, TransportFailure> {
            self.seen.lock().unwrap().push(payload.clone());
            self.replies.lock().unwrap().pop().expect("scripted reply")
        }
    }

    #[derive(Default)]
    struct RecordingSleeper(Mutex<Vec<Duration>>);

    impl Sleeper for RecordingSleeper {
        fn sleep(&self, d: Duration) {
            self.0.lock().unwrap().push(d);
        }
    }

    fn ok(text: &str) -> Result<TransportReply, TransportFailure> {
        Ok(TransportReply {
            text: text.into(),
            truncated: false,
        })
    }

    fn config(mode: GatewayMode) -> GatewayConfig {
        GatewayConfig {
            mode,
            ..GatewayConfig::default()
        }
    }

    #[test]
    fn two_timeouts_then_success() {
        let transport = Scripted::new(vec![
            Err(TransportFailure::Timeout),
            Err(TransportFailure::Timeout),
            ok("digraph { a }"),
        ]);
        let sleeper = Arc::new(RecordingSleeper::default());
        let mut g = Gateway::with_transport(config(GatewayMode::Live), transport.clone())
            .with_sleeper(sleeper.clone());
        let r = g.complete(&ChatRequest::new(Uuid::nil(), 1, "prompt")).unwrap();
        assert_eq!(r.attempts, 3);
        assert_eq!(r.transport, TransportKind::Live);
        assert_eq!(
            *sleeper.0.lock().unwrap(),
            vec![Duration::from_secs(2), Duration::from_secs(4)]
        );
    }

    #[test]
    fn retries_exhausted() {
        let transport = Scripted::new(vec![Err(TransportFailure::Timeout); 4]);
        let mut g = Gateway::with_transport(config(GatewayMode::Live), transport)
            .with_sleeper(Arc::new(RecordingSleeper::default()));
        assert_eq!(
            g.complete(&ChatRequest::new(Uuid::nil(), 1, "p")).unwrap_err(),
            GatewayError::Timeout { attempts: 4 }
        );
    }

    #[test]
    fn payload_is_single_turn() {
        let transport = Scripted::new(vec![ok("a"), ok("b")]);
        let mut g = Gateway::with_transport(config(GatewayMode::Live), transport.clone());
        g.complete(&ChatRequest::new(Uuid::nil(), 1, "first")).unwrap();
        g.complete(&ChatRequest::new(Uuid::nil(), 2, "second")).unwrap();
        for p in transport.seen.lock().unwrap().iter() {
            let json = serde_json::to_value(p).unwrap();
            let messages = json["messages"].as_array().unwrap();
            assert_eq!(messages.len(), 1);
            assert_eq!(messages[0]["role"], "user");
        }
    }

    #[test]
    fn record_then_replay() {
        let transport = Scripted::new(vec![ok("one"), ok("two")]);
        let mut rec = Gateway::with_transport(config(GatewayMode::Record), transport);
        let a = rec.complete(&ChatRequest::new(Uuid::nil(), 1, "p1")).unwrap();
        let b = rec.complete(&ChatRequest::new(Uuid::nil(), 2, "p2")).unwrap();
        let mut rep = Gateway::replay(rec.transcript().clone());
        let a2 = rep.complete(&ChatRequest::new(Uuid::nil(), 1, "p1")).unwrap();
        let b2 = rep.complete(&ChatRequest::new(Uuid::nil(), 2, "p2")).unwrap();
        assert_eq!((a.text, b.text), (a2.text, b2.text));
        assert_eq!(a2.transport, TransportKind::Replay);
        assert!(matches!(
            rep.complete(&ChatRequest::new(Uuid::nil(), 3, "p3")),
            Err(GatewayError::ReplayMiss { .. })
        ));
    }

    #[test]
    fn empty_prompt() {
        let mut g = Gateway::replay(Transcript::new());
        assert_eq!(
            g.complete(&ChatRequest::new(Uuid::nil(), 1, "  \n")).unwrap_err(),
            GatewayError::EmptyPrompt
        );
    }

    #[test]
    fn response_classes() {
        let patterns = GatewayConfig::default().refusal_patterns;
        let refusal = "There are no possible relationships between Aggressive and Aggressive.";
        assert_eq!(
            detect_refusal_or_empty(refusal, TaskKind::Relationship, '|', &patterns),
            ResponseClass::Refusal
        );
        assert_eq!(
            detect_refusal_or_empty("  ", TaskKind::Hierarchy, '|', &patterns),
            ResponseClass::Empty
        );
        assert_eq!(
            detect_refusal_or_empty("digraph { a -> b }", TaskKind::Hierarchy, '|', &patterns),
            ResponseClass::Ok
        );
        assert_eq!(
            detect_refusal_or_empty("Some chatter.", TaskKind::Definition, '@', &patterns),
            ResponseClass::Empty
        );
    }
}
