use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use super::{ChatPayload, ChatTransport, TransportFailure, TransportReply};

/// Offline transport answering from a fixed queue, in order. Pairs with
/// record mode to turn canned responses into a transcript.
pub struct ScriptedTransport {
    replies: Mutex<VecDeque<Result<String, TransportFailure>>>,
}

impl ScriptedTransport {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::with_failures(replies.into_iter().map(|r| Ok(r.into())))
    }

    pub fn with_failures(replies: impl IntoIterator<Item = Result<String, TransportFailure>>) -> Self {
        ScriptedTransport {
            replies: Mutex::new(replies.into_iter().collect()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().expect("queue lock").len()
    }
}

impl ChatTransport for ScriptedTransport {
    fn send(&self, _: &ChatPayload, _: Duration) -> Result<TransportReply, TransportFailure> {
        let next = self.replies.lock().expect("queue lock").pop_front();
        let text = next.unwrap_or_else(|| Err(TransportFailure::Other("scripted replies exhausted".into())))?;
        Ok(TransportReply { text, truncated: false })
    }
}

/// Transport backed by a function of the prompt text.
pub struct FnTransport<F>(pub F);

impl<F> ChatTransport for FnTransport<F>
where
    F: Fn(&str) -> Result<String, TransportFailure> + Send + Sync,
{
    fn send(&self, payload: &ChatPayload, _: Duration) -> Result<TransportReply, TransportFailure> {
        let prompt = payload.messages.last().map_or("", |m| m.content.as_str());
        (self.0)(prompt).map(|text| TransportReply { text, truncated: false })
    }
}
