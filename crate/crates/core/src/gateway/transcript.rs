use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::checksum::sha256_hex;

/// Hash of a prompt with trailing whitespace removed from every line and
/// from the end, so editor noise does not break replay.
pub fn prompt_hash(text: &str) -> String {
    let normalized: Vec<&str> = text.lines().map(str::trim_end).collect();
    sha256_hex(normalized.join("\n").trim_end().as_bytes())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptEntry {
    pub prompt_hash: String,
    pub sequence_no: u64,
    pub response_text: String,
}

/// Recorded responses, one JSON object per line.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: TranscriptEntry) -> Result<(), GatewayError> {
        if let Some(last) = self.entries.last() {
            if entry.sequence_no <= last.sequence_no {
                return Err(GatewayError::TranscriptOrder {
                    previous: last.sequence_no,
                    next: entry.sequence_no,
                });
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Convenience for hand-authored fixtures: hashes `prompt` and appends.
    pub fn record(&mut self, prompt: &str, sequence_no: u64, response: &str) -> Result<(), GatewayError> {
        self.push(TranscriptEntry {
            prompt_hash: prompt_hash(prompt),
            sequence_no,
            response_text: response.to_string(),
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }

    pub fn from_jsonl(text: &str) -> Result<Self, GatewayError> {
        Self::read_jsonl(text.as_bytes())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self, GatewayError> {
        let mut t = Transcript::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| GatewayError::TranscriptFormat(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(&line)
                .map_err(|e| GatewayError::TranscriptFormat(format!("line {}: {e}", i + 1)))?;
            t.push(entry)?;
        }
        Ok(t)
    }
}

/// Replay lookup state: each entry answers at most one request.
#[derive(Clone, Debug, Default)]
pub(crate) struct ReplayCursor {
    consumed: BTreeSet<usize>,
}

impl ReplayCursor {
    /// First unconsumed entry with the prompt's hash, else the unconsumed
    /// entry with the request's sequence number.
    pub fn take<'t>(
        &mut self,
        transcript: &'t Transcript,
        hash: &str,
        sequence_no: u64,
    ) -> Option<&'t TranscriptEntry> {
        let unconsumed = |(i, _): &(usize, &TranscriptEntry)| !self.consumed.contains(i);
        let hit = transcript
            .entries
            .iter()
            .enumerate()
            .filter(unconsumed)
            .find(|(_, e)| e.prompt_hash == hash)
            .or_else(|| {
                transcript
                    .entries
                    .iter()
                    .enumerate()
                    .filter(unconsumed)
                    .find(|(_, e)| e.sequence_no == sequence_no)
            });
        let (i, entry) = hit?;
        self.consumed.insert(i);
        Some(entry)
    }
}
