//! On-disk session directories and ontology exports.
//!
//! ```text
//! <dir>/manifest.json       schema version, journal length, file checksums
//! <dir>/session.json        session state (config, ontology, tasks, templates)
//! <dir>/iterations.jsonl    append-only journal
//! <dir>/transcript.jsonl    gateway transcript
//! <dir>/snapshots/<sha>.json
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checksum::sha256_hex;
use crate::dot::to_dot_with;
use crate::gateway::Transcript;
use crate::ontology::{EdgeDirection, Ontology, Snapshot};
use crate::orchestrator::{JournalRecord, Session};

pub const STORE_SCHEMA_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const SESSION: &str = "session.json";
const JOURNAL: &str = "iterations.jsonl";
const TRANSCRIPT: &str = "transcript.jsonl";
const SNAPSHOTS: &str = "snapshots";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{file}: checksum mismatch")]
    ChecksumMismatch { file: String },
    #[error("session store schema {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("{file}: {message}")]
    Format { file: String, message: String },
    #[error("{file}: {message}")]
    JournalDiverged { file: String, message: String },
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub session_id: uuid::Uuid,
    pub journal_len: usize,
    /// SHA-256 of each top-level file, by name.
    pub files: BTreeMap<String, String>,
}

/// A session directory.
#[derive(Clone, Debug)]
pub struct SessionStore {
    root: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |e| StoreError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn format_err(file: &str) -> impl FnOnce(serde_json::Error) -> StoreError + '_ {
    move |e| StoreError::Format {
        file: file.to_string(),
        message: e.to_string(),
    }
}

/// Writes `bytes` to `path` via a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl SessionStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        SessionStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn exists(&self) -> bool {
        self.root.join(MANIFEST).is_file()
    }

    fn read(&self, name: &str) -> Result<Vec<u8>> {
        let path = self.root.join(name);
        fs::read(&path).map_err(io_err(&path))
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let bytes = self.read(MANIFEST)?;
        let manifest: Manifest = serde_json::from_slice(&bytes).map_err(format_err(MANIFEST))?;
        if manifest.schema_version != STORE_SCHEMA_VERSION {
            return Err(StoreError::SchemaVersionMismatch {
                found: manifest.schema_version,
                expected: STORE_SCHEMA_VERSION,
            });
        }
        Ok(manifest)
    }

    /// Persists the session and transcript. Journal records already on disk
    /// must be an unchanged prefix of the session's journal.
    pub fn save(&self, session: &Session, transcript: &Transcript) -> Result<()> {
        let snapshots = self.root.join(SNAPSHOTS);
        fs::create_dir_all(&snapshots).map_err(io_err(&snapshots))?;

        let journal = journal_jsonl(&session.journal);
        if self.exists() {
            let previous = self.read(JOURNAL)?;
            if !journal.as_bytes().starts_with(&previous) {
                return Err(StoreError::JournalDiverged {
                    file: JOURNAL.into(),
                    message: "records on disk were changed or dropped".into(),
                });
            }
        }

        for (id, snap) in &session.snapshots {
            let path = snapshots.join(format!("{id}.json"));
            if !path.exists() {
                write_atomic(&path, snap.as_bytes())?;
            }
        }

        let session_json = serde_json::to_vec_pretty(session).map_err(format_err(SESSION))?;
        let transcript_jsonl = transcript.to_jsonl();
        let mut files = BTreeMap::new();
        for (name, bytes) in [
            (SESSION, session_json.as_slice()),
            (JOURNAL, journal.as_bytes()),
            (TRANSCRIPT, transcript_jsonl.as_bytes()),
        ] {
            write_atomic(&self.root.join(name), bytes)?;
            files.insert(name.to_string(), sha256_hex(bytes));
        }
        let manifest = Manifest {
            schema_version: STORE_SCHEMA_VERSION,
            session_id: session.id,
            journal_len: session.journal.len(),
            files,
        };
        let bytes = serde_json::to_vec_pretty(&manifest).map_err(format_err(MANIFEST))?;
        write_atomic(&self.root.join(MANIFEST), &bytes)
    }

    fn verified(&self, manifest: &Manifest, name: &str) -> Result<Vec<u8>> {
        let bytes = self.read(name)?;
        match manifest.files.get(name) {
            Some(sum) if *sum == sha256_hex(&bytes) => Ok(bytes),
            _ => Err(StoreError::ChecksumMismatch { file: name.into() }),
        }
    }

    /// Loads and verifies every file, including each referenced snapshot.
    pub fn load(&self) -> Result<(Session, Transcript)> {
        let manifest = self.manifest()?;
        let mut session: Session =
            serde_json::from_slice(&self.verified(&manifest, SESSION)?).map_err(format_err(SESSION))?;

        let journal = String::from_utf8(self.verified(&manifest, JOURNAL)?).map_err(|e| StoreError::Format {
            file: JOURNAL.into(),
            message: e.to_string(),
        })?;
        session.journal = journal
            .lines()
            .map(|l| serde_json::from_str::<JournalRecord>(l).map_err(format_err(JOURNAL)))
            .collect::<Result<_>>()?;
        if session.journal.len() != manifest.journal_len {
            return Err(StoreError::ChecksumMismatch { file: JOURNAL.into() });
        }

        let transcript_text = String::from_utf8(self.verified(&manifest, TRANSCRIPT)?).map_err(|e| StoreError::Format {
            file: TRANSCRIPT.into(),
            message: e.to_string(),
        })?;
        let transcript = Transcript::from_jsonl(&transcript_text).map_err(|e| StoreError::Format {
            file: TRANSCRIPT.into(),
            message: e.to_string(),
        })?;

        for id in referenced_snapshots(&session) {
            let name = format!("{SNAPSHOTS}/{id}.json");
            let snap = Snapshot::from_bytes(self.read(&name)?);
            if snap.id() != id {
                return Err(StoreError::ChecksumMismatch { file: name });
            }
            snap.restore().map_err(|e| StoreError::Format {
                file: name.clone(),
                message: e.to_string(),
            })?;
            session.snapshots.insert(id, snap);
        }
        Ok((session, transcript))
    }
}

fn journal_jsonl(journal: &[JournalRecord]) -> String {
    let mut out = String::new();
    for record in journal {
        out.push_str(&serde_json::to_string(record).expect("journal records serialize"));
        out.push('\n');
    }
    out
}

fn referenced_snapshots(session: &Session) -> Vec<String> {
    let mut ids: Vec<String> = session
        .tasks
        .values()
        .flat_map(|t| {
            t.start_snapshot
                .iter()
                .cloned()
                .chain(t.iterations.iter().flat_map(|i| i.proposed_ref.iter().chain(&i.snapshot_ref).cloned()))
        })
        .collect();
    ids.sort();
    ids.dedup();
    ids
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Dot,
    /// Canonical JSON document.
    Doc,
    /// One `Subject @ Predicate @ Object` line per triple.
    Triples,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(ExportFormat::Dot),
            "doc" | "json" => Ok(ExportFormat::Doc),
            "triples" => Ok(ExportFormat::Triples),
            other => Err(format!("unknown export format `{other}` (dot, doc, triples)")),
        }
    }
}

pub fn export(ontology: &Ontology, format: ExportFormat, direction: EdgeDirection) -> String {
    match format {
        ExportFormat::Dot => to_dot_with(ontology, direction),
        ExportFormat::Doc => ontology.to_canonical_json(),
        ExportFormat::Triples => {
            let name = |id| ontology.concept(id).map_or_else(|| id.to_string(), |c| c.display_name.clone());
            let mut lines: Vec<String> = ontology
                .triples()
                .iter()
                .map(|t| format!("{} @ {} @ {}", name(&t.subject), t.predicate, name(&t.object)))
                .collect();
            lines.sort();
            lines.into_iter().map(|l| l + "\n").collect()
        }
    }
}
