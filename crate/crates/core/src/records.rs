//! Line-oriented response bodies: delimiter-separated records and markdown
//! tables. Malformed lines are quarantined with a reason, never dropped.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{ConceptId, Ontology, Provenance, RelationshipTriple};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Definition,
    Relationship,
    Property,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    NoDelimiter,
    ArityMismatch,
    EmptyCell,
    UnknownConcept,
    /// Relationship row whose subject/object is not the requested pair.
    PairMismatch,
    DuplicateProperty,
    DuplicateRow,
    /// Row about a concept that was not in the requested batch.
    NotRequested,
}

/// Lines that carry no record by construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkipReason {
    Header,
    Separator,
    Fence,
    Prose,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordRow {
    pub line_no: usize,
    pub cells: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedLine {
    pub line_no: usize,
    pub raw: String,
    pub reason: RejectReason,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedLine {
    pub line_no: usize,
    pub reason: SkipReason,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordBatch {
    pub kind: RecordKind,
    pub rows: Vec<RecordRow>,
    pub rejected: Vec<RejectedLine>,
    pub skipped: Vec<SkippedLine>,
}

impl RecordBatch {
    pub fn new(kind: RecordKind) -> Self {
        RecordBatch {
            kind,
            rows: Vec::new(),
            rejected: Vec::new(),
            skipped: Vec::new(),
        }
    }

    fn reject(&mut self, line_no: usize, raw: &str, reason: RejectReason) {
        self.rejected.push(RejectedLine {
            line_no,
            raw: raw.to_string(),
            reason,
        });
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecordError {
    #[error("response contains no markdown table")]
    NoTableFound,
    #[error("response is a runaway table (repeated separator characters)")]
    RunawayTable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    /// Lines whose cells all match one of these (case-insensitive) are headers.
    pub header_words: Vec<String>,
    pub runaway_run_threshold: usize,
    pub runaway_row_factor: usize,
    /// 2 = `Concept @ Property`, 3 = `Concept @ Property @ Description`.
    pub property_arity: usize,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            header_words: [
                "concept",
                "concepts",
                "name",
                "term",
                "definition",
                "subject",
                "predicate",
                "relationship",
                "object",
                "property",
                "properties",
                "description",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            runaway_run_threshold: 200,
            runaway_row_factor: 3,
            property_arity: 2,
        }
    }
}

impl CodecConfig {
    pub fn arity(&self, kind: RecordKind) -> usize {
        match kind {
            RecordKind::Definition => 2,
            RecordKind::Relationship => 3,
            RecordKind::Property => self.property_arity,
        }
    }

    fn is_header(&self, cells: &[String]) -> bool {
        !cells.is_empty()
            && cells.iter().all(|cell| {
                let cell = cell.trim_matches(|c: char| c == '*' || c == '_' || c.is_whitespace());
                self.header_words.iter().any(|w| w.eq_ignore_ascii_case(cell))
            })
    }
}

/// Strips `1.`, `2)`, `-`, `*` list markers.
fn strip_list_marker(line: &str) -> &str {
    let t = line.trim_start();
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(rest) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            if rest.starts_with(char::is_whitespace) {
                return rest.trim_start();
            }
        }
    }
    for marker in ["- ", "* ", "• "] {
        if let Some(rest) = t.strip_prefix(marker) {
            return rest.trim_start();
        }
    }
    t
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

/// Splits each non-empty line on `delimiter` and keeps lines with exactly
/// `expected_arity` non-empty cells.
pub fn parse_delimited(
    text: &str,
    delimiter: char,
    kind: RecordKind,
    expected_arity: usize,
    config: &CodecConfig,
) -> RecordBatch {
    let mut batch = RecordBatch::new(kind);
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if is_fence(raw) {
            batch.skipped.push(SkippedLine {
                line_no,
                reason: SkipReason::Fence,
            });
            continue;
        }
        if is_separator_row(raw) {
            batch.skipped.push(SkippedLine {
                line_no,
                reason: SkipReason::Separator,
            });
            continue;
        }
        let body = strip_list_marker(raw);
        // A delimiter-bracketed line (`| a | b |`) has empty outer cells.
        let body = if delimiter == '|' {
            body.trim().trim_start_matches('|').trim_end_matches('|')
        } else {
            body
        };
        if !body.contains(delimiter) {
            batch.reject(line_no, raw, RejectReason::NoDelimiter);
            continue;
        }
        let cells: Vec<String> = body.split(delimiter).map(|c| c.trim().to_string()).collect();
        if config.is_header(&cells) {
            batch.skipped.push(SkippedLine {
                line_no,
                reason: SkipReason::Header,
            });
            continue;
        }
        if cells.len() != expected_arity {
            batch.reject(line_no, raw, RejectReason::ArityMismatch);
        } else if cells.iter().any(String::is_empty) {
            batch.reject(line_no, raw, RejectReason::EmptyCell);
        } else {
            batch.rows.push(RecordRow { line_no, cells });
        }
    }
    batch
}

fn is_separator_char(c: char) -> bool {
    matches!(c, '-' | ' ' | '|' | ':' | '\t')
}

fn is_separator_row(line: &str) -> bool {
    let t = line.trim();
    !t.is_empty() && t.chars().all(is_separator_char) && t.matches('-').count() >= 3
}

/// True for the degenerate table output that keeps printing `- - -`.
pub fn detect_table_runaway(text: &str, config: &CodecConfig) -> bool {
    for line in text.lines() {
        let mut run = 0usize;
        let mut dashes = false;
        for c in line.chars() {
            if is_separator_char(c) {
                run += 1;
                dashes |= c == '-';
                if dashes && run > config.runaway_run_threshold {
                    return true;
                }
            } else {
                run = 0;
                dashes = false;
            }
        }
    }
    let separators = text.lines().filter(|l| is_separator_row(l)).count();
    let data = text
        .lines()
        .filter(|l| l.contains('|') && !is_separator_row(l))
        .count();
    separators > 0 && separators > config.runaway_row_factor * data.max(1)
}

/// Pipe-delimited rows; the header row and `---` separator rows are skipped.
pub fn parse_markdown_table(
    text: &str,
    kind: RecordKind,
    expected_arity: usize,
    config: &CodecConfig,
) -> Result<RecordBatch, RecordError> {
    if !text.lines().any(|l| l.contains('|')) {
        return Err(RecordError::NoTableFound);
    }
    let mut batch = RecordBatch::new(kind);
    let lines: Vec<&str> = text.lines().collect();
    for (idx, raw) in lines.iter().enumerate() {
        let line_no = idx + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        let skip = |reason| SkippedLine { line_no, reason };
        if is_fence(t) {
            batch.skipped.push(skip(SkipReason::Fence));
            continue;
        }
        if !t.contains('|') {
            batch.skipped.push(skip(SkipReason::Prose));
            continue;
        }
        if is_separator_row(t) {
            batch.skipped.push(skip(SkipReason::Separator));
            continue;
        }
        let next_is_separator = lines.get(idx + 1).is_some_and(|l| is_separator_row(l));
        let inner = t.strip_prefix('|').unwrap_or(t);
        let inner = inner.strip_suffix('|').unwrap_or(inner);
        let cells: Vec<String> = inner.split('|').map(|c| c.trim().to_string()).collect();
        if next_is_separator || config.is_header(&cells) {
            batch.skipped.push(skip(SkipReason::Header));
            continue;
        }
        if cells.len() != expected_arity {
            batch.reject(line_no, raw, RejectReason::ArityMismatch);
        } else if cells.iter().any(String::is_empty) {
            batch.reject(line_no, raw, RejectReason::EmptyCell);
        } else {
            batch.rows.push(RecordRow { line_no, cells });
        }
    }
    Ok(batch)
}

/// Parses a response body for `kind`: runaway tables are refused, then the
/// delimited form is tried, falling back to a markdown table when the
/// delimited parse accepted nothing and the body contains one.
pub fn parse_response(
    text: &str,
    kind: RecordKind,
    delimiter: char,
    config: &CodecConfig,
) -> Result<RecordBatch, RecordError> {
    if detect_table_runaway(text, config) {
        return Err(RecordError::RunawayTable);
    }
    let arity = config.arity(kind);
    let delimited = parse_delimited(text, delimiter, kind, arity, config);
    if delimited.rows.is_empty() && delimiter != '|' && text.lines().any(is_separator_row) {
        if let Ok(table) = parse_markdown_table(text, kind, arity, config) {
            if !table.rows.is_empty() {
                return Ok(table);
            }
        }
    }
    Ok(delimited)
}

/// Resolves subject/object cells against the ontology. The predicate is
/// kept verbatim for the normalizer.
pub fn rows_to_triples(
    batch: &RecordBatch,
    ontology: &Ontology,
    provenance: Option<Provenance>,
) -> (Vec<RelationshipTriple>, Vec<RejectedLine>) {
    let mut triples = Vec::new();
    let mut rejected = Vec::new();
    for row in &batch.rows {
        let raw = || row.cells.join(" | ");
        if row.cells.len() != 3 {
            rejected.push(RejectedLine {
                line_no: row.line_no,
                raw: raw(),
                reason: RejectReason::ArityMismatch,
            });
            continue;
        }
        let subject = ontology.resolve(&row.cells[0]).map(|c| c.id.clone());
        let object = ontology.resolve(&row.cells[2]).map(|c| c.id.clone());
        match (subject, object) {
            (Some(s), Some(o)) => {
                let mut t = RelationshipTriple::new(s, &row.cells[1], o);
                if let Some(p) = provenance {
                    t = t.with_provenance(p);
                }
                triples.push(t);
            }
            _ => rejected.push(RejectedLine {
                line_no: row.line_no,
                raw: raw(),
                reason: RejectReason::UnknownConcept,
            }),
        }
    }
    (triples, rejected)
}

/// Keeps rows whose first cell names a requested concept, once each. Other
/// rows are quarantined as UnknownConcept, NotRequested, or DuplicateRow.
pub fn restrict_to_batch(
    batch: RecordBatch,
    requested: &[ConceptId],
    ontology: &Ontology,
) -> (Vec<(ConceptId, RecordRow)>, Vec<RejectedLine>) {
    let wanted: BTreeSet<&ConceptId> = requested.iter().collect();
    let mut seen = BTreeSet::new();
    let mut accepted = Vec::new();
    let mut rejected = batch.rejected;
    for row in batch.rows {
        let id = ontology.resolve(&row.cells[0]).map(|c| c.id.clone());
        let reason = match &id {
            None => RejectReason::UnknownConcept,
            Some(id) if !wanted.contains(id) => RejectReason::NotRequested,
            Some(id) if batch.kind == RecordKind::Definition && !seen.insert(id.clone()) => {
                RejectReason::DuplicateRow
            }
            Some(id) => {
                accepted.push((id.clone(), row));
                continue;
            }
        };
        rejected.push(RejectedLine {
            line_no: row.line_no,
            raw: row.cells.join(" @ "),
            reason,
        });
    }
    rejected.sort_by_key(|r| r.line_no);
    (accepted, rejected)
}
