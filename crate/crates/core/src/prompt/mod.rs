//! Three-part prompts (context, instruction, response format) for the four
//! distillation tasks.

mod template;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use template::{PromptTemplate, TemplateSet, DEFAULT_DOMAIN};

use crate::dot::to_dot_with;
use crate::ontology::{ConceptId, EdgeDirection, Ontology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Hierarchy,
    Definition,
    Relationship,
    Property,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::Hierarchy,
        TaskKind::Definition,
        TaskKind::Relationship,
        TaskKind::Property,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Hierarchy => "hierarchy",
            TaskKind::Definition => "definition",
            TaskKind::Relationship => "relationship",
            TaskKind::Property => "property",
        }
    }

    /// Placeholders a template for this task may use.
    pub fn allowed_placeholders(self) -> &'static [Placeholder] {
        use Placeholder::*;
        match self {
            TaskKind::Hierarchy => &[OntologyDot, Count],
            TaskKind::Definition | TaskKind::Property => &[OntologyDot, Batch, Count, Delimiter],
            TaskKind::Relationship => &[OntologyDot, Subject, Object, Delimiter],
        }
    }

    /// Placeholders without which the prompt would not be self-contained.
    pub fn required_placeholders(self) -> &'static [Placeholder] {
        use Placeholder::*;
        match self {
            TaskKind::Hierarchy => &[OntologyDot],
            TaskKind::Definition => &[OntologyDot, Batch],
            TaskKind::Property => &[Batch],
            TaskKind::Relationship => &[Subject, Object],
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown task `{s}` (hierarchy, definition, relationship, property)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Placeholder {
    OntologyDot,
    Batch,
    Subject,
    Object,
    Count,
    Delimiter,
}

impl Placeholder {
    pub const ALL: [Placeholder; 6] = [
        Placeholder::OntologyDot,
        Placeholder::Batch,
        Placeholder::Subject,
        Placeholder::Object,
        Placeholder::Count,
        Placeholder::Delimiter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Placeholder::OntologyDot => "ONTOLOGY_DOT",
            Placeholder::Batch => "BATCH",
            Placeholder::Subject => "SUBJECT",
            Placeholder::Object => "OBJECT",
            Placeholder::Count => "COUNT",
            Placeholder::Delimiter => "DELIMITER",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Placeholder::ALL.into_iter().find(|p| p.name() == name)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("placeholder {{{0}}} has no binding")]
    UnresolvedPlaceholder(String),
    #[error("{task} template uses {{{name}}}, which that task does not provide")]
    UnknownPlaceholder { task: TaskKind, name: String },
    #[error("{task} template must contain {{{name}}}")]
    MissingPlaceholder { task: TaskKind, name: String },
    #[error("batch size must be at least 1")]
    InvalidBatchSize,
    #[error("concept batch is empty")]
    EmptyBatch,
    #[error("concept batch of {size} exceeds the maximum of {max}")]
    BatchTooLarge { size: usize, max: usize },
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("{count} constraints given, at most {max} allowed")]
    TooManyConstraints { count: usize, max: usize },
    #[error("template file: {0}")]
    TemplateFile(String),
}

pub type Result<T, E = PromptError> = std::result::Result<T, E>;

/// Finds `{NAME}` tokens (uppercase letters and underscores).
pub(crate) fn scan_placeholders(text: &str) -> Vec<(usize, usize, &str)> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let start = i;
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_uppercase() || bytes[j] == b'_') {
                j += 1;
            }
            if j > i + 1 && j < bytes.len() && bytes[j] == b'}' {
                out.push((start, j + 1, &text[i + 1..j]));
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// Single-pass substitution: bound values are never re-scanned, so a DOT
/// body containing braces cannot trigger further expansion.
fn substitute(text: &str, bindings: &BTreeMap<Placeholder, String>) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for (start, end, name) in scan_placeholders(text) {
        let value = Placeholder::from_name(name)
            .and_then(|p| bindings.get(&p))
            .ok_or_else(|| PromptError::UnresolvedPlaceholder(name.to_string()))?;
        out.push_str(&text[last..start]);
        out.push_str(value);
        last = end;
    }
    out.push_str(&text[last..]);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub task: TaskKind,
    pub bindings: BTreeMap<Placeholder, String>,
    pub length_chars: usize,
    pub length_warning: bool,
    /// Byte offsets at which context, instruction and format begin.
    pub part_offsets: [usize; 3],
}

/// Flags prompts longer than `soft_limit_chars` (strictly greater).
pub fn check_length(mut prompt: RenderedPrompt, soft_limit_chars: usize) -> RenderedPrompt {
    prompt.length_chars = prompt.text.chars().count();
    prompt.length_warning = prompt.length_chars > soft_limit_chars;
    prompt
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub soft_limit_chars: usize,
    pub max_batch: usize,
    pub max_constraints: usize,
    pub edge_direction: EdgeDirection,
    pub definition_delimiter: char,
    pub property_delimiter: char,
    pub relationship_delimiter: char,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            soft_limit_chars: 8000,
            max_batch: 10,
            max_constraints: 6,
            edge_direction: EdgeDirection::ParentToChild,
            definition_delimiter: '@',
            property_delimiter: '@',
            relationship_delimiter: '|',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptEngine {
    pub templates: TemplateSet,
    pub config: PromptConfig,
}

impl PromptEngine {
    pub fn new(templates: TemplateSet, config: PromptConfig) -> Self {
        PromptEngine { templates, config }
    }

    fn direction_sentence(&self) -> &'static str {
        match self.config.edge_direction {
            EdgeDirection::ParentToChild => {
                "Write each edge from superclass to subclass: \"Parent\" -> \"Child\"."
            }
            EdgeDirection::ChildToParent => {
                "Write each edge from subclass to superclass: \"Child\" -> \"Parent\"."
            }
        }
    }

    fn render(
        &self,
        task: TaskKind,
        bindings: BTreeMap<Placeholder, String>,
        instruction_extra: &str,
        format_extra: &str,
    ) -> Result<RenderedPrompt> {
        let template = self.templates.get(task);
        let context = substitute(template.context.trim(), &bindings)?;
        let mut instruction = substitute(template.instruction.trim(), &bindings)?;
        instruction.push_str(instruction_extra);
        let mut format = substitute(template.format.trim(), &bindings)?;
        format.push_str(format_extra);

        let mut text = String::new();
        let mut part_offsets = [0; 3];
        for (i, part) in [context, instruction, format].iter().enumerate() {
            if i > 0 {
                text.push_str("\n\n");
            }
            part_offsets[i] = text.len();
            text.push_str(part);
        }
        text.push('\n');
        let prompt = RenderedPrompt {
            text,
            task,
            bindings,
            length_chars: 0,
            length_warning: false,
            part_offsets,
        };
        Ok(check_length(prompt, self.config.soft_limit_chars))
    }

    fn dot(&self, ontology: &Ontology) -> String {
        to_dot_with(ontology, self.config.edge_direction)
            .trim_end()
            .to_string()
    }

    /// Hierarchy prompt: embeds the current DOT, asks for `batch_size` new
    /// concepts and a full redesign; `constraints` are appended as a list.
    pub fn render_hierarchy(
        &self,
        ontology: &Ontology,
        batch_size: usize,
        constraints: &[String],
    ) -> Result<RenderedPrompt> {
        if batch_size == 0 {
            return Err(PromptError::InvalidBatchSize);
        }
        if constraints.len() > self.config.max_constraints {
            return Err(PromptError::TooManyConstraints {
                count: constraints.len(),
                max: self.config.max_constraints,
            });
        }
        let bindings = BTreeMap::from([
            (Placeholder::OntologyDot, self.dot(ontology)),
            (Placeholder::Count, batch_size.to_string()),
        ]);
        let extra: String = if constraints.is_empty() {
            String::new()
        } else {
            let mut s = String::from("\nAlso observe these requirements:");
            for c in constraints {
                s.push_str("\n- ");
                s.push_str(c.trim());
            }
            s
        };
        let direction = format!(" {}", self.direction_sentence());
        self.render(TaskKind::Hierarchy, bindings, &extra, &direction)
    }

    fn batch_bindings(
        &self,
        ontology: &Ontology,
        batch: &[ConceptId],
        delimiter: char,
    ) -> Result<BTreeMap<Placeholder, String>> {
        if batch.is_empty() {
            return Err(PromptError::EmptyBatch);
        }
        if batch.len() > self.config.max_batch {
            return Err(PromptError::BatchTooLarge {
                size: batch.len(),
                max: self.config.max_batch,
            });
        }
        let mut names = Vec::with_capacity(batch.len());
        for id in batch {
            let concept = ontology
                .concept(id)
                .ok_or_else(|| PromptError::UnknownConcept(id.to_string()))?;
            names.push(format!("- {}", concept.display_name));
        }
        Ok(BTreeMap::from([
            (Placeholder::OntologyDot, self.dot(ontology)),
            (Placeholder::Batch, names.join("\n")),
            (Placeholder::Count, batch.len().to_string()),
            (Placeholder::Delimiter, delimiter.to_string()),
        ]))
    }

    pub fn render_definition(&self, ontology: &Ontology, batch: &[ConceptId]) -> Result<RenderedPrompt> {
        let bindings = self.batch_bindings(ontology, batch, self.config.definition_delimiter)?;
        self.render(TaskKind::Definition, bindings, "", "")
    }

    pub fn render_property(&self, ontology: &Ontology, batch: &[ConceptId]) -> Result<RenderedPrompt> {
        let bindings = self.batch_bindings(ontology, batch, self.config.property_delimiter)?;
        self.render(TaskKind::Property, bindings, "", "")
    }

    pub fn render_relationship(
        &self,
        ontology: &Ontology,
        subject: &ConceptId,
        object: &ConceptId,
    ) -> Result<RenderedPrompt> {
        let name = |id: &ConceptId| {
            ontology
                .concept(id)
                .map(|c| c.display_name.clone())
                .ok_or_else(|| PromptError::UnknownConcept(id.to_string()))
        };
        let bindings = BTreeMap::from([
            (Placeholder::OntologyDot, self.dot(ontology)),
            (Placeholder::Subject, name(subject)?),
            (Placeholder::Object, name(object)?),
            (Placeholder::Delimiter, self.config.relationship_delimiter.to_string()),
        ]);
        self.render(TaskKind::Relationship, bindings, "", "")
    }
}
