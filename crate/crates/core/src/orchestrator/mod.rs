//! The task loops: render prompt -> gateway call -> parse -> validate ->
//! propose -> review/accept -> snapshot, with stopping criteria and
//! pause/repeat/revert/resume control.

mod control;
mod driver;
mod fold;
mod step;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

pub use control::ControlCommand;
pub use driver::{run_task, AcceptAll, DecisionScript, ReviewDecision, Reviewer, RunOutcome, ScriptedDecision};
pub use fold::replay_journal;

use crate::dot::{DotGraph, ParseDiagnostics};
use crate::gateway::{ChatResponse, GatewayConfig, ResponseClass};
use crate::normalize::{NormalizationEvent, NormalizationRules};
use crate::ontology::{
    validate, ConceptId, ManualEdit, Ontology, OntologyDelta, OntologyError, Snapshot, ValidationPolicy,
    ValidationReport,
};
use crate::prompt::{PromptConfig, PromptEngine, PromptError, PromptTemplate, RenderedPrompt, TaskKind, TemplateSet};
use crate::records::{CodecConfig, RecordBatch, RejectedLine};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrchestratorError {
    #[error("{task} task is {status:?}: {reason}")]
    InvalidTransition {
        task: TaskKind,
        status: TaskStatus,
        reason: String,
    },
    #[error("{task} task has no accepted iteration {index}")]
    UnknownIteration { task: TaskKind, index: usize },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{task} task failed {failures} times in a row; last error: {last}")]
    RepeatedFailure {
        task: TaskKind,
        failures: usize,
        last: String,
    },
    #[error("{task} task did not finish within {steps} steps")]
    StepLimit { task: TaskKind, steps: usize },
}

pub type Result<T, E = OrchestratorError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    /// Every iteration parks for human review.
    #[default]
    Supervised,
    /// Iterations auto-accept unless they introduce a Strict violation.
    Autonomous,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoppingCriteria {
    pub max_iterations: Option<usize>,
    pub max_concepts: Option<usize>,
    pub max_depth: Option<usize>,
    pub max_breadth: Option<usize>,
    /// Stop after this many consecutive accepted iterations that add no
    /// concept. 0 disables the check.
    pub no_new_info_window: usize,
}

impl Default for StoppingCriteria {
    fn default() -> Self {
        StoppingCriteria {
            max_iterations: None,
            max_concepts: None,
            max_depth: None,
            max_breadth: None,
            no_new_info_window: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub mode: ExecutionMode,
    pub hierarchy_batch_size: usize,
    /// Extra requirements listed under the hierarchy instruction.
    pub hierarchy_constraints: Vec<String>,
    pub definition_batch_size: usize,
    pub property_batch_size: usize,
    /// Queries per concept before an undefined concept is given up on.
    pub max_definition_attempts: u32,
    pub runs_per_pair: u32,
    /// Concepts whose ordered pairs are queried; all concepts when unset.
    pub relationship_scope: Option<Vec<String>>,
    /// Only 1 is supported: pair requests run sequentially.
    pub max_parallel_requests: usize,
    /// Appended to the prompt when a runaway table forces a repeat.
    pub runaway_reminder: String,
    pub stopping: StoppingCriteria,
    pub prompt: PromptConfig,
    pub codec: CodecConfig,
    pub rules: NormalizationRules,
    pub gateway: GatewayConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            mode: ExecutionMode::Supervised,
            hierarchy_batch_size: 10,
            hierarchy_constraints: Vec::new(),
            definition_batch_size: 10,
            property_batch_size: 10,
            max_definition_attempts: 2,
            runs_per_pair: 5,
            relationship_scope: None,
            max_parallel_requests: 1,
            runaway_reminder: "Reminder: answer with plain lines separated by the delimiter shown above. \
                               Do not produce a markdown table."
                .into(),
            stopping: StoppingCriteria::default(),
            prompt: PromptConfig::default(),
            codec: CodecConfig::default(),
            rules: NormalizationRules::default(),
            gateway: GatewayConfig::default(),
        }
    }
}

impl SessionConfig {
    pub fn check(&self) -> Result<()> {
        let s = &self.stopping;
        if s.max_iterations.is_none()
            && s.max_concepts.is_none()
            && s.max_depth.is_none()
            && s.max_breadth.is_none()
            && s.no_new_info_window == 0
        {
            return Err(OrchestratorError::Config(
                "the hierarchy task needs at least one stopping criterion".into(),
            ));
        }
        for (name, v) in [
            ("hierarchy_batch_size", self.hierarchy_batch_size),
            ("definition_batch_size", self.definition_batch_size),
            ("property_batch_size", self.property_batch_size),
            ("runs_per_pair", self.runs_per_pair as usize),
            ("max_definition_attempts", self.max_definition_attempts as usize),
        ] {
            if v == 0 {
                return Err(OrchestratorError::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [
            ("definition_batch_size", self.definition_batch_size),
            ("property_batch_size", self.property_batch_size),
        ] {
            if v > self.prompt.max_batch {
                return Err(OrchestratorError::Config(format!(
                    "{name} {v} exceeds prompt.max_batch {}",
                    self.prompt.max_batch
                )));
            }
        }
        if self.max_parallel_requests != 1 {
            return Err(OrchestratorError::Config(
                "max_parallel_requests: only sequential execution (1) is supported".into(),
            ));
        }
        if self.hierarchy_constraints.len() > self.prompt.max_constraints {
            return Err(PromptError::TooManyConstraints {
                count: self.hierarchy_constraints.len(),
                max: self.prompt.max_constraints,
            }
            .into());
        }
        self.rules
            .check()
            .map_err(|e| OrchestratorError::Config(e.to_string()))?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    /// Ready for the next step (or not started).
    #[default]
    Idle,
    AwaitingResponse,
    AwaitingReview,
    Paused,
    Completed,
    Aborted,
}

impl TaskStatus {
    /// Holds the session's single active loop.
    pub fn is_active(self) -> bool {
        matches!(
            self,
            TaskStatus::AwaitingResponse | TaskStatus::AwaitingReview | TaskStatus::Paused
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    ConceptLimit,
    DepthLimit,
    BreadthLimit,
    NoNewInformation,
    /// Every concept in scope has been queried.
    Coverage,
    /// Every (pair, run) of the relationship plan has been executed.
    PlanExhausted,
    Manual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    AutoAccepted,
    HumanAccepted,
    EditedThenAccepted,
    Repeated,
    Reverted,
}

impl Decision {
    pub fn is_accepted(self) -> bool {
        matches!(
            self,
            Decision::AutoAccepted | Decision::HumanAccepted | Decision::EditedThenAccepted
        )
    }
}

/// Task-specific progress, derived from the accepted iterations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cursor {
    pub accepted: usize,
    pub pair_index: usize,
    pub run_index: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseResult {
    Dot {
        graph: DotGraph,
        diagnostics: ParseDiagnostics,
        notes: Vec<String>,
    },
    Records(RecordBatch),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    /// Session-wide number, 1-based.
    pub number: usize,
    pub task: TaskKind,
    /// Position within the task, 1-based.
    pub index: usize,
    pub sequence_nos: Vec<u64>,
    pub cursor: Cursor,
    pub batch: Vec<ConceptId>,
    pub pair: Option<(ConceptId, ConceptId)>,
    pub prompt: RenderedPrompt,
    pub response: Option<ChatResponse>,
    pub response_class: Option<ResponseClass>,
    /// A runaway table triggered the one automatic repeat.
    pub auto_repeated: bool,
    pub parse: Option<ParseResult>,
    pub quarantine: Vec<RejectedLine>,
    pub normalization: Vec<NormalizationEvent>,
    pub delta: OntologyDelta,
    /// Permissive report on the proposed state.
    pub validation: ValidationReport,
    /// Strict report on the proposed state (gates auto-accept).
    pub strict_validation: ValidationReport,
    pub proposed_ref: Option<String>,
    pub decision: Option<Decision>,
    pub snapshot_ref: Option<String>,
    pub edits: Vec<ManualEdit>,
    pub error: Option<String>,
}

impl Iteration {
    pub fn is_accepted(&self) -> bool {
        self.decision.is_some_and(Decision::is_accepted)
    }

    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRun {
    pub kind: TaskKind,
    pub status: TaskStatus,
    /// Status to return to on Resume.
    pub resume_to: Option<TaskStatus>,
    pub stop_reason: Option<StopReason>,
    /// Snapshot of the committed ontology when the task started.
    pub start_snapshot: Option<String>,
    /// Concept order fixed at task start (property and relationship tasks).
    pub plan: Vec<ConceptId>,
    pub iterations: Vec<Iteration>,
}

impl TaskRun {
    fn new(kind: TaskKind) -> Self {
        TaskRun {
            kind,
            status: TaskStatus::Idle,
            resume_to: None,
            stop_reason: None,
            start_snapshot: None,
            plan: Vec::new(),
            iterations: Vec::new(),
        }
    }

    pub fn started(&self) -> bool {
        self.start_snapshot.is_some()
    }

    pub fn accepted(&self) -> impl Iterator<Item = &Iteration> {
        self.iterations.iter().filter(|i| i.is_accepted())
    }

    pub fn parked(&self) -> Option<&Iteration> {
        self.iterations
            .last()
            .filter(|i| i.decision.is_none() && i.error.is_none() && i.proposed_ref.is_some())
    }

    pub fn gateway_calls(&self) -> usize {
        self.iterations.iter().map(|i| i.sequence_nos.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum JournalEvent {
    IterationRecorded { iteration: Box<Iteration> },
    DecisionRecorded {
        number: usize,
        decision: Decision,
        snapshot_ref: Option<String>,
        edits: Vec<ManualEdit>,
    },
    StatusChanged {
        task: TaskKind,
        status: TaskStatus,
        stop_reason: Option<StopReason>,
    },
    TaskStarted {
        task: TaskKind,
        start_snapshot: String,
        plan: Vec<ConceptId>,
    },
    /// The committed ontology was rolled back to the state after the task's
    /// iteration `to_iteration` (0: the task's start).
    Reverted { task: TaskKind, to_iteration: usize },
    TemplateUpdated { template: PromptTemplate },
}

/// Append-only record of everything that happened in a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JournalRecord {
    pub seq: usize,
    #[serde(flatten)]
    pub event: JournalEvent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum StepOutcome {
    /// Proposal waits for review.
    Parked { iteration: usize },
    /// Proposal was committed automatically.
    Committed { iteration: usize },
    /// The call or parse failed; the cursor did not move.
    Failed { iteration: usize },
    Completed { reason: StopReason },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: Uuid,
    pub domain_label: String,
    pub created_at: DateTime<Utc>,
    pub config: SessionConfig,
    pub ontology: Ontology,
    pub templates: TemplateSet,
    pub tasks: BTreeMap<TaskKind, TaskRun>,
    pub next_sequence_no: u64,
    /// Persisted separately as an append-only JSONL file.
    #[serde(skip)]
    pub journal: Vec<JournalRecord>,
    /// Content-addressed snapshots; persisted as separate files.
    #[serde(skip)]
    pub snapshots: BTreeMap<String, Snapshot>,
}

impl Session {
    pub fn new(domain_label: &str, seed: Ontology, config: SessionConfig) -> Result<Self> {
        config.check()?;
        let tasks = TaskKind::ALL.into_iter().map(|k| (k, TaskRun::new(k))).collect();
        Ok(Session {
            id: Uuid::new_v4(),
            domain_label: domain_label.to_string(),
            created_at: Utc::now(),
            config,
            ontology: seed,
            templates: TemplateSet::defaults(domain_label),
            tasks,
            next_sequence_no: 1,
            journal: Vec::new(),
            snapshots: BTreeMap::new(),
        })
    }

    pub fn task(&self, kind: TaskKind) -> &TaskRun {
        &self.tasks[&kind]
    }

    pub(crate) fn task_mut(&mut self, kind: TaskKind) -> &mut TaskRun {
        self.tasks.get_mut(&kind).expect("every task has a run")
    }

    pub fn iterations(&self) -> impl Iterator<Item = &Iteration> {
        let mut all: Vec<&Iteration> = self.tasks.values().flat_map(|t| &t.iterations).collect();
        all.sort_by_key(|i| i.number);
        all.into_iter()
    }

    pub fn iteration(&self, number: usize) -> Option<&Iteration> {
        self.tasks
            .values()
            .flat_map(|t| &t.iterations)
            .find(|i| i.number == number)
    }

    pub(crate) fn iteration_count(&self) -> usize {
        self.tasks.values().map(|t| t.iterations.len()).sum()
    }

    pub fn engine(&self) -> PromptEngine {
        PromptEngine::new(self.templates.clone(), self.config.prompt.clone())
    }

    pub fn set_template(&mut self, template: PromptTemplate) -> Result<()> {
        self.templates.set(template.clone())?;
        self.log(JournalEvent::TemplateUpdated { template });
        Ok(())
    }

    pub(crate) fn log(&mut self, event: JournalEvent) {
        let seq = self.journal.len() + 1;
        self.journal.push(JournalRecord { seq, event });
    }

    pub(crate) fn store_snapshot(&mut self, onto: &Ontology) -> String {
        let snap = Snapshot::of(onto);
        let id = snap.id();
        self.snapshots.entry(id.clone()).or_insert(snap);
        id
    }

    pub fn snapshot(&self, id: &str) -> Result<Ontology> {
        self.snapshots
            .get(id)
            .ok_or_else(|| OntologyError::CorruptSnapshot(format!("missing snapshot {id}")))?
            .restore()
            .map_err(Into::into)
    }

    pub(crate) fn set_status(&mut self, kind: TaskKind, status: TaskStatus, stop_reason: Option<StopReason>) {
        let run = self.task_mut(kind);
        run.status = status;
        run.stop_reason = stop_reason;
        self.log(JournalEvent::StatusChanged {
            task: kind,
            status,
            stop_reason,
        });
    }

    pub(crate) fn invalid(&self, kind: TaskKind, reason: impl Into<String>) -> OrchestratorError {
        OrchestratorError::InvalidTransition {
            task: kind,
            status: self.task(kind).status,
            reason: reason.into(),
        }
    }

    /// Progress through the task's plan, from accepted iterations.
    pub fn cursor(&self, kind: TaskKind) -> Cursor {
        let accepted = self.task(kind).accepted().count();
        let runs = self.config.runs_per_pair.max(1) as usize;
        match kind {
            TaskKind::Relationship => Cursor {
                accepted,
                pair_index: accepted / runs,
                run_index: (accepted % runs) as u32,
            },
            _ => Cursor {
                accepted,
                ..Cursor::default()
            },
        }
    }

    /// Why `kind` should stop now, if it should.
    pub fn evaluate_stopping(&self, kind: TaskKind) -> Option<StopReason> {
        let run = self.task(kind);
        match kind {
            TaskKind::Hierarchy => self.hierarchy_stop(run),
            TaskKind::Definition => self
                .definition_candidates()
                .is_empty()
                .then_some(StopReason::Coverage),
            TaskKind::Property => {
                (run.started() && self.property_remaining().is_empty()).then_some(StopReason::Coverage)
            }
            TaskKind::Relationship => {
                let total = run.plan.len() * run.plan.len() * self.config.runs_per_pair as usize;
                (run.started() && self.cursor(kind).accepted >= total).then_some(StopReason::PlanExhausted)
            }
        }
    }

    /// Limits are reached at equality: a depth limit of 3 stops at depth 3.
    fn hierarchy_stop(&self, run: &TaskRun) -> Option<StopReason> {
        let s = &self.config.stopping;
        let accepted: Vec<&Iteration> = run.accepted().collect();
        if s.max_iterations.is_some_and(|m| accepted.len() >= m) {
            return Some(StopReason::MaxIterations);
        }
        if s.max_concepts.is_some_and(|m| self.ontology.len() >= m) {
            return Some(StopReason::ConceptLimit);
        }
        if let Ok(stats) = self.ontology.stats() {
            if s.max_depth.is_some_and(|m| stats.max_depth >= m) {
                return Some(StopReason::DepthLimit);
            }
            if s.max_breadth.is_some_and(|m| stats.max_breadth >= m) {
                return Some(StopReason::BreadthLimit);
            }
        }
        let w = s.no_new_info_window;
        if w > 0
            && accepted.len() >= w
            && accepted[accepted.len() - w..]
                .iter()
                .all(|i| i.delta.added_concept_count() == 0)
        {
            return Some(StopReason::NoNewInformation);
        }
        None
    }

    /// Undefined concepts still worth asking about, canonical order.
    pub(crate) fn definition_candidates(&self) -> Vec<ConceptId> {
        let mut attempts: BTreeMap<&ConceptId, u32> = BTreeMap::new();
        for it in self.task(TaskKind::Definition).accepted() {
            for id in &it.batch {
                *attempts.entry(id).or_default() += 1;
            }
        }
        self.ontology
            .undefined()
            .map(|c| &c.id)
            .filter(|id| attempts.get(id).copied().unwrap_or(0) < self.config.max_definition_attempts)
            .cloned()
            .collect()
    }

    pub(crate) fn property_remaining(&self) -> Vec<ConceptId> {
        let run = self.task(TaskKind::Property);
        let done: std::collections::BTreeSet<&ConceptId> =
            run.accepted().flat_map(|i| &i.batch).collect();
        run.plan
            .iter()
            .filter(|id| !done.contains(id) && self.ontology.contains(id))
            .cloned()
            .collect()
    }

    /// Strict violations the proposal adds on top of the committed state.
    pub(crate) fn introduces_violations(&self, proposed: &Ontology) -> bool {
        let before = validate(&self.ontology, ValidationPolicy::Strict);
        let after = validate(proposed, ValidationPolicy::Strict);
        !after.introduced_since(&before).is_empty()
    }
}
