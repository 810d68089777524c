use serde::{Deserialize, Serialize};

use super::{ControlCommand, Iteration, OrchestratorError, Result, Session, StepOutcome, StopReason, TaskStatus};
use crate::gateway::Gateway;
use crate::ontology::ManualEdit;
use crate::prompt::TaskKind;

/// Consecutive failed steps tolerated by [`run_task`].
const MAX_CONSECUTIVE_FAILURES: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum ReviewDecision {
    Accept,
    Repeat,
    AcceptWithEdits { edits: Vec<ManualEdit> },
    Complete,
    Abort,
    /// Leave the iteration parked and return to the caller.
    Defer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RunOutcome {
    Stopped { reason: StopReason },
    Aborted,
    /// The reviewer deferred; the iteration still awaits review.
    Deferred { iteration: usize },
}

/// Whoever looks at parked iterations: a terminal, a script, a test.
pub trait Reviewer {
    fn review(&mut self, session: &Session, iteration: &Iteration) -> ReviewDecision;
}

pub struct AcceptAll;

impl Reviewer for AcceptAll {
    fn review(&mut self, _: &Session, _: &Iteration) -> ReviewDecision {
        ReviewDecision::Accept
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedDecision {
    /// Task-local iteration index the decision applies to.
    pub iteration_index: usize,
    #[serde(flatten)]
    pub decision: ReviewDecision,
}

/// Pre-recorded review decisions, looked up by task and iteration index.
/// Iterations without an entry get `default`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionScript {
    #[serde(default)]
    pub task: Option<TaskKind>,
    pub decisions: Vec<ScriptedDecision>,
    #[serde(default = "accept")]
    pub default: ReviewDecision,
}

fn accept() -> ReviewDecision {
    ReviewDecision::Accept
}

impl DecisionScript {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

impl Reviewer for DecisionScript {
    fn review(&mut self, _: &Session, iteration: &Iteration) -> ReviewDecision {
        if self.task.is_some_and(|t| t != iteration.task) {
            return self.default.clone();
        }
        self.decisions
            .iter()
            .find(|d| d.iteration_index == iteration.index)
            .map_or_else(|| self.default.clone(), |d| d.decision.clone())
    }
}

/// Steps `kind` until it completes, handing parked iterations to `reviewer`.
pub fn run_task(
    session: &mut Session,
    gateway: &mut Gateway,
    kind: TaskKind,
    reviewer: &mut dyn Reviewer,
    max_steps: usize,
) -> Result<RunOutcome> {
    let mut steps = 0;
    let mut failures = 0;
    loop {
        match session.task(kind).status {
            TaskStatus::Completed => {
                let reason = session.task(kind).stop_reason.unwrap_or(StopReason::Manual);
                return Ok(RunOutcome::Stopped { reason });
            }
            TaskStatus::Aborted => return Ok(RunOutcome::Aborted),
            TaskStatus::AwaitingReview => {
                let parked = session.task(kind).parked().expect("reviewing tasks have a parked iteration").clone();
                let command = match reviewer.review(session, &parked) {
                    ReviewDecision::Accept => ControlCommand::Accept,
                    ReviewDecision::AcceptWithEdits { edits } => ControlCommand::AcceptWithEdits { edits },
                    ReviewDecision::Repeat => {
                        steps += 1;
                        ControlCommand::Repeat
                    }
                    ReviewDecision::Complete => {
                        session.control(kind, ControlCommand::Accept, gateway)?;
                        if session.task(kind).status == TaskStatus::Idle {
                            session.control(kind, ControlCommand::Complete, gateway)?;
                        }
                        continue;
                    }
                    ReviewDecision::Abort => ControlCommand::Abort,
                    ReviewDecision::Defer => return Ok(RunOutcome::Deferred { iteration: parked.number }),
                };
                session.control(kind, command, gateway)?;
                continue;
            }
            _ => {}
        }
        if steps >= max_steps {
            return Err(OrchestratorError::StepLimit { task: kind, steps });
        }
        steps += 1;
        match session.step(kind, gateway)? {
            StepOutcome::Failed { iteration } => {
                failures += 1;
                if failures >= MAX_CONSECUTIVE_FAILURES {
                    let last = session
                        .iteration(iteration)
                        .and_then(|i| i.error.clone())
                        .unwrap_or_default();
                    return Err(OrchestratorError::RepeatedFailure {
                        task: kind,
                        failures,
                        last,
                    });
                }
            }
            _ => failures = 0,
        }
    }
}
