use serde::{Deserialize, Serialize};

use super::{Decision, JournalEvent, OrchestratorError, Result, Session, StopReason, TaskRun, TaskStatus};
use crate::gateway::Gateway;
use crate::ontology::ManualEdit;
use crate::prompt::TaskKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum ControlCommand {
    Pause,
    Resume,
    /// Discard the parked proposal and ask again at the same cursor.
    Repeat,
    /// Restore the state after accepted iteration `to_iteration` (task-local
    /// index; 0 means the state when the task started).
    Revert { to_iteration: usize },
    Accept,
    AcceptWithEdits { edits: Vec<ManualEdit> },
    /// End an idle task early.
    Complete,
    Abort,
}

impl Session {
    /// Applies a control command to `kind`. Repeat re-executes immediately,
    /// which is why the gateway is needed.
    pub fn control(&mut self, kind: TaskKind, command: ControlCommand, gateway: &mut Gateway) -> Result<&TaskRun> {
        let status = self.task(kind).status;
        match command {
            ControlCommand::Pause => match status {
                TaskStatus::Idle | TaskStatus::AwaitingReview => {
                    if let Some(other) = self
                        .tasks
                        .values()
                        .find(|t| t.kind != kind && t.status.is_active())
                    {
                        return Err(self.invalid(kind, format!("the {} task is active", other.kind)));
                    }
                    self.task_mut(kind).resume_to = Some(status);
                    self.set_status(kind, TaskStatus::Paused, None);
                }
                _ => return Err(self.invalid(kind, "only idle or reviewing tasks can pause")),
            },
            ControlCommand::Resume => {
                if status != TaskStatus::Paused {
                    return Err(self.invalid(kind, "the task is not paused"));
                }
                let back = self.task_mut(kind).resume_to.take().unwrap_or(TaskStatus::Idle);
                self.set_status(kind, back, None);
            }
            ControlCommand::Accept | ControlCommand::AcceptWithEdits { .. } => {
                if status != TaskStatus::AwaitingReview {
                    return Err(self.invalid(kind, "no iteration awaits review"));
                }
                let edits = match command {
                    ControlCommand::AcceptWithEdits { edits } => edits,
                    _ => Vec::new(),
                };
                let decision = if edits.is_empty() {
                    Decision::HumanAccepted
                } else {
                    Decision::EditedThenAccepted
                };
                self.accept_parked(kind, decision, edits)?;
            }
            ControlCommand::Repeat => {
                if status != TaskStatus::AwaitingReview {
                    return Err(self.invalid(kind, "no iteration awaits review"));
                }
                self.discard_parked(kind, Decision::Repeated);
                self.set_status(kind, TaskStatus::Idle, None);
                self.step(kind, gateway)?;
            }
            ControlCommand::Revert { to_iteration } => self.revert(kind, to_iteration)?,
            ControlCommand::Complete => {
                if status != TaskStatus::Idle {
                    return Err(self.invalid(kind, "only an idle task can be completed"));
                }
                self.set_status(kind, TaskStatus::Completed, Some(StopReason::Manual));
            }
            ControlCommand::Abort => {
                if matches!(status, TaskStatus::Completed | TaskStatus::Aborted) {
                    return Err(self.invalid(kind, "the task has already finished"));
                }
                self.discard_parked(kind, Decision::Repeated);
                self.set_status(kind, TaskStatus::Aborted, None);
            }
        }
        Ok(self.task(kind))
    }

    fn discard_parked(&mut self, kind: TaskKind, decision: Decision) {
        let Some(number) = self.task(kind).parked().map(|i| i.number) else {
            return;
        };
        let it = self.task_mut(kind).iterations.last_mut().expect("parked");
        it.decision = Some(decision);
        self.log(JournalEvent::DecisionRecorded {
            number,
            decision,
            snapshot_ref: None,
            edits: Vec::new(),
        });
    }

    fn revert(&mut self, kind: TaskKind, to_iteration: usize) -> Result<()> {
        let status = self.task(kind).status;
        if matches!(
            status,
            TaskStatus::Paused | TaskStatus::Aborted | TaskStatus::AwaitingResponse
        ) {
            return Err(self.invalid(kind, "revert needs an idle, reviewing or completed task"));
        }
        let run = self.task(kind);
        let (snapshot_ref, boundary) = if to_iteration == 0 {
            let snap = run.start_snapshot.clone().ok_or(OrchestratorError::UnknownIteration {
                task: kind,
                index: 0,
            })?;
            let boundary = run.iterations.first().map_or(usize::MAX, |i| i.number - 1);
            (snap, boundary)
        } else {
            let it = run
                .iterations
                .iter()
                .find(|i| i.index == to_iteration && i.is_accepted())
                .ok_or(OrchestratorError::UnknownIteration {
                    task: kind,
                    index: to_iteration,
                })?;
            (it.snapshot_ref.clone().expect("accepted iterations have snapshots"), it.number)
        };
        if let Some(later) = self
            .tasks
            .values()
            .filter(|t| t.kind != kind)
            .flat_map(|t| t.accepted())
            .find(|i| i.number > boundary)
        {
            return Err(self.invalid(
                kind,
                format!(
                    "iteration {} of the {} task was built on the state being reverted",
                    later.number, later.task
                ),
            ));
        }
        let restored = self.snapshot(&snapshot_ref)?;

        let undone: Vec<usize> = self
            .task(kind)
            .iterations
            .iter()
            .filter(|i| i.index > to_iteration && (i.is_accepted() || (i.decision.is_none() && i.error.is_none())))
            .map(|i| i.number)
            .collect();
        for number in undone {
            let it = self
                .task_mut(kind)
                .iterations
                .iter_mut()
                .find(|i| i.number == number)
                .expect("listed above");
            it.decision = Some(Decision::Reverted);
            self.log(JournalEvent::DecisionRecorded {
                number,
                decision: Decision::Reverted,
                snapshot_ref: None,
                edits: Vec::new(),
            });
        }
        self.ontology = restored;
        self.log(JournalEvent::Reverted { task: kind, to_iteration });
        self.set_status(kind, TaskStatus::Idle, None);
        Ok(())
    }
}
