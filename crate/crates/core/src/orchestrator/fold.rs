use std::collections::BTreeMap;

use super::{Iteration, JournalEvent, JournalRecord, OrchestratorError, Result};
use crate::ontology::{apply_edits, Ontology};
use crate::prompt::TaskKind;

/// Rebuilds the committed ontology by folding the journal over `seed`:
/// accepted iterations apply their delta and edits, reverts return to the
/// state the fold itself produced at the target. Snapshots are not read.
pub fn replay_journal(seed: &Ontology, journal: &[JournalRecord]) -> Result<Ontology> {
    let mut state = seed.clone();
    let mut iterations: BTreeMap<usize, &Iteration> = BTreeMap::new();
    let mut after: BTreeMap<usize, Ontology> = BTreeMap::new();
    let mut task_start: BTreeMap<TaskKind, Ontology> = BTreeMap::new();
    for record in journal {
        match &record.event {
            JournalEvent::TaskStarted { task, .. } => {
                task_start.insert(*task, state.clone());
            }
            JournalEvent::IterationRecorded { iteration } => {
                iterations.insert(iteration.number, iteration);
            }
            JournalEvent::DecisionRecorded {
                number, decision, edits, ..
            } if decision.is_accepted() => {
                let it = iterations.get(number).ok_or_else(|| {
                    OrchestratorError::Config(format!("journal decides unknown iteration {number}"))
                })?;
                let proposed = state.apply_delta(&it.delta)?;
                state = apply_edits(&proposed, edits)?;
                after.insert(*number, state.clone());
            }
            JournalEvent::Reverted { task, to_iteration } => {
                let restored = if *to_iteration == 0 {
                    task_start.get(task)
                } else {
                    iterations
                        .values()
                        .find(|i| i.task == *task && i.index == *to_iteration)
                        .and_then(|i| after.get(&i.number))
                };
                state = restored
                    .ok_or(OrchestratorError::UnknownIteration {
                        task: *task,
                        index: *to_iteration,
                    })?
                    .clone();
            }
            _ => {}
        }
    }
    Ok(state)
}
