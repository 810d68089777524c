use std::collections::BTreeSet;

use super::{
    Decision, Iteration, JournalEvent, OrchestratorError, ParseResult, Result, Session, StepOutcome, TaskStatus,
};
use crate::dot::{extract_dot_block, hierarchy_from_dot, parse_dot};
use crate::gateway::{detect_refusal_or_empty, ChatRequest, Gateway};
use crate::normalize::union_runs;
use crate::ontology::{
    diff, validate, ConceptId, ManualEdit, Ontology, Property, Provenance, TripleSet, ValidationPolicy,
    ValidationReport,
};
use crate::prompt::{check_length, RenderedPrompt, TaskKind};
use crate::records::{parse_response, restrict_to_batch, rows_to_triples, RecordError, RecordKind, RejectReason, RejectedLine};

/// What a response turned into before review.
struct Proposal {
    ontology: Ontology,
}

type ConceptPair = (ConceptId, ConceptId);

impl Session {
    fn check_can_step(&self, kind: TaskKind) -> Result<()> {
        if kind != TaskKind::Hierarchy && self.task(TaskKind::Hierarchy).status != TaskStatus::Completed {
            return Err(self.invalid(kind, "the hierarchy task must be completed first"));
        }
        if let Some(other) = self
            .tasks
            .values()
            .find(|t| t.kind != kind && t.status.is_active())
        {
            return Err(self.invalid(
                kind,
                format!("the {} task is {:?}", other.kind, other.status),
            ));
        }
        match self.task(kind).status {
            TaskStatus::Idle => Ok(()),
            TaskStatus::AwaitingReview => Err(self.invalid(kind, "an iteration awaits review")),
            TaskStatus::Paused => Err(self.invalid(kind, "the task is paused")),
            TaskStatus::Completed => Err(self.invalid(kind, "the task is completed")),
            TaskStatus::Aborted => Err(self.invalid(kind, "the task was aborted")),
            TaskStatus::AwaitingResponse => Err(self.invalid(kind, "a request is in flight")),
        }
    }

    fn start_task(&mut self, kind: TaskKind) -> Result<()> {
        let plan: Vec<ConceptId> = match kind {
            TaskKind::Property => self.ontology.concept_ids().cloned().collect(),
            TaskKind::Relationship => match &self.config.relationship_scope {
                None => self.ontology.concept_ids().cloned().collect(),
                Some(names) => {
                    let mut ids = Vec::new();
                    for name in names {
                        let c = self.ontology.resolve(name).ok_or_else(|| {
                            OrchestratorError::Config(format!("relationship scope: unknown concept `{name}`"))
                        })?;
                        if !ids.contains(&c.id) {
                            ids.push(c.id.clone());
                        }
                    }
                    ids
                }
            },
            _ => Vec::new(),
        };
        let snapshot = self.store_snapshot(&self.ontology.clone());
        let run = self.task_mut(kind);
        run.start_snapshot = Some(snapshot.clone());
        run.plan = plan.clone();
        self.log(JournalEvent::TaskStarted {
            task: kind,
            start_snapshot: snapshot,
            plan,
        });
        Ok(())
    }

    /// Prompt for the task's next cursor position, plus the batch or pair it covers.
    fn render_next(&self, kind: TaskKind) -> Result<(RenderedPrompt, Vec<ConceptId>, Option<ConceptPair>)> {
        let engine = self.engine();
        Ok(match kind {
            TaskKind::Hierarchy => (
                engine.render_hierarchy(
                    &self.ontology,
                    self.config.hierarchy_batch_size,
                    &self.config.hierarchy_constraints,
                )?,
                Vec::new(),
                None,
            ),
            TaskKind::Definition => {
                let batch: Vec<ConceptId> = self
                    .definition_candidates()
                    .into_iter()
                    .take(self.config.definition_batch_size)
                    .collect();
                (engine.render_definition(&self.ontology, &batch)?, batch, None)
            }
            TaskKind::Property => {
                let batch: Vec<ConceptId> = self
                    .property_remaining()
                    .into_iter()
                    .take(self.config.property_batch_size)
                    .collect();
                (engine.render_property(&self.ontology, &batch)?, batch, None)
            }
            TaskKind::Relationship => {
                let plan = &self.task(kind).plan;
                let cursor = self.cursor(kind);
                let n = plan.len();
                let s = plan[cursor.pair_index / n].clone();
                let o = plan[cursor.pair_index % n].clone();
                let prompt = engine.render_relationship(&self.ontology, &s, &o)?;
                (prompt, Vec::new(), Some((s, o)))
            }
        })
    }

    fn call(&mut self, gateway: &mut Gateway, it: &mut Iteration, text: &str) -> std::result::Result<String, String> {
        let seq = self.next_sequence_no;
        self.next_sequence_no += 1;
        it.sequence_nos.push(seq);
        let response = gateway
            .complete(&ChatRequest::new(self.id, seq, text))
            .map_err(|e| e.to_string())?;
        let body = response.text.clone();
        it.response = Some(response);
        Ok(body)
    }

    /// Runs one loop step for `kind`: render, call, parse, validate, then
    /// park for review or (autonomous mode) commit.
    pub fn step(&mut self, kind: TaskKind, gateway: &mut Gateway) -> Result<StepOutcome> {
        self.check_can_step(kind)?;
        if !self.task(kind).started() {
            self.start_task(kind)?;
        }
        if let Some(reason) = self.evaluate_stopping(kind) {
            self.set_status(kind, TaskStatus::Completed, Some(reason));
            return Ok(StepOutcome::Completed { reason });
        }

        let (prompt, batch, pair) = self.render_next(kind)?;
        let mut it = Iteration {
            number: self.iteration_count() + 1,
            task: kind,
            index: self.task(kind).iterations.len() + 1,
            sequence_nos: Vec::new(),
            cursor: self.cursor(kind),
            batch,
            pair,
            prompt,
            response: None,
            response_class: None,
            auto_repeated: false,
            parse: None,
            quarantine: Vec::new(),
            normalization: Vec::new(),
            delta: Default::default(),
            validation: ValidationReport::empty(ValidationPolicy::Permissive),
            strict_validation: ValidationReport::empty(ValidationPolicy::Strict),
            proposed_ref: None,
            decision: None,
            snapshot_ref: None,
            edits: Vec::new(),
            error: None,
        };
        self.task_mut(kind).status = TaskStatus::AwaitingResponse;

        let proposal = match kind {
            TaskKind::Hierarchy => self.hierarchy_response(gateway, &mut it),
            _ => self.record_response(kind, gateway, &mut it),
        };
        let proposal = match proposal {
            Ok(p) => p,
            Err(error) => {
                it.error = Some(error);
                let number = it.number;
                self.record_iteration(kind, it);
                self.task_mut(kind).status = TaskStatus::Idle;
                return Ok(StepOutcome::Failed { iteration: number });
            }
        };

        let mut proposed = proposal.ontology;
        proposed.set_version(self.ontology.version() + 1);
        it.delta = diff(&self.ontology, &proposed);
        it.validation = validate(&proposed, ValidationPolicy::Permissive);
        it.strict_validation = validate(&proposed, ValidationPolicy::Strict);
        it.proposed_ref = Some(self.store_snapshot(&proposed));
        let number = it.number;
        let auto = self.config.mode == super::ExecutionMode::Autonomous
            && !self.introduces_violations(&proposed);
        self.record_iteration(kind, it);
        if auto {
            self.accept_parked(kind, Decision::AutoAccepted, Vec::new())?;
            Ok(StepOutcome::Committed { iteration: number })
        } else {
            self.set_status(kind, TaskStatus::AwaitingReview, None);
            Ok(StepOutcome::Parked { iteration: number })
        }
    }

    fn record_iteration(&mut self, kind: TaskKind, it: Iteration) {
        self.log(JournalEvent::IterationRecorded {
            iteration: Box::new(it.clone()),
        });
        self.task_mut(kind).iterations.push(it);
    }

    /// Commits the parked proposal, optionally with edits applied on top.
    pub(crate) fn accept_parked(&mut self, kind: TaskKind, decision: Decision, edits: Vec<ManualEdit>) -> Result<()> {
        let parked = self
            .task(kind)
            .parked()
            .ok_or_else(|| self.invalid(kind, "no iteration awaits review"))?;
        let number = parked.number;
        let proposed_ref = parked.proposed_ref.clone().expect("parked iterations carry a proposal");
        let proposed = self.snapshot(&proposed_ref)?;
        let committed = crate::ontology::apply_edits(&proposed, &edits)?;
        let snapshot_ref = self.store_snapshot(&committed);
        self.ontology = committed;
        let it = self
            .task_mut(kind)
            .iterations
            .last_mut()
            .expect("parked iteration exists");
        it.decision = Some(decision);
        it.snapshot_ref = Some(snapshot_ref.clone());
        it.edits = edits.clone();
        self.log(JournalEvent::DecisionRecorded {
            number,
            decision,
            snapshot_ref: Some(snapshot_ref),
            edits,
        });
        match self.evaluate_stopping(kind) {
            Some(reason) => self.set_status(kind, TaskStatus::Completed, Some(reason)),
            None => self.set_status(kind, TaskStatus::Idle, None),
        }
        Ok(())
    }

    fn hierarchy_response(&mut self, gateway: &mut Gateway, it: &mut Iteration) -> std::result::Result<Proposal, String> {
        let text = self.call(gateway, it, &it.prompt.text.clone())?;
        it.response_class = Some(detect_refusal_or_empty(
            &text,
            TaskKind::Hierarchy,
            '|',
            &self.config.gateway.refusal_patterns,
        ));
        let block = extract_dot_block(&text).map_err(|e| e.to_string())?;
        let (graph, diagnostics) = parse_dot(block.text).map_err(|e| e.to_string())?;
        let import = hierarchy_from_dot(&graph, self.config.prompt.edge_direction);
        let mut notes = import.notes.clone();
        if block.additional_blocks > 0 {
            notes.push(format!("{} further DOT block(s) ignored", block.additional_blocks));
        }

        // Wholesale replacement of the hierarchy; records of surviving
        // concepts (definitions, properties, spelling) are kept.
        let concepts = import
            .concepts
            .iter()
            .map(|c| self.ontology.concept(&c.id).cloned().unwrap_or_else(|| c.clone()))
            .collect();
        let mut proposed =
            Ontology::from_parts(concepts, import.edges.clone()).map_err(|e| e.to_string())?;
        let kept: TripleSet = self
            .ontology
            .triples()
            .iter()
            .filter(|t| proposed.contains(&t.subject) && proposed.contains(&t.object))
            .cloned()
            .collect();
        proposed.replace_triples(kept).map_err(|e| e.to_string())?;
        it.parse = Some(ParseResult::Dot {
            graph,
            diagnostics,
            notes,
        });
        Ok(Proposal { ontology: proposed })
    }

    fn record_response(
        &mut self,
        kind: TaskKind,
        gateway: &mut Gateway,
        it: &mut Iteration,
    ) -> std::result::Result<Proposal, String> {
        let (record_kind, delimiter) = match kind {
            TaskKind::Definition => (RecordKind::Definition, self.config.prompt.definition_delimiter),
            TaskKind::Property => (RecordKind::Property, self.config.prompt.property_delimiter),
            _ => (RecordKind::Relationship, self.config.prompt.relationship_delimiter),
        };
        let mut prompt_text = it.prompt.text.clone();
        let (text, batch) = loop {
            let text = self.call(gateway, it, &prompt_text)?;
            match parse_response(&text, record_kind, delimiter, &self.config.codec) {
                Ok(batch) => break (text, batch),
                Err(RecordError::RunawayTable) if !it.auto_repeated => {
                    // One automatic repeat with the format reminder appended.
                    it.auto_repeated = true;
                    prompt_text = format!("{}\n{}\n", prompt_text.trim_end(), self.config.runaway_reminder);
                    it.prompt = check_length(
                        RenderedPrompt {
                            text: prompt_text.clone(),
                            ..it.prompt.clone()
                        },
                        self.config.prompt.soft_limit_chars,
                    );
                }
                Err(e) => return Err(e.to_string()),
            }
        };
        it.response_class = Some(detect_refusal_or_empty(
            &text,
            kind,
            delimiter,
            &self.config.gateway.refusal_patterns,
        ));
        it.parse = Some(ParseResult::Records(batch.clone()));

        let mut proposed = self.ontology.clone();
        match kind {
            TaskKind::Definition => {
                let (rows, rejected) = restrict_to_batch(batch, &it.batch, &self.ontology);
                it.quarantine = rejected;
                for (id, row) in rows {
                    proposed.set_definition(&id, &row.cells[1]).map_err(|e| e.to_string())?;
                }
            }
            TaskKind::Property => {
                let (rows, mut rejected) = restrict_to_batch(batch, &it.batch, &self.ontology);
                for (id, row) in rows {
                    let description = row.cells.get(2).map(String::as_str);
                    let added = proposed
                        .add_property(&id, Property::new(&row.cells[1], description))
                        .map_err(|e| e.to_string())?;
                    if !added {
                        rejected.push(RejectedLine {
                            line_no: row.line_no,
                            raw: row.cells.join(" @ "),
                            reason: RejectReason::DuplicateProperty,
                        });
                    }
                }
                rejected.sort_by_key(|r| r.line_no);
                it.quarantine = rejected;
            }
            _ => {
                let (subject, object) = it.pair.clone().expect("relationship iterations have a pair");
                let provenance = Provenance {
                    iteration: it.number as u32,
                    run: it.cursor.run_index,
                };
                // Rows naming another pair are quarantined before conversion.
                let mut rejected = Vec::new();
                let mut in_pair = batch.clone();
                in_pair.rows.retain(|row| {
                    let resolve = |cell: Option<&String>| {
                        cell.and_then(|c| self.ontology.resolve(c)).map(|c| c.id.clone())
                    };
                    match (resolve(row.cells.first()), resolve(row.cells.get(2))) {
                        (Some(s), Some(o)) if s != subject || o != object => {
                            rejected.push(RejectedLine {
                                line_no: row.line_no,
                                raw: row.cells.join(" | "),
                                reason: RejectReason::PairMismatch,
                            });
                            false
                        }
                        _ => true,
                    }
                });
                let (triples, unresolved) = rows_to_triples(&in_pair, &self.ontology, Some(provenance));
                rejected.extend(unresolved);
                rejected.extend(batch.rejected.iter().cloned());
                let run: TripleSet = triples.into_iter().collect();
                let (normalized, events) = self.config.rules.normalize(&run);
                it.normalization = events;
                let pair_keys: BTreeSet<_> = normalized.keys().cloned().collect();
                let existing: TripleSet = self
                    .ontology
                    .triples()
                    .iter()
                    .filter(|t| pair_keys.contains(&t.key()))
                    .cloned()
                    .collect();
                for t in union_runs([&existing, &normalized]) {
                    proposed.insert_triple(t).map_err(|e| e.to_string())?;
                }
                rejected.sort_by_key(|r| r.line_no);
                it.quarantine = rejected;
            }
        }
        Ok(Proposal { ontology: proposed })
    }
}
