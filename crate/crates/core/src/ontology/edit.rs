use serde::{Deserialize, Serialize};

use super::{
    validate, Concept, ConceptId, Ontology, OntologyError, RelationshipTriple, Result, TripleSet,
    ValidationPolicy,
};

/// A human correction applied to an ontology.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManualEdit {
    AddConcept {
        name: String,
        #[serde(default)]
        parent: Option<String>,
    },
    /// Without `cascade`, children are re-attached to the removed concept's
    /// parent (or become roots). With it, all descendants are removed too.
    RemoveConcept {
        concept: String,
        #[serde(default)]
        cascade: bool,
    },
    /// Replaces every parent edge of `concept`; `None` makes it a root.
    Reparent {
        concept: String,
        parent: Option<String>,
    },
    RenameConcept { concept: String, new_name: String },
    /// Rehomes the loser's edges and triples onto the winner, then removes the loser.
    MergeConcepts { winner: String, loser: String },
}

impl ManualEdit {
    pub fn remove(concept: &str) -> Self {
        ManualEdit::RemoveConcept {
            concept: concept.to_string(),
            cascade: false,
        }
    }

    pub fn reparent(concept: &str, parent: &str) -> Self {
        ManualEdit::Reparent {
            concept: concept.to_string(),
            parent: Some(parent.to_string()),
        }
    }
}

fn existing(ontology: &Ontology, name: &str) -> Result<ConceptId> {
    let id = ConceptId::from_name(name)?;
    if ontology.contains(&id) {
        Ok(id)
    } else {
        Err(OntologyError::UnknownConcept(name.to_string()))
    }
}

/// Applies one edit and returns the next version.
///
/// The edit is rejected when the result carries a Strict violation that the
/// input did not already have; pre-existing violations do not block edits
/// that leave them in place or fix them.
pub fn apply_edit(ontology: &Ontology, edit: &ManualEdit) -> Result<Ontology> {
    let mut next = ontology.clone();
    match edit {
        ManualEdit::AddConcept { name, parent } => {
            let parent = parent.as_deref().map(|p| existing(ontology, p)).transpose()?;
            let id = next.add_concept(name)?;
            if let Some(p) = parent {
                next.add_edge(&id, &p)?;
            }
        }
        ManualEdit::RemoveConcept { concept, cascade } => {
            let id = existing(ontology, concept)?;
            if *cascade {
                for d in descendants(&next, &id) {
                    next.remove_concept(&d);
                }
            } else {
                let parents: Vec<ConceptId> = next.parents_of(&id).into_iter().cloned().collect();
                let children: Vec<ConceptId> =
                    next.children_of(&id).into_iter().cloned().collect();
                for child in &children {
                    for parent in &parents {
                        if child != parent {
                            next.add_edge(child, parent)?;
                        }
                    }
                }
            }
            next.remove_concept(&id);
        }
        ManualEdit::Reparent { concept, parent } => {
            let id = existing(ontology, concept)?;
            let parent = parent.as_deref().map(|p| existing(ontology, p)).transpose()?;
            for p in next.parents_of(&id).into_iter().cloned().collect::<Vec<_>>() {
                next.remove_edge(&super::HierarchyEdge::new(id.clone(), p));
            }
            if let Some(p) = parent {
                next.add_edge(&id, &p)?;
            }
        }
        ManualEdit::RenameConcept { concept, new_name } => {
            let old = existing(ontology, concept)?;
            let mut renamed = Concept::new(new_name)?;
            if renamed.id != old && ontology.contains(&renamed.id) {
                return Err(OntologyError::DuplicateName(renamed.display_name));
            }
            let record = ontology.concept(&old).expect("checked above");
            renamed.definition = record.definition.clone();
            renamed.properties = record.properties.clone();
            rehome(&mut next, &old, renamed)?;
        }
        ManualEdit::MergeConcepts { winner, loser } => {
            let w = existing(ontology, winner)?;
            let l = existing(ontology, loser)?;
            if w == l {
                return Err(OntologyError::MergeSelf(winner.clone()));
            }
            let mut merged = ontology.concept(&w).expect("checked above").clone();
            let lost = ontology.concept(&l).expect("checked above");
            if !merged.is_defined() {
                merged.definition = lost.definition.clone();
            }
            for p in &lost.properties {
                merged.add_property(p.clone());
            }
            let winner_has_parent = !ontology.parents_of(&w).is_empty();
            if winner_has_parent {
                for p in next.parents_of(&l).into_iter().cloned().collect::<Vec<_>>() {
                    next.remove_edge(&super::HierarchyEdge::new(l.clone(), p));
                }
            }
            rehome(&mut next, &l, merged)?;
        }
    }

    let before = validate(ontology, ValidationPolicy::Strict);
    let after = validate(&next, ValidationPolicy::Strict);
    if !after.introduced_since(&before).is_empty() {
        return Err(OntologyError::Rejected(after));
    }
    next.bump_version();
    Ok(next)
}

/// Applies edits in order, stopping at the first failure.
pub fn apply_edits(ontology: &Ontology, edits: &[ManualEdit]) -> Result<Ontology> {
    let mut current = ontology.clone();
    for edit in edits {
        current = apply_edit(&current, edit)?;
    }
    Ok(current)
}

/// Moves every edge and triple of `from` onto `target` (which may be an
/// existing concept), then drops `from`. Self edges produced by the move
/// are discarded.
fn rehome(onto: &mut Ontology, from: &ConceptId, target: Concept) -> Result<()> {
    let to = target.id.clone();
    let edges: Vec<_> = onto
        .edges()
        .filter(|e| &e.child == from || &e.parent == from)
        .cloned()
        .collect();
    let triples: Vec<RelationshipTriple> = onto
        .triples()
        .iter()
        .filter(|t| &t.subject == from || &t.object == from)
        .cloned()
        .collect();
    onto.remove_concept(from);
    onto.upsert_concept(target);

    for e in edges {
        let child = if &e.child == from { to.clone() } else { e.child };
        let parent = if &e.parent == from { to.clone() } else { e.parent };
        if child != parent {
            onto.add_edge(&child, &parent)?;
        }
    }
    let mut moved = TripleSet::new();
    for mut t in triples {
        if &t.subject == from {
            t.subject = to.clone();
        }
        if &t.object == from {
            t.object = to.clone();
        }
        moved.insert(t);
    }
    for t in moved {
        onto.insert_triple(t)?;
    }
    Ok(())
}

fn descendants(onto: &Ontology, id: &ConceptId) -> Vec<ConceptId> {
    let mut seen = std::collections::BTreeSet::new();
    let mut stack = vec![id.clone()];
    while let Some(v) = stack.pop() {
        for c in onto.children_of(&v) {
            if c != id && seen.insert(c.clone()) {
                stack.push(c.clone());
            }
        }
    }
    seen.into_iter().collect()
}
