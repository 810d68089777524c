use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Concept, ConceptId, HierarchyEdge, Ontology, OntologyError, RelationshipTriple, Result, TripleKey};

/// Exact difference between two ontology states, keyed by concept id.
///
/// `updated_concepts` carries concepts present on both sides whose record
/// changed (definition, properties, display name). `added_triples` holds
/// every triple of `after` that is new or whose record changed; the
/// removed side lists keys absent from `after`, so added and removed sets
/// stay disjoint.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyDelta {
    #[serde(default)]
    pub added_concepts: BTreeMap<ConceptId, Concept>,
    #[serde(default)]
    pub removed_concepts: BTreeSet<ConceptId>,
    #[serde(default)]
    pub updated_concepts: BTreeMap<ConceptId, Concept>,
    #[serde(default)]
    pub added_edges: BTreeSet<HierarchyEdge>,
    #[serde(default)]
    pub removed_edges: BTreeSet<HierarchyEdge>,
    #[serde(default)]
    pub added_triples: Vec<RelationshipTriple>,
    #[serde(default)]
    pub removed_triples: Vec<RelationshipTriple>,
}

impl OntologyDelta {
    pub fn is_empty(&self) -> bool {
        self.added_concepts.is_empty()
            && self.removed_concepts.is_empty()
            && self.updated_concepts.is_empty()
            && self.added_edges.is_empty()
            && self.removed_edges.is_empty()
            && self.added_triples.is_empty()
            && self.removed_triples.is_empty()
    }

    pub fn added_concept_count(&self) -> usize {
        self.added_concepts.len()
    }
}

pub fn diff(before: &Ontology, after: &Ontology) -> OntologyDelta {
    let mut delta = OntologyDelta::default();

    for c in after.concepts() {
        match before.concept(&c.id) {
            None => {
                delta.added_concepts.insert(c.id.clone(), c.clone());
            }
            Some(old) if old != c => {
                delta.updated_concepts.insert(c.id.clone(), c.clone());
            }
            Some(_) => {}
        }
    }
    delta.removed_concepts = before
        .concept_ids()
        .filter(|id| !after.contains(id))
        .cloned()
        .collect();

    let before_edges: BTreeSet<&HierarchyEdge> = before.edges().collect();
    let after_edges: BTreeSet<&HierarchyEdge> = after.edges().collect();
    delta.added_edges = after_edges
        .difference(&before_edges)
        .map(|e| (*e).clone())
        .collect();
    delta.removed_edges = before_edges
        .difference(&after_edges)
        .map(|e| (*e).clone())
        .collect();

    for t in after.triples().iter() {
        if before.triples().get(&t.key()) != Some(t) {
            delta.added_triples.push(t.clone());
        }
    }
    for t in before.triples().iter() {
        if !after.triples().contains_key(&t.key()) {
            delta.removed_triples.push(t.clone());
        }
    }
    delta
}

impl Ontology {
    /// Applies `delta` to a copy of `self`. The version counter is left as is.
    pub fn apply_delta(&self, delta: &OntologyDelta) -> Result<Ontology> {
        let mut out = self.clone();
        for t in &delta.removed_triples {
            out.triples.remove(&t.key());
        }
        for e in &delta.removed_edges {
            out.hierarchy.remove(e);
        }
        for id in &delta.removed_concepts {
            out.remove_concept(id);
        }
        for c in delta.added_concepts.values().chain(delta.updated_concepts.values()) {
            out.upsert_concept(c.clone());
        }
        for e in &delta.added_edges {
            out.add_edge(&e.child, &e.parent)?;
        }
        for t in &delta.added_triples {
            for id in [&t.subject, &t.object] {
                if !out.contains(id) {
                    return Err(OntologyError::UnknownConcept(id.to_string()));
                }
            }
            let key: TripleKey = t.key();
            out.triples.remove(&key);
            out.triples.insert(t.clone());
        }
        Ok(out)
    }
}
