//! In-memory ontology model.
//!
//! An [`Ontology`] holds concepts keyed by [`ConceptId`], a set of
//! superclass/subclass edges, and relationship triples. Every edge and
//! triple endpoint must resolve to a concept; the mutating methods enforce
//! that. Structural rules that model output is allowed to break (single
//! parent, acyclicity) are *not* enforced here, they are reported by
//! [`validate`] so that raw output stays representable for review.

mod diff;
mod doc;
mod edit;
mod stats;
mod triples;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diff::{diff, OntologyDelta};
pub use doc::{CanonicalDocument, Snapshot, DOCUMENT_SCHEMA};
pub use edit::{apply_edit, apply_edits, ManualEdit};
pub use stats::OntologyStats;
pub use triples::{predicate_key, Provenance, RelationshipTriple, TripleKey, TripleSet};
pub use validate::{validate, Rule, ValidationPolicy, ValidationReport, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OntologyError {
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("invalid concept name `{0}`")]
    InvalidName(String),
    #[error("a concept named `{0}` already exists")]
    DuplicateName(String),
    #[error("concept `{0}` cannot be its own parent")]
    SelfEdge(String),
    #[error("cannot merge concept `{0}` into itself")]
    MergeSelf(String),
    #[error("hierarchy contains a cycle")]
    CyclicHierarchy,
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("edit rejected: {}", .0.summary())]
    Rejected(ValidationReport),
}

pub type Result<T, E = OntologyError> = std::result::Result<T, E>;

/// Trim and collapse internal whitespace runs to a single space.
pub fn display_form(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Case-folded, whitespace-collapsed form used for name equality.
pub fn canonical_name(name: &str) -> String {
    display_form(name).to_lowercase()
}

/// Stable concept identifier: the canonical name reduced to its
/// alphanumeric characters, so `Crosswalk User` and `CrosswalkUser` share
/// one id.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(String);

impl ConceptId {
    pub fn from_name(name: &str) -> Result<Self> {
        let slug: String = canonical_name(name)
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect();
        if slug.is_empty() {
            return Err(OntologyError::InvalidName(name.to_string()));
        }
        Ok(ConceptId(slug))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Property {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl Property {
    pub fn new(name: &str, description: Option<&str>) -> Self {
        Property {
            name: display_form(name),
            description: description
                .map(str::trim)
                .filter(|d| !d.is_empty())
                .map(str::to_string),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: ConceptId,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definition: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub properties: Vec<Property>,
}

impl Concept {
    pub fn new(name: &str) -> Result<Self> {
        let display_name = display_form(name);
        let id = ConceptId::from_name(&display_name)?;
        Ok(Concept {
            id,
            display_name,
            definition: None,
            properties: Vec::new(),
        })
    }

    pub fn is_defined(&self) -> bool {
        self.definition
            .as_deref()
            .is_some_and(|d| !d.trim().is_empty())
    }

    /// Adds a property unless one with the same canonical name exists.
    /// Properties stay sorted by canonical name.
    pub fn add_property(&mut self, property: Property) -> bool {
        let key = canonical_name(&property.name);
        match self
            .properties
            .binary_search_by(|p| canonical_name(&p.name).cmp(&key))
        {
            Ok(_) => false,
            Err(pos) => {
                self.properties.insert(pos, property);
                true
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HierarchyEdge {
    pub child: ConceptId,
    pub parent: ConceptId,
}

impl HierarchyEdge {
    pub fn new(child: ConceptId, parent: ConceptId) -> Self {
        HierarchyEdge { child, parent }
    }
}

/// Which side of a DOT edge is the superclass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeDirection {
    /// `Parent -> Child`
    #[default]
    ParentToChild,
    /// `Child -> Parent`
    ChildToParent,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Ontology {
    concepts: BTreeMap<ConceptId, Concept>,
    hierarchy: BTreeSet<HierarchyEdge>,
    triples: TripleSet,
    version: u64,
}

impl Ontology {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an ontology from concepts and edges, materializing edge
    /// endpoints that are missing from `concepts`.
    pub fn from_parts(concepts: Vec<Concept>, edges: Vec<HierarchyEdge>) -> Result<Self> {
        let mut onto = Ontology::new();
        for c in concepts {
            onto.concepts.entry(c.id.clone()).or_insert(c);
        }
        for e in edges {
            onto.add_edge(&e.child, &e.parent)?;
        }
        Ok(onto)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn set_version(&mut self, version: u64) {
        self.version = version;
    }

    pub fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn concept_ids(&self) -> impl Iterator<Item = &ConceptId> {
        self.concepts.keys()
    }

    pub fn concept(&self, id: &ConceptId) -> Option<&Concept> {
        self.concepts.get(id)
    }

    pub fn contains(&self, id: &ConceptId) -> bool {
        self.concepts.contains_key(id)
    }

    /// Looks a concept up by any spelling of its name.
    pub fn resolve(&self, name: &str) -> Option<&Concept> {
        let id = ConceptId::from_name(name).ok()?;
        self.concepts.get(&id)
    }

    pub fn edges(&self) -> impl Iterator<Item = &HierarchyEdge> {
        self.hierarchy.iter()
    }

    pub fn edge_count(&self) -> usize {
        self.hierarchy.len()
    }

    pub fn triples(&self) -> &TripleSet {
        &self.triples
    }

    pub fn parents_of(&self, id: &ConceptId) -> Vec<&ConceptId> {
        self.hierarchy
            .iter()
            .filter(|e| &e.child == id)
            .map(|e| &e.parent)
            .collect()
    }

    pub fn children_of(&self, id: &ConceptId) -> Vec<&ConceptId> {
        self.hierarchy
            .iter()
            .filter(|e| &e.parent == id)
            .map(|e| &e.child)
            .collect()
    }

    /// Concepts with no parent edge, in id order.
    pub fn roots(&self) -> Vec<&ConceptId> {
        let with_parent: BTreeSet<&ConceptId> = self.hierarchy.iter().map(|e| &e.child).collect();
        self.concepts
            .keys()
            .filter(|id| !with_parent.contains(id))
            .collect()
    }

    pub fn add_concept(&mut self, name: &str) -> Result<ConceptId> {
        let concept = Concept::new(name)?;
        if self.concepts.contains_key(&concept.id) {
            return Err(OntologyError::DuplicateName(concept.display_name));
        }
        let id = concept.id.clone();
        self.concepts.insert(id.clone(), concept);
        Ok(id)
    }

    /// Returns the id for `name`, adding the concept if needed.
    pub fn ensure_concept(&mut self, name: &str) -> Result<ConceptId> {
        let concept = Concept::new(name)?;
        let id = concept.id.clone();
        self.concepts.entry(id.clone()).or_insert(concept);
        Ok(id)
    }

    /// Inserts or replaces a concept record wholesale.
    pub fn upsert_concept(&mut self, concept: Concept) {
        self.concepts.insert(concept.id.clone(), concept);
    }

    pub fn concept_mut(&mut self, id: &ConceptId) -> Option<&mut Concept> {
        self.concepts.get_mut(id)
    }

    pub fn add_edge(&mut self, child: &ConceptId, parent: &ConceptId) -> Result<bool> {
        if child == parent {
            return Err(OntologyError::SelfEdge(child.to_string()));
        }
        for id in [child, parent] {
            if !self.concepts.contains_key(id) {
                return Err(OntologyError::UnknownConcept(id.to_string()));
            }
        }
        Ok(self
            .hierarchy
            .insert(HierarchyEdge::new(child.clone(), parent.clone())))
    }

    pub fn remove_edge(&mut self, edge: &HierarchyEdge) -> bool {
        self.hierarchy.remove(edge)
    }

    /// Removes a concept together with every edge and triple touching it.
    pub fn remove_concept(&mut self, id: &ConceptId) -> Option<Concept> {
        let removed = self.concepts.remove(id)?;
        self.hierarchy.retain(|e| &e.child != id && &e.parent != id);
        self.triples.retain(|t| &t.subject != id && &t.object != id);
        Some(removed)
    }

    pub fn set_definition(&mut self, id: &ConceptId, definition: &str) -> Result<()> {
        let concept = self
            .concepts
            .get_mut(id)
            .ok_or_else(|| OntologyError::UnknownConcept(id.to_string()))?;
        let text = definition.trim();
        concept.definition = (!text.is_empty()).then(|| text.to_string());
        Ok(())
    }

    /// Returns `Ok(false)` when the concept already has a property of that name.
    pub fn add_property(&mut self, id: &ConceptId, property: Property) -> Result<bool> {
        let concept = self
            .concepts
            .get_mut(id)
            .ok_or_else(|| OntologyError::UnknownConcept(id.to_string()))?;
        Ok(concept.add_property(property))
    }

    pub fn insert_triple(&mut self, triple: RelationshipTriple) -> Result<()> {
        for id in [&triple.subject, &triple.object] {
            if !self.concepts.contains_key(id) {
                return Err(OntologyError::UnknownConcept(id.to_string()));
            }
        }
        self.triples.insert(triple);
        Ok(())
    }

    pub fn replace_triples(&mut self, triples: TripleSet) -> Result<()> {
        for t in triples.iter() {
            for id in [&t.subject, &t.object] {
                if !self.concepts.contains_key(id) {
                    return Err(OntologyError::UnknownConcept(id.to_string()));
                }
            }
        }
        self.triples = triples;
        Ok(())
    }

    pub fn undefined(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values().filter(|c| !c.is_defined())
    }

    /// Raw access for the document codec; callers must keep endpoints valid.
    pub(crate) fn from_raw(
        concepts: BTreeMap<ConceptId, Concept>,
        hierarchy: BTreeSet<HierarchyEdge>,
        triples: TripleSet,
        version: u64,
    ) -> Self {
        Ontology {
            concepts,
            hierarchy,
            triples,
            version,
        }
    }

    /// Same concepts, hierarchy and triples, ignoring the version counter.
    pub fn same_content(&self, other: &Ontology) -> bool {
        self.concepts == other.concepts
            && self.hierarchy == other.hierarchy
            && self.triples == other.triples
    }
}
