use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Concept, HierarchyEdge, Ontology, OntologyError, RelationshipTriple, Result, TripleSet};
use crate::checksum::sha256_hex;

pub const DOCUMENT_SCHEMA: &str = "ontodistill.ontology/v1";

/// Canonical serialized form: sorted arrays plus a checksum over the
/// content (schema, concepts, edges, triples). The version counter is
/// carried but not checksummed, so equal content always has equal checksums.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanonicalDocument {
    pub schema: String,
    pub version: u64,
    pub concepts: Vec<Concept>,
    pub edges: Vec<HierarchyEdge>,
    pub triples: Vec<RelationshipTriple>,
    pub checksum: String,
}

#[derive(Serialize)]
struct ChecksummedContent<'a> {
    schema: &'a str,
    concepts: &'a [Concept],
    edges: &'a [HierarchyEdge],
    triples: &'a [RelationshipTriple],
}

fn content_checksum(
    schema: &str,
    concepts: &[Concept],
    edges: &[HierarchyEdge],
    triples: &[RelationshipTriple],
) -> String {
    let content = ChecksummedContent {
        schema,
        concepts,
        edges,
        triples,
    };
    let bytes = serde_json::to_vec(&content).expect("ontology content serializes");
    sha256_hex(&bytes)
}

impl CanonicalDocument {
    pub fn from_ontology(onto: &Ontology) -> Self {
        let concepts: Vec<Concept> = onto.concepts().cloned().collect();
        let edges: Vec<HierarchyEdge> = onto.edges().cloned().collect();
        let triples: Vec<RelationshipTriple> = onto.triples().iter().cloned().collect();
        let checksum = content_checksum(DOCUMENT_SCHEMA, &concepts, &edges, &triples);
        CanonicalDocument {
            schema: DOCUMENT_SCHEMA.to_string(),
            version: onto.version(),
            concepts,
            edges,
            triples,
            checksum,
        }
    }

    pub fn into_ontology(self) -> Result<Ontology> {
        if self.schema != DOCUMENT_SCHEMA {
            return Err(OntologyError::CorruptSnapshot(format!(
                "unsupported schema {}",
                self.schema
            )));
        }
        let expected = content_checksum(&self.schema, &self.concepts, &self.edges, &self.triples);
        if expected != self.checksum {
            return Err(OntologyError::CorruptSnapshot(format!(
                "checksum mismatch: stored {}, computed {}",
                self.checksum, expected
            )));
        }
        let mut concepts = BTreeMap::new();
        for c in self.concepts {
            if concepts.insert(c.id.clone(), c).is_some() {
                return Err(OntologyError::CorruptSnapshot("duplicate concept id".into()));
            }
        }
        let hierarchy: BTreeSet<HierarchyEdge> = self.edges.into_iter().collect();
        let triples: TripleSet = self.triples.into_iter().collect();
        Ok(Ontology::from_raw(concepts, hierarchy, triples, self.version))
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("document serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| OntologyError::CorruptSnapshot(e.to_string()))
    }
}

impl Ontology {
    /// Content checksum of the canonical document.
    pub fn checksum(&self) -> String {
        CanonicalDocument::from_ontology(self).checksum
    }

    pub fn to_canonical_json(&self) -> String {
        CanonicalDocument::from_ontology(self).to_json()
    }

    pub fn from_canonical_json(text: &str) -> Result<Self> {
        CanonicalDocument::from_json(text)?.into_ontology()
    }
}

// Ontologies (de)serialize as their canonical document, so every embedded
// copy is checksummed.
impl Serialize for Ontology {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        CanonicalDocument::from_ontology(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Ontology {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        CanonicalDocument::deserialize(deserializer)?
            .into_ontology()
            .map_err(serde::de::Error::custom)
    }
}

/// Frozen ontology state in canonical serialized form.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    bytes: Vec<u8>,
}

impl Snapshot {
    pub fn of(onto: &Ontology) -> Self {
        Snapshot {
            bytes: onto.to_canonical_json().into_bytes(),
        }
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Snapshot { bytes }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Address of the snapshot: SHA-256 of its bytes.
    pub fn id(&self) -> String {
        sha256_hex(&self.bytes)
    }

    pub fn restore(&self) -> Result<Ontology> {
        let text = std::str::from_utf8(&self.bytes)
            .map_err(|e| OntologyError::CorruptSnapshot(e.to_string()))?;
        Ontology::from_canonical_json(text)
    }
}
