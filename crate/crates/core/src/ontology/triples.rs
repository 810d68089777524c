use std::collections::btree_map::{self, BTreeMap};
use std::collections::BTreeSet;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{canonical_name, display_form, ConceptId};

/// Where a triple was observed: the iteration that produced it and the
/// independent run index within that pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub iteration: u32,
    pub run: u32,
}

/// Equality key for predicates: case-folded and whitespace-collapsed.
pub fn predicate_key(predicate: &str) -> String {
    canonical_name(predicate)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TripleKey {
    pub subject: ConceptId,
    pub predicate: String,
    pub object: ConceptId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationshipTriple {
    pub subject: ConceptId,
    pub predicate: String,
    pub object: ConceptId,
    /// Original predicates folded into this one by grouping.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub variants: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub provenance: BTreeSet<Provenance>,
}

impl RelationshipTriple {
    pub fn new(subject: ConceptId, predicate: &str, object: ConceptId) -> Self {
        RelationshipTriple {
            subject,
            predicate: display_form(predicate),
            object,
            variants: BTreeSet::new(),
            provenance: BTreeSet::new(),
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance.insert(provenance);
        self
    }

    pub fn key(&self) -> TripleKey {
        TripleKey {
            subject: self.subject.clone(),
            predicate: predicate_key(&self.predicate),
            object: self.object.clone(),
        }
    }

    /// Merges a same-key triple. The smallest predicate spelling wins, so
    /// the result does not depend on insertion order.
    fn absorb(&mut self, other: RelationshipTriple) {
        if other.predicate < self.predicate {
            self.predicate = other.predicate;
        }
        self.variants.extend(other.variants);
        self.provenance.extend(other.provenance);
    }
}

/// Triples keyed by `(subject, predicate key, object)`. Inserting a triple
/// whose key is present merges variants and provenance into the existing
/// entry (order-independent: see `absorb`).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TripleSet(BTreeMap<TripleKey, RelationshipTriple>);

impl TripleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, triple: RelationshipTriple) {
        match self.0.entry(triple.key()) {
            btree_map::Entry::Occupied(mut e) => e.get_mut().absorb(triple),
            btree_map::Entry::Vacant(e) => {
                e.insert(triple);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &RelationshipTriple> {
        self.0.values()
    }

    pub fn keys(&self) -> impl Iterator<Item = &TripleKey> {
        self.0.keys()
    }

    pub fn get(&self, key: &TripleKey) -> Option<&RelationshipTriple> {
        self.0.get(key)
    }

    pub fn contains_key(&self, key: &TripleKey) -> bool {
        self.0.contains_key(key)
    }

    pub fn remove(&mut self, key: &TripleKey) -> Option<RelationshipTriple> {
        self.0.remove(key)
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&RelationshipTriple) -> bool) {
        self.0.retain(|_, t| keep(t));
    }

    pub fn extend(&mut self, other: impl IntoIterator<Item = RelationshipTriple>) {
        for t in other {
            self.insert(t);
        }
    }
}

impl IntoIterator for TripleSet {
    type Item = RelationshipTriple;
    type IntoIter = btree_map::IntoValues<TripleKey, RelationshipTriple>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_values()
    }
}

impl FromIterator<RelationshipTriple> for TripleSet {
    fn from_iter<I: IntoIterator<Item = RelationshipTriple>>(iter: I) -> Self {
        let mut set = TripleSet::new();
        set.extend(iter);
        set
    }
}

impl Serialize for TripleSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.values())
    }
}

impl<'de> Deserialize<'de> for TripleSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let triples = Vec::<RelationshipTriple>::deserialize(deserializer)?;
        Ok(triples.into_iter().collect())
    }
}
