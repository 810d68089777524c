//! Relationship post-processing driven by a rules file: synonym merging,
//! active/passive folding, predicate grouping, blocklist filtering, and the
//! union of independent runs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{display_form, predicate_key, ConceptId, Ontology, RelationshipTriple, TripleSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NormalizeError {
    #[error("rules file: {0}")]
    RulesFile(String),
    #[error("`{0}` appears in more than one synonym set")]
    DuplicateSynonym(String),
    #[error("`{0}` is both active and passive")]
    ActiveEqualsPassive(String),
    #[error("`{0}` appears in more than one active/passive pair")]
    DuplicatePassivePair(String),
    #[error("`{0}` is a member of more than one group")]
    OverlappingGroups(String),
    #[error("group name `{0}` is also a group member")]
    GroupNameIsMember(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynonymSet {
    pub canonical: String,
    pub variants: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassivePair {
    pub active: String,
    pub passive: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredicateGroup {
    pub group_name: String,
    pub members: Vec<String>,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationRules {
    #[serde(default)]
    pub synonym_sets: Vec<SynonymSet>,
    #[serde(default)]
    pub passive_pairs: Vec<PassivePair>,
    #[serde(default)]
    pub groups: Vec<PredicateGroup>,
    #[serde(default)]
    pub blocklist: Vec<String>,
    #[serde(default = "default_true")]
    pub case_insensitive: bool,
}

impl Default for NormalizationRules {
    fn default() -> Self {
        NormalizationRules {
            synonym_sets: Vec::new(),
            passive_pairs: Vec::new(),
            groups: Vec::new(),
            blocklist: Vec::new(),
            case_insensitive: true,
        }
    }
}

pub const SAMPLE_RULES: &str = include_str!("../rules/sample.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Synonyms,
    ActivePassive,
    Groups,
    Blocklist,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationEvent {
    pub stage: Stage,
    pub triple: String,
    /// Rewritten form, or `None` when the triple was removed.
    pub result: Option<String>,
}

fn describe(t: &RelationshipTriple) -> String {
    format!("{} -> {} -> {}", t.subject, t.predicate, t.object)
}

impl NormalizationRules {
    pub fn from_toml(text: &str) -> Result<Self, NormalizeError> {
        let rules: NormalizationRules =
            toml::from_str(text).map_err(|e| NormalizeError::RulesFile(e.to_string()))?;
        rules.check()?;
        Ok(rules)
    }

    pub fn sample() -> Self {
        Self::from_toml(SAMPLE_RULES).expect("shipped rules are valid")
    }

    fn key(&self, predicate: &str) -> String {
        if self.case_insensitive {
            predicate_key(predicate)
        } else {
            display_form(predicate)
        }
    }

    /// Structural checks that make each stage idempotent.
    pub fn check(&self) -> Result<(), NormalizeError> {
        let mut seen = BTreeSet::new();
        for set in &self.synonym_sets {
            for p in std::iter::once(&set.canonical).chain(&set.variants) {
                if !seen.insert(self.key(p)) {
                    return Err(NormalizeError::DuplicateSynonym(p.clone()));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for pair in &self.passive_pairs {
            if self.key(&pair.active) == self.key(&pair.passive) {
                return Err(NormalizeError::ActiveEqualsPassive(pair.active.clone()));
            }
            for p in [&pair.active, &pair.passive] {
                if !seen.insert(self.key(p)) {
                    return Err(NormalizeError::DuplicatePassivePair(p.clone()));
                }
            }
        }
        let mut members = BTreeSet::new();
        for g in &self.groups {
            for m in &g.members {
                if !members.insert(self.key(m)) {
                    return Err(NormalizeError::OverlappingGroups(m.clone()));
                }
            }
        }
        for g in &self.groups {
            if members.contains(&self.key(&g.group_name)) {
                return Err(NormalizeError::GroupNameIsMember(g.group_name.clone()));
            }
        }
        Ok(())
    }

    fn lookup<'a>(&self, pairs: impl Iterator<Item = (&'a String, &'a String)>) -> BTreeMap<String, String> {
        pairs.map(|(from, to)| (self.key(from), display_form(to))).collect()
    }

    /// Rewrites variant predicates to their canonical form.
    pub fn merge_synonyms(&self, triples: &TripleSet) -> (TripleSet, Vec<NormalizationEvent>) {
        let map = self.lookup(
            self.synonym_sets
                .iter()
                .flat_map(|s| s.variants.iter().map(move |v| (v, &s.canonical))),
        );
        self.rewrite(triples, Stage::Synonyms, |t| {
            map.get(&self.key(&t.predicate)).map(|canonical| {
                let mut t = t.clone();
                t.predicate = canonical.clone();
                t
            })
        })
    }

    /// `(s, passive, o)` becomes `(o, active, s)`.
    pub fn fold_active_passive(&self, triples: &TripleSet) -> (TripleSet, Vec<NormalizationEvent>) {
        let map = self.lookup(self.passive_pairs.iter().map(|p| (&p.passive, &p.active)));
        self.rewrite(triples, Stage::ActivePassive, |t| {
            map.get(&self.key(&t.predicate)).map(|active| {
                let mut t = t.clone();
                std::mem::swap(&mut t.subject, &mut t.object);
                t.predicate = active.clone();
                t
            })
        })
    }

    /// Member predicates become the group name; the original is kept as a
    /// variant on the triple.
    pub fn apply_groups(&self, triples: &TripleSet) -> (TripleSet, Vec<NormalizationEvent>) {
        let map = self.lookup(
            self.groups
                .iter()
                .flat_map(|g| g.members.iter().map(move |m| (m, &g.group_name))),
        );
        self.rewrite(triples, Stage::Groups, |t| {
            map.get(&self.key(&t.predicate)).map(|group| {
                let mut t = t.clone();
                t.variants.insert(std::mem::replace(&mut t.predicate, group.clone()));
                t
            })
        })
    }

    pub fn filter_blocklist(&self, triples: &TripleSet) -> (TripleSet, Vec<NormalizationEvent>) {
        let blocked: BTreeSet<String> = self.blocklist.iter().map(|b| self.key(b)).collect();
        let mut out = TripleSet::new();
        let mut log = Vec::new();
        for t in triples.iter() {
            if blocked.contains(&self.key(&t.predicate)) {
                log.push(NormalizationEvent {
                    stage: Stage::Blocklist,
                    triple: describe(t),
                    result: None,
                });
            } else {
                out.insert(t.clone());
            }
        }
        (out, log)
    }

    fn rewrite(
        &self,
        triples: &TripleSet,
        stage: Stage,
        f: impl Fn(&RelationshipTriple) -> Option<RelationshipTriple>,
    ) -> (TripleSet, Vec<NormalizationEvent>) {
        let mut out = TripleSet::new();
        let mut log = Vec::new();
        for t in triples.iter() {
            match f(t) {
                Some(new) => {
                    log.push(NormalizationEvent {
                        stage,
                        triple: describe(t),
                        result: Some(describe(&new)),
                    });
                    out.insert(new);
                }
                None => out.insert(t.clone()),
            }
        }
        (out, log)
    }

    /// All four stages in their fixed order.
    pub fn normalize(&self, triples: &TripleSet) -> (TripleSet, Vec<NormalizationEvent>) {
        let mut log = Vec::new();
        let (t, l) = self.merge_synonyms(triples);
        log.extend(l);
        let (t, l) = self.fold_active_passive(&t);
        log.extend(l);
        let (t, l) = self.apply_groups(&t);
        log.extend(l);
        let (t, l) = self.filter_blocklist(&t);
        log.extend(l);
        (t, log)
    }
}

/// Set union keyed by `(subject, predicate key, object)`; provenance from
/// every run is retained. Independent of run order.
pub fn union_runs<'a>(runs: impl IntoIterator<Item = &'a TripleSet>) -> TripleSet {
    let mut out = TripleSet::new();
    for run in runs {
        out.extend(run.iter().cloned());
    }
    out
}

/// A triple on a subclass pair with no same-predicate triple on the pair
/// one level up. Listed for review; never propagated automatically.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubclassGap {
    pub subject: ConceptId,
    pub predicate: String,
    pub object: ConceptId,
    pub superclass_subject: ConceptId,
    pub superclass_object: ConceptId,
}

pub fn subclass_gap_report(ontology: &Ontology) -> Vec<SubclassGap> {
    let triples = ontology.triples();
    let with_self = |id: &ConceptId| {
        let mut v: Vec<ConceptId> = ontology.parents_of(id).into_iter().cloned().collect();
        v.push(id.clone());
        v
    };
    let mut gaps = BTreeSet::new();
    for t in triples.iter() {
        for sup_s in with_self(&t.subject) {
            for sup_o in with_self(&t.object) {
                if sup_s == t.subject && sup_o == t.object {
                    continue;
                }
                let mut key = t.key();
                key.subject = sup_s.clone();
                key.object = sup_o.clone();
                if !triples.contains_key(&key) {
                    gaps.insert(SubclassGap {
                        subject: t.subject.clone(),
                        predicate: t.predicate.clone(),
                        object: t.object.clone(),
                        superclass_subject: sup_s.clone(),
                        superclass_object: sup_o,
                    });
                }
            }
        }
    }
    gaps.into_iter().collect()
}
