use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ConceptId, Ontology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    MultiParent,
    Cycle,
    DanglingEdge,
    DuplicateName,
    /// A relationship triple refers to a concept that is not in the ontology.
    OrphanConcept,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationPolicy {
    /// Integrity rules plus single-parent and acyclicity. Gates commits.
    #[default]
    Strict,
    /// Integrity rules only. Describes raw model output.
    Permissive,
}

impl ValidationPolicy {
    pub fn rules(self) -> &'static [Rule] {
        match self {
            ValidationPolicy::Strict => &[
                Rule::MultiParent,
                Rule::Cycle,
                Rule::DanglingEdge,
                Rule::DuplicateName,
                Rule::OrphanConcept,
            ],
            ValidationPolicy::Permissive => {
                &[Rule::DanglingEdge, Rule::DuplicateName, Rule::OrphanConcept]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub subjects: Vec<ConceptId>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.rule, self.detail)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub policy: ValidationPolicy,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn empty(policy: ValidationPolicy) -> Self {
        ValidationReport {
            policy,
            violations: Vec::new(),
        }
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, rule: Rule) -> usize {
        self.violations.iter().filter(|v| v.rule == rule).count()
    }

    /// Violations in `self` that are not present in `baseline`.
    pub fn introduced_since<'a>(&'a self, baseline: &ValidationReport) -> Vec<&'a Violation> {
        self.violations
            .iter()
            .filter(|v| {
                !baseline
                    .violations
                    .iter()
                    .any(|b| b.rule == v.rule && b.subjects == v.subjects)
            })
            .collect()
    }

    pub fn summary(&self) -> String {
        if self.violations.is_empty() {
            return "no violations".to_string();
        }
        self.violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Reports every violation of the rules selected by `policy`. The order of
/// violations is deterministic for a given ontology.
pub fn validate(ontology: &Ontology, policy: ValidationPolicy) -> ValidationReport {
    let mut violations = Vec::new();
    for rule in policy.rules() {
        match rule {
            Rule::MultiParent => multi_parent(ontology, &mut violations),
            Rule::Cycle => cycles(ontology, &mut violations),
            Rule::DanglingEdge => dangling_edges(ontology, &mut violations),
            Rule::DuplicateName => duplicate_names(ontology, &mut violations),
            Rule::OrphanConcept => orphan_triples(ontology, &mut violations),
        }
    }
    ValidationReport { policy, violations }
}

fn name_of(ontology: &Ontology, id: &ConceptId) -> String {
    ontology
        .concept(id)
        .map(|c| c.display_name.clone())
        .unwrap_or_else(|| id.to_string())
}

fn multi_parent(ontology: &Ontology, out: &mut Vec<Violation>) {
    let mut parents: BTreeMap<&ConceptId, Vec<&ConceptId>> = BTreeMap::new();
    for e in ontology.edges() {
        parents.entry(&e.child).or_default().push(&e.parent);
    }
    for (child, ps) in parents {
        if ps.len() > 1 {
            let names: Vec<String> = ps.iter().map(|p| name_of(ontology, p)).collect();
            out.push(Violation {
                rule: Rule::MultiParent,
                subjects: vec![child.clone()],
                detail: format!("{}: {}", name_of(ontology, child), names.join(", ")),
            });
        }
    }
}

fn dangling_edges(ontology: &Ontology, out: &mut Vec<Violation>) {
    for e in ontology.edges() {
        let missing: Vec<ConceptId> = [&e.child, &e.parent]
            .into_iter()
            .filter(|id| !ontology.contains(id))
            .cloned()
            .collect();
        if !missing.is_empty() {
            out.push(Violation {
                rule: Rule::DanglingEdge,
                subjects: missing,
                detail: format!("edge {} -> {} has an unknown endpoint", e.parent, e.child),
            });
        }
    }
}

fn orphan_triples(ontology: &Ontology, out: &mut Vec<Violation>) {
    for t in ontology.triples().iter() {
        let missing: Vec<ConceptId> = [&t.subject, &t.object]
            .into_iter()
            .filter(|id| !ontology.contains(id))
            .cloned()
            .collect();
        if !missing.is_empty() {
            out.push(Violation {
                rule: Rule::OrphanConcept,
                subjects: missing,
                detail: format!(
                    "triple {} - {} - {} refers to an unknown concept",
                    t.subject, t.predicate, t.object
                ),
            });
        }
    }
}

fn duplicate_names(ontology: &Ontology, out: &mut Vec<Violation>) {
    let mut by_canonical: BTreeMap<ConceptId, Vec<&ConceptId>> = BTreeMap::new();
    for c in ontology.concepts() {
        match ConceptId::from_name(&c.display_name) {
            Ok(derived) => by_canonical.entry(derived).or_default().push(&c.id),
            Err(_) => out.push(Violation {
                rule: Rule::DuplicateName,
                subjects: vec![c.id.clone()],
                detail: format!("concept {} has an unusable name", c.id),
            }),
        }
    }
    for (canonical, ids) in by_canonical {
        if ids.len() > 1 || ids[0] != &canonical {
            out.push(Violation {
                rule: Rule::DuplicateName,
                subjects: ids.into_iter().cloned().collect(),
                detail: format!("several concepts share the canonical name {canonical}"),
            });
        }
    }
}

/// One violation per strongly connected component of the parent graph that
/// contains a cycle. Subjects are the component members in id order.
fn cycles(ontology: &Ontology, out: &mut Vec<Violation>) {
    let graph = ParentGraph::new(ontology);
    for component in graph.cyclic_components() {
        let path = graph.cycle_path(&component);
        let names: Vec<String> = path.iter().map(|id| name_of(ontology, id)).collect();
        out.push(Violation {
            rule: Rule::Cycle,
            subjects: component,
            detail: names.join(" -> "),
        });
    }
}

/// Adjacency from child to parents over concepts that exist.
pub(crate) struct ParentGraph<'a> {
    nodes: Vec<&'a ConceptId>,
    index: BTreeMap<&'a ConceptId, usize>,
    parents: Vec<Vec<usize>>,
}

impl<'a> ParentGraph<'a> {
    pub(crate) fn new(ontology: &'a Ontology) -> Self {
        let nodes: Vec<&ConceptId> = ontology.concept_ids().collect();
        let index: BTreeMap<&ConceptId, usize> =
            nodes.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut parents = vec![Vec::new(); nodes.len()];
        for e in ontology.edges() {
            if let (Some(&c), Some(&p)) = (index.get(&e.child), index.get(&e.parent)) {
                parents[c].push(p);
            }
        }
        ParentGraph {
            nodes,
            index,
            parents,
        }
    }

    /// Tarjan's algorithm, iterative so deep hierarchies cannot overflow the stack.
    pub(crate) fn cyclic_components(&self) -> Vec<Vec<ConceptId>> {
        let n = self.nodes.len();
        let mut index_of = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut on_stack = vec![false; n];
        let mut stack: Vec<usize> = Vec::new();
        let mut next_index = 0usize;
        let mut components = Vec::new();

        for start in 0..n {
            if index_of[start] != usize::MAX {
                continue;
            }
            // (node, next parent position)
            let mut work: Vec<(usize, usize)> = vec![(start, 0)];
            index_of[start] = next_index;
            low[start] = next_index;
            next_index += 1;
            stack.push(start);
            on_stack[start] = true;

            while let Some(&mut (v, ref mut pos)) = work.last_mut() {
                if *pos < self.parents[v].len() {
                    let w = self.parents[v][*pos];
                    *pos += 1;
                    if index_of[w] == usize::MAX {
                        index_of[w] = next_index;
                        low[w] = next_index;
                        next_index += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        work.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index_of[w]);
                    }
                    continue;
                }
                work.pop();
                if let Some(&(u, _)) = work.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index_of[v] {
                    let mut members = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        members.push(w);
                        if w == v {
                            break;
                        }
                    }
                    let self_loop = members.len() == 1 && self.parents[v].contains(&v);
                    if members.len() > 1 || self_loop {
                        let mut ids: Vec<ConceptId> =
                            members.iter().map(|&m| self.nodes[m].clone()).collect();
                        ids.sort();
                        components.push(ids);
                    }
                }
            }
        }
        components.sort();
        components
    }

    /// A closed walk through `component` starting at its smallest member.
    fn cycle_path(&self, component: &[ConceptId]) -> Vec<ConceptId> {
        let members: BTreeSet<usize> = component
            .iter()
            .filter_map(|id| self.index.get(id).copied())
            .collect();
        let Some(&start) = members.iter().next() else {
            return Vec::new();
        };
        // BFS inside the component for the shortest way back to `start`.
        let mut prev: BTreeMap<usize, usize> = BTreeMap::new();
        let mut queue = std::collections::VecDeque::from([start]);
        let mut closing = None;
        while let Some(v) = queue.pop_front() {
            for &w in &self.parents[v] {
                if !members.contains(&w) {
                    continue;
                }
                if w == start {
                    closing = Some(v);
                    break;
                }
                if w != start && !prev.contains_key(&w) {
                    prev.insert(w, v);
                    queue.push_back(w);
                }
            }
            if closing.is_some() {
                break;
            }
        }
        let mut path = vec![self.nodes[start].clone()];
        if let Some(mut v) = closing {
            let mut tail = Vec::new();
            while v != start {
                tail.push(self.nodes[v].clone());
                v = prev[&v];
            }
            tail.reverse();
            path.extend(tail);
        }
        path.push(self.nodes[start].clone());
        path
    }

    pub(crate) fn is_acyclic(&self) -> bool {
        self.cyclic_components().is_empty()
    }

    pub(crate) fn len(&self) -> usize {
        self.nodes.len()
    }

    pub(crate) fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }
}
