use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::validate::ParentGraph;
use super::{ConceptId, Ontology, OntologyError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyStats {
    pub concept_count: usize,
    /// Longest child-to-root chain, counted in edges.
    pub max_depth: usize,
    /// Largest sibling set, treating the roots as siblings.
    pub max_breadth: usize,
    pub undefined_count: usize,
}

impl Ontology {
    pub fn stats(&self) -> Result<OntologyStats> {
        let graph = ParentGraph::new(self);
        if !graph.is_acyclic() {
            return Err(OntologyError::CyclicHierarchy);
        }
        let max_depth = longest_chain(&graph);

        let mut siblings: BTreeMap<&ConceptId, usize> = BTreeMap::new();
        for e in self.edges() {
            *siblings.entry(&e.parent).or_default() += 1;
        }
        let widest = siblings.values().copied().max().unwrap_or(0);
        let max_breadth = widest.max(self.roots().len());

        Ok(OntologyStats {
            concept_count: self.len(),
            max_depth,
            max_breadth,
            undefined_count: self.undefined().count(),
        })
    }
}

fn longest_chain(graph: &ParentGraph<'_>) -> usize {
    let n = graph.len();
    let mut depth: Vec<Option<usize>> = vec![None; n];
    for start in 0..n {
        if depth[start].is_some() {
            continue;
        }
        let mut stack = vec![start];
        while let Some(&v) = stack.last() {
            if depth[v].is_some() {
                stack.pop();
                continue;
            }
            let pending: Vec<usize> = graph
                .parents(v)
                .iter()
                .copied()
                .filter(|&p| depth[p].is_none())
                .collect();
            if pending.is_empty() {
                let d = graph
                    .parents(v)
                    .iter()
                    .map(|&p| depth[p].unwrap_or(0) + 1)
                    .max()
                    .unwrap_or(0);
                depth[v] = Some(d);
                stack.pop();
            } else {
                stack.extend(pending);
            }
        }
    }
    depth.into_iter().flatten().max().unwrap_or(0)
}
