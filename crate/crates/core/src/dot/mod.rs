//! The DOT subset used for ontology hierarchies.
//!
//! Supported: `strict? digraph NAME? { ... }` with bare, numeral, and quoted
//! identifiers; node statements; `->` edges and edge chains; attribute lists
//! and `key = value` graph attributes (kept opaque, reported as warnings);
//! `//`, `/* */` and `#` line comments; `;`, `,` or newline separators.
//! Subgraphs, ports and HTML strings are rejected with a syntax error naming
//! the construct. The grammar is written out in `docs/dot-subset.md`.

mod emit;
mod extract;
mod lexer;
mod parser;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use emit::{to_dot, to_dot_with};
pub use extract::{extract_dot_block, DotBlock};
pub use parser::parse_dot;

use crate::ontology::{Concept, ConceptId, EdgeDirection, HierarchyEdge, Ontology};

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DotError {
    #[error("syntax error at {line}:{column}: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        column: usize,
        expected: String,
        found: String,
    },
    #[error("undirected graphs are not supported")]
    UndirectedGraph,
    #[error("input contains no graph")]
    EmptyGraph,
    #[error("no digraph block with balanced braces found")]
    NoDotBlock,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrScope {
    Graph,
    Node(String),
    Edge(String, String),
    DefaultNode,
    DefaultEdge,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DotAttribute {
    pub scope: AttrScope,
    pub key: String,
    pub value: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DotGraph {
    pub name: Option<String>,
    pub strict: bool,
    /// Node labels in order of first appearance.
    pub nodes: Vec<String>,
    /// `(tail, head)` pairs in source order, duplicates removed.
    pub edges: Vec<(String, String)>,
    pub attributes: Vec<DotAttribute>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WarningKind {
    UnknownAttribute,
    DuplicateEdge,
    ImplicitNode,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DotWarning {
    pub line: usize,
    pub kind: WarningKind,
    pub text: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostics {
    pub warnings: Vec<DotWarning>,
}

impl ParseDiagnostics {
    pub fn count(&self, kind: WarningKind) -> usize {
        self.warnings.iter().filter(|w| w.kind == kind).count()
    }
}

/// Concepts and superclass edges read from a graph.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HierarchyImport {
    pub concepts: Vec<Concept>,
    pub edges: Vec<HierarchyEdge>,
    /// Labels that could not become concepts, merged spellings, self loops.
    pub notes: Vec<String>,
}

impl HierarchyImport {
    pub fn into_ontology(self) -> Ontology {
        Ontology::from_parts(self.concepts, self.edges)
            .expect("import only yields edges between imported concepts")
    }
}

/// Maps graph edges onto superclass edges. Labels go through name
/// canonicalization, so `"Crosswalk User"` and `CrosswalkUser` become one
/// concept (first spelling wins).
pub fn hierarchy_from_dot(graph: &DotGraph, direction: EdgeDirection) -> HierarchyImport {
    let mut import = HierarchyImport::default();
    let mut seen: std::collections::BTreeMap<ConceptId, String> = Default::default();

    for label in &graph.nodes {
        match Concept::new(label) {
            Ok(concept) => {
                if let Some(first) = seen.get(&concept.id) {
                    import
                        .notes
                        .push(format!("`{label}` merged into `{first}` (same canonical name)"));
                } else {
                    seen.insert(concept.id.clone(), concept.display_name.clone());
                    import.concepts.push(concept);
                }
            }
            Err(_) => import
                .notes
                .push(format!("`{label}` has no usable characters and was skipped")),
        }
    }

    let mut edges = std::collections::BTreeSet::new();
    for (tail, head) in &graph.edges {
        let (Ok(tail_id), Ok(head_id)) = (ConceptId::from_name(tail), ConceptId::from_name(head))
        else {
            continue;
        };
        let (child, parent) = match direction {
            EdgeDirection::ParentToChild => (head_id, tail_id),
            EdgeDirection::ChildToParent => (tail_id, head_id),
        };
        if child == parent {
            import
                .notes
                .push(format!("self loop on `{tail}` dropped"));
            continue;
        }
        let edge = HierarchyEdge::new(child, parent);
        if edges.insert(edge.clone()) {
            import.edges.push(edge);
        }
    }
    import
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::fixtures::id;

    #[test]
    fn seed_edge_direction() {
        let (g, _) =
            parse_dot(r#"digraph { "RoadTopologyAndTrafficInfrastructure" -> "Junction" }"#).unwrap();
        let import = hierarchy_from_dot(&g, EdgeDirection::ParentToChild);
        assert_eq!(
            import.edges,
            vec![HierarchyEdge::new(id("Junction"), id("RoadTopologyAndTrafficInfrastructure"))]
        );
        let flipped = hierarchy_from_dot(&g, EdgeDirection::ChildToParent);
        assert_eq!(flipped.edges[0].child, id("RoadTopologyAndTrafficInfrastructure"));
    }

    #[test]
    fn isolated_node_becomes_concept() {
        let (g, _) = parse_dot("digraph { X; a -> b }").unwrap();
        let onto = hierarchy_from_dot(&g, EdgeDirection::ParentToChild).into_ontology();
        assert!(onto.contains(&id("X")));
        assert!(onto.parents_of(&id("X")).is_empty());
        assert_eq!(onto.len(), 3);
    }

    #[test]
    fn spellings_merge_and_self_loops_drop() {
        let (g, _) =
            parse_dot(r#"digraph { "Crosswalk User" -> CrosswalkUser; Pedestrian -> "Crosswalk User" }"#)
                .unwrap();
        let import = hierarchy_from_dot(&g, EdgeDirection::ParentToChild);
        assert_eq!(import.concepts.len(), 2);
        assert_eq!(import.edges.len(), 1);
        assert_eq!(import.notes.len(), 2);
    }
}
