use std::fmt::Write;

use crate::ontology::{EdgeDirection, Ontology};

fn quote(label: &str) -> String {
    let mut out = String::with_capacity(label.len() + 2);
    out.push('"');
    for c in label.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Canonical DOT with parent -> child edges.
pub fn to_dot(onto: &Ontology) -> String {
    to_dot_with(onto, EdgeDirection::ParentToChild)
}

/// Canonical DOT: every concept as a node statement sorted by id, then edges
/// sorted by (parent, child). Byte-identical for equal hierarchies.
pub fn to_dot_with(onto: &Ontology, direction: EdgeDirection) -> String {
    let mut out = String::from("digraph ontology {\n");
    for concept in onto.concepts() {
        let _ = writeln!(out, "  {};", quote(&concept.display_name));
    }
    let label = |id| {
        onto.concept(id)
            .map(|c| c.display_name.as_str())
            .unwrap_or_else(|| id.as_str())
    };
    let mut edges: Vec<_> = onto.edges().map(|e| (&e.parent, &e.child)).collect();
    edges.sort();
    for (parent, child) in edges {
        let (tail, head) = match direction {
            EdgeDirection::ParentToChild => (parent, child),
            EdgeDirection::ChildToParent => (child, parent),
        };
        let _ = writeln!(out, "  {} -> {};", quote(label(tail)), quote(label(head)));
    }
    out.push_str("}\n");
    out
}
