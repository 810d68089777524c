use std::collections::BTreeSet;

use super::lexer::{lex, Tok, Token};
use super::{AttrScope, DotAttribute, DotError, DotGraph, DotWarning, ParseDiagnostics, WarningKind};

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    graph: DotGraph,
    diagnostics: ParseDiagnostics,
    declared: BTreeSet<String>,
    edge_set: BTreeSet<(String, String)>,
    eof_line: usize,
}

/// Parses one directed graph in the supported subset.
pub fn parse_dot(text: &str) -> Result<(DotGraph, ParseDiagnostics), DotError> {
    let tokens = lex(text)?;
    if tokens.is_empty() {
        return Err(DotError::EmptyGraph);
    }
    let mut p = Parser {
        tokens,
        pos: 0,
        graph: DotGraph::default(),
        diagnostics: ParseDiagnostics::default(),
        declared: BTreeSet::new(),
        edge_set: BTreeSet::new(),
        eof_line: text.lines().count().max(1),
    };
    p.graph_header()?;
    p.statements()?;
    if let Some(t) = p.tokens.get(p.pos) {
        return Err(DotError::Syntax {
            line: t.line,
            column: t.column,
            expected: "end of input".into(),
            found: t.tok.describe(),
        });
    }
    Ok((p.graph, p.diagnostics))
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.tokens.get(self.pos + offset).map(|t| &t.tok)
    }

    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map(|t| t.line)
            .unwrap_or(self.eof_line)
    }

    fn error(&self, expected: &str) -> DotError {
        match self.tokens.get(self.pos) {
            Some(t) => DotError::Syntax {
                line: t.line,
                column: t.column,
                expected: expected.to_string(),
                found: t.tok.describe(),
            },
            None => DotError::Syntax {
                line: self.eof_line,
                column: 1,
                expected: expected.to_string(),
                found: "end of input".into(),
            },
        }
    }

    fn unsupported(&self, construct: &str) -> DotError {
        self.error(&format!("a supported statement ({construct} is not supported)"))
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, expected: &str) -> Result<(), DotError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn id(&mut self, expected: &str) -> Result<String, DotError> {
        match self.peek() {
            Some(Tok::Id { text, .. }) => {
                let text = text.clone();
                self.pos += 1;
                Ok(text)
            }
            Some(Tok::Html) => Err(self.unsupported("an HTML string")),
            _ => Err(self.error(expected)),
        }
    }

    fn graph_header(&mut self) -> Result<(), DotError> {
        if self.peek().is_some_and(|t| t.is_keyword("strict")) {
            self.pos += 1;
            self.graph.strict = true;
        }
        match self.peek() {
            Some(t) if t.is_keyword("digraph") => self.pos += 1,
            Some(t) if t.is_keyword("graph") => return Err(DotError::UndirectedGraph),
            _ => return Err(self.error("`digraph`")),
        }
        if let Some(Tok::Id { text, .. }) = self.peek() {
            self.graph.name = Some(text.clone());
            self.pos += 1;
        }
        self.expect(Tok::LBrace, "`{`")
    }

    fn statements(&mut self) -> Result<(), DotError> {
        loop {
            match self.peek() {
                None => return Err(self.error("`}`")),
                Some(Tok::RBrace) => {
                    self.pos += 1;
                    return Ok(());
                }
                Some(Tok::Semi) | Some(Tok::Comma) => self.pos += 1,
                Some(Tok::LBrace) => return Err(self.unsupported("an anonymous subgraph")),
                Some(t) if t.is_keyword("subgraph") => return Err(self.unsupported("subgraph")),
                Some(t)
                    if (t.is_keyword("node") || t.is_keyword("edge") || t.is_keyword("graph"))
                        && self.peek_at(1) == Some(&Tok::LBracket) =>
                {
                    let scope = match self.bump() {
                        Some(t) if t.is_keyword("node") => AttrScope::DefaultNode,
                        Some(t) if t.is_keyword("edge") => AttrScope::DefaultEdge,
                        _ => AttrScope::Graph,
                    };
                    self.attr_lists(scope)?;
                }
                Some(t) if t.is_keyword("digraph") || t.is_keyword("strict") => {
                    return Err(self.unsupported("a nested graph"))
                }
                Some(Tok::Id { .. }) | Some(Tok::Html) => self.id_statement()?,
                Some(_) => return Err(self.error("a statement or `}`")),
            }
        }
    }

    fn id_statement(&mut self) -> Result<(), DotError> {
        let line = self.line();
        let first = self.id("an identifier")?;
        match self.peek() {
            Some(Tok::Eq) => {
                self.pos += 1;
                let value = self.id("an attribute value")?;
                self.warn_attr(line, &first);
                self.graph.attributes.push(DotAttribute {
                    scope: AttrScope::Graph,
                    key: first,
                    value: Some(value),
                });
                Ok(())
            }
            Some(Tok::Colon) => Err(self.unsupported("a node port")),
            Some(Tok::UndirectedOp) => Err(DotError::UndirectedGraph),
            Some(Tok::Arrow) => {
                let mut chain = vec![first];
                while self.peek() == Some(&Tok::Arrow) {
                    self.pos += 1;
                    match self.peek() {
                        Some(Tok::LBrace) => return Err(self.unsupported("a subgraph edge operand")),
                        Some(t) if t.is_keyword("subgraph") => {
                            return Err(self.unsupported("a subgraph edge operand"))
                        }
                        _ => {}
                    }
                    chain.push(self.id("an edge target")?);
                    match self.peek() {
                        Some(Tok::Colon) => return Err(self.unsupported("a node port")),
                        Some(Tok::UndirectedOp) => return Err(DotError::UndirectedGraph),
                        _ => {}
                    }
                }
                for label in &chain {
                    if !self.declared.contains(label) {
                        self.diagnostics.warnings.push(DotWarning {
                            line,
                            kind: WarningKind::ImplicitNode,
                            text: format!("node `{label}` first appears in an edge"),
                        });
                        self.declare(label);
                    }
                }
                let pairs: Vec<(String, String)> = chain
                    .windows(2)
                    .map(|w| (w[0].clone(), w[1].clone()))
                    .collect();
                for (tail, head) in &pairs {
                    if self.edge_set.insert((tail.clone(), head.clone())) {
                        self.graph.edges.push((tail.clone(), head.clone()));
                    } else {
                        self.diagnostics.warnings.push(DotWarning {
                            line,
                            kind: WarningKind::DuplicateEdge,
                            text: format!("duplicate edge `{tail}` -> `{head}` ignored"),
                        });
                    }
                }
                if self.peek() == Some(&Tok::LBracket) {
                    let scope = match pairs.as_slice() {
                        [(t, h)] => AttrScope::Edge(t.clone(), h.clone()),
                        _ => AttrScope::DefaultEdge,
                    };
                    self.attr_lists(scope)?;
                }
                Ok(())
            }
            _ => {
                self.declare(&first);
                if self.peek() == Some(&Tok::LBracket) {
                    self.attr_lists(AttrScope::Node(first))?;
                }
                Ok(())
            }
        }
    }

    fn declare(&mut self, label: &str) {
        if self.declared.insert(label.to_string()) {
            self.graph.nodes.push(label.to_string());
        }
    }

    fn warn_attr(&mut self, line: usize, key: &str) {
        self.diagnostics.warnings.push(DotWarning {
            line,
            kind: WarningKind::UnknownAttribute,
            text: format!("attribute `{key}` kept but not interpreted"),
        });
    }

    fn attr_lists(&mut self, scope: AttrScope) -> Result<(), DotError> {
        while self.peek() == Some(&Tok::LBracket) {
            self.pos += 1;
            loop {
                match self.peek() {
                    Some(Tok::RBracket) => {
                        self.pos += 1;
                        break;
                    }
                    Some(Tok::Semi) | Some(Tok::Comma) => self.pos += 1,
                    _ => {
                        let line = self.line();
                        let key = self.id("an attribute name or `]`")?;
                        let value = if self.peek() == Some(&Tok::Eq) {
                            self.pos += 1;
                            Some(self.id("an attribute value")?)
                        } else {
                            None
                        };
                        self.warn_attr(line, &key);
                        self.graph.attributes.push(DotAttribute {
                            scope: scope.clone(),
                            key,
                            value,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_example() {
        let (g, _) =
            parse_dot(r#"digraph { "RoadTopologyAndTrafficInfrastructure" -> "Junction" }"#).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
    }

    #[test]
    fn chains_expand() {
        let (g, _) = parse_dot("digraph G { a -> b -> c }").unwrap();
        assert_eq!(g.name.as_deref(), Some("G"));
        assert_eq!(
            g.edges,
            vec![("a".into(), "b".into()), ("b".into(), "c".into())]
        );
    }

    #[test]
    fn undirected_is_rejected() {
        assert_eq!(parse_dot("graph { a -- b }").unwrap_err(), DotError::UndirectedGraph);
        assert_eq!(parse_dot("digraph { a -- b }").unwrap_err(), DotError::UndirectedGraph);
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse_dot("  // nothing\n").unwrap_err(), DotError::EmptyGraph);
        assert!(parse_dot("digraph ontology {\n}\n").is_ok());
    }

    #[test]
    fn attributes_are_opaque_warnings() {
        let text = "digraph {\n rankdir=LR;\n node [shape=box]\n a [label=\"A\", color=blue]\n a -> b [style=dashed]\n}";
        let (g, d) = parse_dot(text).unwrap();
        assert_eq!(g.attributes.len(), 5);
        assert_eq!(d.count(WarningKind::UnknownAttribute), 5);
        assert_eq!(g.nodes, vec!["a".to_string(), "b".to_string()]);
        assert_eq!(d.count(WarningKind::ImplicitNode), 1);
    }

    #[test]
    fn duplicate_edges_warn_once_each() {
        let (g, d) = parse_dot("digraph { a; b; a -> b\n a -> b; a -> b }").unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(d.count(WarningKind::DuplicateEdge), 2);
        assert_eq!(d.warnings[0].line, 2);
    }

    #[test]
    fn unsupported_constructs_are_named() {
        for text in [
            "digraph { subgraph cluster { a } }",
            "digraph { a:p1 -> b }",
            "digraph { a -> { b c } }",
            "digraph { <b>x</b> }",
        ] {
            match parse_dot(text).unwrap_err() {
                DotError::Syntax { expected, .. } => {
                    assert!(expected.contains("not supported"), "{text}: {expected}")
                }
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn syntax_error_position() {
        match parse_dot("digraph {\n  a -> ;\n}").unwrap_err() {
            DotError::Syntax {
                line,
                column,
                expected,
                ..
            } => {
                assert_eq!((line, column), (2, 8));
                assert_eq!(expected, "an edge target");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trailing_garbage_is_an_error() {
        assert!(parse_dot("digraph { a } digraph { b }").is_err());
        assert!(parse_dot("digraph { a ").is_err());
    }

    #[test]
    fn strict_and_keywords_are_case_insensitive() {
        let (g, _) = parse_dot("STRICT DiGraph x { a -> b }").unwrap();
        assert!(g.strict);
    }
}
