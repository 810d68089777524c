//! Fixture loading and session drivers shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use ontodistill::dot::{hierarchy_from_dot, parse_dot};
use ontodistill::gateway::{
    FnTransport, Gateway, GatewayConfig, GatewayMode, ScriptedTransport, Transcript, TransportFailure,
};
use ontodistill::normalize::NormalizationRules;
use ontodistill::ontology::{ConceptId, EdgeDirection, Ontology};
use ontodistill::orchestrator::{
    run_task, AcceptAll, ControlCommand, DecisionScript, Reviewer, RunOutcome, Session, SessionConfig,
};
use ontodistill::prompt::{TaskKind, DEFAULT_DOMAIN};
use serde::Deserialize;

pub fn fixture_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture_path(rel)).unwrap_or_else(|e| panic!("fixture {rel}: {e}"))
}

pub fn load_dot(rel: &str) -> Ontology {
    let (graph, _) = parse_dot(&fixture(rel)).unwrap_or_else(|e| panic!("fixture {rel}: {e}"));
    hierarchy_from_dot(&graph, EdgeDirection::ParentToChild).into_ontology()
}

pub fn id(name: &str) -> ConceptId {
    ConceptId::from_name(name).unwrap()
}

pub fn parents(onto: &Ontology, name: &str) -> Vec<String> {
    onto.parents_of(&id(name)).into_iter().map(|p| p.to_string()).collect()
}

pub fn recording(transport: impl ontodistill::gateway::ChatTransport + 'static) -> Gateway {
    let config = GatewayConfig {
        mode: GatewayMode::Record,
        ..GatewayConfig::default()
    };
    Gateway::with_transport(config, Arc::new(transport))
}

pub fn scripted<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Gateway {
    recording(ScriptedTransport::new(replies))
}

/// Compares a fresh recording with the shipped transcript. With
/// `ONTODISTILL_BLESS=1` the shipped file is rewritten instead.
pub fn shipped_transcript(rel: &str, fresh: &Transcript) -> Transcript {
    let path = fixture_path(rel);
    if std::env::var_os("ONTODISTILL_BLESS").is_some() {
        std::fs::write(&path, fresh.to_jsonl()).unwrap();
    }
    Transcript::from_jsonl(&fixture(rel)).unwrap_or_else(|e| panic!("transcript {rel}: {e}"))
}

/// A session whose hierarchy is taken as given, so later tasks may run.
pub fn session_on(rel: &str, config: SessionConfig) -> Session {
    let mut s = Session::new(DEFAULT_DOMAIN, load_dot(rel), config).unwrap();
    let mut idle = Gateway::replay(Transcript::new());
    s.control(TaskKind::Hierarchy, ControlCommand::Complete, &mut idle).unwrap();
    s
}

// ---- ten-iteration hierarchy session ----

pub fn hierarchy_config() -> SessionConfig {
    toml::from_str(&fixture("hierarchy/session.toml")).unwrap()
}

pub fn hierarchy_replies() -> Vec<String> {
    (1..=10).map(|i| fixture(&format!("hierarchy/iter{i:02}.txt"))).collect()
}

pub fn hierarchy_decisions() -> DecisionScript {
    DecisionScript::from_json(&fixture("hierarchy/decisions.json")).unwrap()
}

pub fn run_hierarchy(mut gateway: Gateway) -> (Session, Gateway, RunOutcome) {
    let mut s = Session::new(DEFAULT_DOMAIN, load_dot("seed.dot"), hierarchy_config()).unwrap();
    let mut reviewer = hierarchy_decisions();
    let outcome = run_task(&mut s, &mut gateway, TaskKind::Hierarchy, &mut reviewer, 50).unwrap();
    (s, gateway, outcome)
}

// ---- definition session over 56 concepts ----

pub fn definition_config() -> SessionConfig {
    SessionConfig {
        definition_batch_size: 10,
        ..SessionConfig::default()
    }
}

pub fn definition_replies() -> Vec<String> {
    (1..=6).map(|i| fixture(&format!("definition/batch{i}.txt"))).collect()
}

pub fn run_definitions(mut gateway: Gateway) -> (Session, Gateway, RunOutcome) {
    let mut s = session_on("definition/hierarchy.dot", definition_config());
    let outcome = run_task(&mut s, &mut gateway, TaskKind::Definition, &mut AcceptAll, 20).unwrap();
    (s, gateway, outcome)
}

// ---- relationship runs ----

#[derive(Deserialize)]
pub struct RelationshipRuns {
    pub scope: Vec<String>,
    pub runs_per_pair: u32,
    pub delimiter: char,
    /// `"Subject/Object"` to one reply per run.
    pub runs: BTreeMap<String, Vec<String>>,
}

pub fn relationship_runs() -> RelationshipRuns {
    serde_json::from_str(&fixture("relationship/runs.json")).unwrap()
}

/// The fixture runs use `@` between cells, as in the unadjusted prompt.
pub fn relationship_config(scope: &[String], runs_per_pair: u32) -> SessionConfig {
    let mut config = SessionConfig {
        relationship_scope: Some(scope.to_vec()),
        runs_per_pair,
        rules: NormalizationRules::sample(),
        ..SessionConfig::default()
    };
    config.prompt.relationship_delimiter = relationship_runs().delimiter;
    config
}

/// Pulls `(subject, object)` out of a rendered relationship prompt.
pub fn prompt_pair(prompt: &str) -> Option<(String, String)> {
    let rest = prompt.split("relationships in which ").nth(1)?;
    let (subject, rest) = rest.split_once(" is the subject and ")?;
    let (object, _) = rest.split_once(" is the object")?;
    Some((subject.to_string(), object.to_string()))
}

/// Answers each pair prompt with the next fixture run for that pair.
pub fn relationship_transport(runs: &RelationshipRuns) -> impl ontodistill::gateway::ChatTransport + 'static {
    let table = runs.runs.clone();
    let served: Mutex<BTreeMap<String, usize>> = Mutex::new(BTreeMap::new());
    FnTransport(move |prompt: &str| -> Result<String, TransportFailure> {
        let (s, o) = prompt_pair(prompt).ok_or_else(|| TransportFailure::Other("not a pair prompt".into()))?;
        let key = format!("{s}/{o}");
        let replies = table
            .get(&key)
            .ok_or_else(|| TransportFailure::Other(format!("no fixture runs for {key}")))?;
        let mut served = served.lock().unwrap();
        let n = served.entry(key.clone()).or_default();
        let reply = replies
            .get(*n)
            .ok_or_else(|| TransportFailure::Other(format!("fixture runs for {key} exhausted")))?;
        *n += 1;
        Ok(reply.clone())
    })
}

pub fn run_relationships(
    scope: &[String],
    runs_per_pair: u32,
    mut gateway: Gateway,
    reviewer: &mut dyn Reviewer,
) -> (Session, Gateway, RunOutcome) {
    let mut s = session_on("definition/hierarchy.dot", relationship_config(scope, runs_per_pair));
    let outcome = run_task(&mut s, &mut gateway, TaskKind::Relationship, reviewer, 500).unwrap();
    (s, gateway, outcome)
}
