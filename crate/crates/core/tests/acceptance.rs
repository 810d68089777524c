//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test --test acceptance`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use ontodistill::dot::{extract_dot_block, hierarchy_from_dot, parse_dot, to_dot};
use ontodistill::gateway::Gateway;
use ontodistill::normalize::{union_runs, NormalizationRules};
use ontodistill::ontology::{
    predicate_key, validate, ConceptId, EdgeDirection, Ontology, Rule, Snapshot, TripleSet, ValidationPolicy,
};
use ontodistill::orchestrator::{
    replay_journal, run_task, AcceptAll, ControlCommand, ExecutionMode, RunOutcome, Session, SessionConfig,
    StepOutcome, StopReason, StoppingCriteria, TaskStatus,
};
use ontodistill::prompt::{TaskKind, DEFAULT_DOMAIN};
use ontodistill::records::{
    detect_table_runaway, parse_response, rows_to_triples, CodecConfig, RecordKind, RejectReason,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

type LimitCase = (&'static str, StopReason, fn(&mut StoppingCriteria, usize), usize);

fn main() {
    let criteria: [Criterion; 10] = [
        ("definition loop arithmetic", definition_loop),
        ("relationship plan arithmetic", relationship_plan),
        ("validator defects", validator_defects),
        ("omitted concepts park for review", omission_parks),
        ("manual fixes", manual_fixes),
        ("dot codec", dot_codec),
        ("record codec", record_codec),
        ("normalizer", normalizer),
        ("record/replay determinism and revert", replay_determinism),
        ("stopping criteria", stopping_criteria),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let ms = started.elapsed().as_millis();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({ms} ms)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} ({ms} ms)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn definition_loop() -> Outcome {
    let (recorded, g, _) = run_definitions(scripted(definition_replies()));
    ensure!(recorded.ontology.undefined().count() == 0, "recording left concepts undefined");
    let transcript = shipped_transcript("definition/transcript.jsonl", g.transcript());
    ensure!(&transcript == g.transcript(), "shipped transcript differs from a fresh recording");

    let started = Instant::now();
    let (s, g, outcome) = run_definitions(Gateway::replay(transcript));
    let elapsed = started.elapsed();
    ensure!(s.ontology.len() == 56, "hierarchy has {} concepts", s.ontology.len());
    // ceil(56 / 10)
    ensure!(g.calls() == 6, "{} gateway calls", g.calls());
    ensure!(
        outcome == RunOutcome::Stopped { reason: StopReason::Coverage },
        "outcome {outcome:?}"
    );
    let undefined = s.ontology.undefined().count();
    ensure!(undefined == 0, "{undefined} concepts undefined");
    ensure!(elapsed < Duration::from_secs(1), "replay took {elapsed:?}");
    Ok(format!("56 concepts, batch 10: {} calls, 0 undefined", g.calls()))
}

fn relationship_plan() -> Outcome {
    let runs = relationship_runs();
    let (_, g, _) = run_relationships(&runs.scope, runs.runs_per_pair, recording(relationship_transport(&runs)), &mut AcceptAll);
    let transcript = shipped_transcript("relationship/transcript.jsonl", g.transcript());
    ensure!(&transcript == g.transcript(), "shipped transcript differs from a fresh recording");

    let (s, g, outcome) = run_relationships(&runs.scope, runs.runs_per_pair, Gateway::replay(transcript), &mut AcceptAll);
    let n = runs.scope.len() as u64;
    let expected = n * n * u64::from(runs.runs_per_pair);
    ensure!(expected == 80, "fixture plan is {expected} calls");
    ensure!(g.calls() == expected, "{} replayed calls, expected {expected}", g.calls());
    ensure!(
        s.task(TaskKind::Relationship).gateway_calls() == 80,
        "task log counts {} calls",
        s.task(TaskKind::Relationship).gateway_calls()
    );
    ensure!(
        outcome == RunOutcome::Stopped { reason: StopReason::PlanExhausted },
        "outcome {outcome:?}"
    );
    let pairs: BTreeSet<_> = s.task(TaskKind::Relationship).iterations.iter().filter_map(|i| i.pair.clone()).collect();
    ensure!(pairs.len() == 16, "{} distinct pairs", pairs.len());

    let single = vec!["Car".to_string()];
    let (s, g, _) = run_relationships(&single, 5, recording(relationship_transport(&runs)), &mut AcceptAll);
    let pairs: BTreeSet<_> = s.task(TaskKind::Relationship).iterations.iter().filter_map(|i| i.pair.clone()).collect();
    ensure!(pairs.len() == 1, "scope 1 queried {} pairs", pairs.len());
    ensure!(g.calls() == 5, "scope 1 made {} calls", g.calls());
    Ok("4 concepts x 5 runs: 80 replayed calls over 16 pairs; 1 concept: 1 pair".into())
}

fn validator_defects() -> Outcome {
    let dual = validate(&load_dot("defects/dual_parent.dot"), ValidationPolicy::Strict);
    ensure!(dual.count(Rule::MultiParent) == 1, "dual parent: {}", dual.summary());
    ensure!(dual.violations.len() == 1, "dual parent: {}", dual.summary());
    ensure!(dual.violations[0].subjects.contains(&id("Car")), "MultiParent names {:?}", dual.violations[0].subjects);

    let cycle = validate(&load_dot("defects/cycle.dot"), ValidationPolicy::Strict);
    ensure!(cycle.count(Rule::Cycle) == 1, "cycle: {}", cycle.summary());
    ensure!(cycle.violations.len() == 1, "cycle: {}", cycle.summary());
    let members: BTreeSet<&ConceptId> = cycle.violations[0].subjects.iter().collect();
    ensure!(
        members == BTreeSet::from([&id("Pedestrian"), &id("Crosswalk User")]),
        "Cycle lists {members:?}"
    );
    Ok("1 MultiParent (Car), 1 Cycle (Pedestrian, CrosswalkUser)".into())
}

fn omission_parks() -> Outcome {
    let before = load_dot("omission/before.dot");
    let mut s = Session::new(DEFAULT_DOMAIN, before.clone(), SessionConfig::default()).unwrap();
    let mut g = scripted([fixture("omission/reply.txt")]);
    let out = s.step(TaskKind::Hierarchy, &mut g).map_err(|e| e.to_string())?;
    ensure!(matches!(out, StepOutcome::Parked { .. }), "supervised step gave {out:?}");
    ensure!(s.task(TaskKind::Hierarchy).status == TaskStatus::AwaitingReview, "status {:?}", s.task(TaskKind::Hierarchy).status);
    let removed = &s.task(TaskKind::Hierarchy).parked().unwrap().delta.removed_concepts;
    ensure!(
        removed.contains(&id("Junction")) && removed.contains(&id("Cone")),
        "removed {removed:?}"
    );
    ensure!(s.ontology.same_content(&before), "ontology changed before review");

    let cases = autonomous_never_commits_violations(256)?;
    Ok(format!("Junction and Cone listed as removals, parked; autonomous property held over {cases} mutations"))
}

/// Random edits of a clean hierarchy, as a redesign reply.
#[derive(Clone, Debug)]
enum Mutation {
    Drop(usize),
    AddChild(usize),
    ExtraParent(usize, usize),
    Reparent(usize, usize),
}

fn mutation() -> impl Strategy<Value = Mutation> {
    prop_oneof![
        (0..64usize).prop_map(Mutation::Drop),
        (0..64usize).prop_map(Mutation::AddChild),
        (0..64usize, 0..64usize).prop_map(|(a, b)| Mutation::ExtraParent(a, b)),
        (0..64usize, 0..64usize).prop_map(|(a, b)| Mutation::Reparent(a, b)),
    ]
}

/// Independent single-parent and acyclicity check over `(parent, child)`.
fn oracle_violates(nodes: &BTreeSet<String>, edges: &BTreeSet<(String, String)>) -> bool {
    let mut parents: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (p, c) in edges {
        parents.entry(c).or_default().insert(p);
    }
    if parents.values().any(|ps| ps.len() > 1) {
        return true;
    }
    // Single parent each: a cycle is a parent chain that revisits a node.
    nodes.iter().any(|start| {
        let mut seen = BTreeSet::new();
        let mut at = start.as_str();
        while let Some(p) = parents.get(at).and_then(|ps| ps.iter().next()) {
            if !seen.insert(at) {
                return true;
            }
            at = p;
        }
        false
    })
}

fn autonomous_never_commits_violations(cases: u32) -> Result<u32, String> {
    let before = load_dot("omission/before.dot");
    let names: Vec<String> = before.concepts().map(|c| c.display_name.clone()).collect();
    let base_edges: BTreeSet<(String, String)> = before
        .edges()
        .map(|e| {
            let label = |id| before.concept(id).unwrap().display_name.clone();
            (label(&e.parent), label(&e.child))
        })
        .collect();
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&proptest::collection::vec(mutation(), 1..6), |muts| {
            let mut nodes: BTreeSet<String> = names.iter().cloned().collect();
            let mut edges = base_edges.clone();
            for (k, m) in muts.iter().enumerate() {
                let pick = |i: usize, nodes: &BTreeSet<String>| nodes.iter().nth(i % nodes.len()).cloned().unwrap();
                if nodes.len() < 2 {
                    break;
                }
                match *m {
                    Mutation::Drop(i) => {
                        let n = pick(i, &nodes);
                        nodes.remove(&n);
                        edges.retain(|(p, c)| p != &n && c != &n);
                    }
                    Mutation::AddChild(i) => {
                        let p = pick(i, &nodes);
                        let c = format!("Added{k}");
                        nodes.insert(c.clone());
                        edges.insert((p, c));
                    }
                    Mutation::ExtraParent(i, j) => {
                        let (c, p) = (pick(i, &nodes), pick(j, &nodes));
                        if c != p {
                            edges.insert((p, c));
                        }
                    }
                    Mutation::Reparent(i, j) => {
                        let (c, p) = (pick(i, &nodes), pick(j, &nodes));
                        if c != p {
                            edges.retain(|(_, child)| child != &c);
                            edges.insert((p, c));
                        }
                    }
                }
            }
            let mut reply = String::from("```dot\ndigraph {\n");
            for n in &nodes {
                reply.push_str(&format!("  \"{n}\";\n"));
            }
            for (p, c) in &edges {
                reply.push_str(&format!("  \"{p}\" -> \"{c}\";\n"));
            }
            reply.push_str("}\n```\n");

            let config = SessionConfig {
                mode: ExecutionMode::Autonomous,
                ..SessionConfig::default()
            };
            let mut s = Session::new(DEFAULT_DOMAIN, before.clone(), config).unwrap();
            let mut g = scripted([reply]);
            let out = s.step(TaskKind::Hierarchy, &mut g).unwrap();
            if oracle_violates(&nodes, &edges) {
                prop_assert!(matches!(out, StepOutcome::Parked { .. }), "violating reply gave {:?}", out);
                prop_assert!(s.ontology.same_content(&before));
            } else {
                prop_assert!(matches!(out, StepOutcome::Committed { .. }), "clean reply gave {:?}", out);
            }
            prop_assert!(validate(&s.ontology, ValidationPolicy::Strict).is_clean());
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(cases)
}

fn manual_fixes() -> Outcome {
    let (s, _, _) = run_hierarchy(scripted(hierarchy_replies()));
    let tenth = s
        .task(TaskKind::Hierarchy)
        .accepted()
        .find(|i| i.index == 10)
        .ok_or("iteration 10 was not accepted")?;
    ensure!(tenth.edits.len() == 4, "{} edits recorded", tenth.edits.len());
    let proposed = s.snapshot(tenth.proposed_ref.as_ref().unwrap()).map_err(|e| e.to_string())?;
    ensure!(parents(&proposed, "Car").len() == 2, "fixture Car parents {:?}", parents(&proposed, "Car"));

    let o = &s.ontology;
    ensure!(parents(o, "RoadMarkings") == ["infrastructure"], "RoadMarkings under {:?}", parents(o, "RoadMarkings"));
    ensure!(!o.contains(&id("Electric")), "Electric still present");
    ensure!(!o.contains(&id("CrosswalkUser")), "CrosswalkUser still present");
    ensure!(parents(o, "Bicyclist") == ["pedestrian"], "Bicyclist under {:?}", parents(o, "Bicyclist"));
    ensure!(parents(o, "Car") == ["vehicle"], "Car under {:?}", parents(o, "Car"));
    let report = validate(o, ValidationPolicy::Strict);
    ensure!(report.is_clean(), "after fixes: {}", report.summary());
    Ok("RoadMarkings < Infrastructure, Electric and CrosswalkUser gone, Bicyclist < Pedestrian".into())
}

fn concept_name() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9 _\\-\"\\\\]{0,12}"
}

/// Forest over generated names: each concept may hang under an earlier one.
fn random_ontology() -> impl Strategy<Value = Ontology> {
    proptest::collection::vec((concept_name(), proptest::option::of(any::<prop::sample::Index>())), 1..40).prop_map(
        |shape| {
            let mut o = Ontology::new();
            let mut ids: Vec<ConceptId> = Vec::new();
            for (name, parent) in shape {
                let Ok(id) = o.ensure_concept(&name) else { continue };
                if ids.contains(&id) {
                    continue;
                }
                if let (Some(p), false) = (parent, ids.is_empty()) {
                    o.add_edge(&id, &ids[p.index(ids.len())]).unwrap();
                }
                ids.push(id);
            }
            o
        },
    )
}

const DOT_TOKENS: &[&str] = &[
    "digraph", "graph", "strict", "subgraph", "node", "edge", "{", "}", "[", "]", "->", "--", ";", ",", "=", "\"",
    "\\", "/*", "*/", "//", "#", "\n", " ", "label", "Car", "\"Crosswalk User\"", "<", ">", "<<b>x</b>>", "1.5", "-",
    "```dot", "```",
];

fn dot_codec() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&random_ontology(), |onto| {
            let text = to_dot(&onto);
            let (graph, _) = parse_dot(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
            let back = hierarchy_from_dot(&graph, EdgeDirection::ParentToChild).into_ontology();
            prop_assert!(back.same_content(&onto), "round trip changed\n{}", text);
            prop_assert_eq!(to_dot(&back), text);
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    let valid = fixture("hierarchy/iter01.txt").into_bytes();
    let mut rng = StdRng::seed_from_u64(0x0d07);
    let inputs = 100_000;
    let mut crashes = 0;
    let mut parsed = 0;
    for k in 0..inputs {
        let bytes: Vec<u8> = if k % 3 == 0 {
            let len = rng.random_range(0..256);
            (0..len).map(|_| rng.random()).collect()
        } else if k % 3 == 1 {
            // A real reply with a few bytes overwritten.
            let mut b = valid.clone();
            for _ in 0..rng.random_range(1..8) {
                let at = rng.random_range(0..b.len());
                b[at] = rng.random();
            }
            b
        } else {
            let len = rng.random_range(0..48);
            (0..len)
                .flat_map(|_| DOT_TOKENS[rng.random_range(0..DOT_TOKENS.len())].bytes().chain(*b" "))
                .collect()
        };
        let text = String::from_utf8_lossy(&bytes);
        let ok = catch_unwind(|| {
            let _ = parse_dot(&text);
            extract_dot_block(&text).is_ok_and(|block| parse_dot(block.text).is_ok())
        });
        match ok {
            Ok(true) => parsed += 1,
            Ok(false) => {}
            Err(_) => crashes += 1,
        }
    }
    ensure!(crashes == 0, "{crashes} of {inputs} fuzz inputs panicked");

    let seed = load_dot("seed.dot");
    ensure!(
        parents(&seed, "Junction") == ["roadtopologyandtrafficinfrastructure"],
        "Junction under {:?}",
        parents(&seed, "Junction")
    );
    ensure!(seed.len() == 4 && seed.edge_count() == 1, "seed has {} concepts, {} edges", seed.len(), seed.edge_count());
    Ok(format!(
        "1000 round trips; {inputs} fuzz inputs, 0 panics ({parsed} parsed); seed edge Junction < RoadTopologyAndTrafficInfrastructure"
    ))
}

fn record_codec() -> Outcome {
    let codec = CodecConfig::default();
    let line = "@ Emergency @ Uses @ Ambulance @ to respond to incidents affected by poor @ AirQuality @.";
    let batch = parse_response(line, RecordKind::Relationship, '@', &codec).map_err(|e| e.to_string())?;
    ensure!(batch.rows.is_empty(), "accepted {:?}", batch.rows);
    ensure!(
        batch.rejected.len() == 1 && batch.rejected[0].reason == RejectReason::ArityMismatch,
        "rejected {:?}",
        batch.rejected
    );

    // The same line inside a recorded relationship run.
    let runs = relationship_runs();
    let (s, _, _) = run_relationships(&runs.scope, runs.runs_per_pair, recording(relationship_transport(&runs)), &mut AcceptAll);
    let quarantined = s
        .iterations()
        .flat_map(|i| &i.quarantine)
        .find(|r| r.raw.contains("to respond to incidents"))
        .ok_or("the `@` line was not quarantined in the pipeline")?;
    ensure!(quarantined.reason == RejectReason::ArityMismatch, "pipeline reason {:?}", quarantined.reason);
    ensure!(
        !s.ontology.triples().iter().any(|t| t.predicate.contains("respond")),
        "the `@` line reached the ontology"
    );
    ensure!(has(s.ontology.triples(), "Aggressive", "Causes", "Emergency"), "well-formed rows were lost");

    let mut runaway = String::from("| Concept | Definition |\n| --- | --- |\n| Car | A passenger vehicle. |\n");
    runaway.push_str(&"- - - ".repeat(500));
    ensure!(detect_table_runaway(&runaway, &codec), "500 repetitions not detected");
    let normal = "| Concept | Definition |\n| --- | --- |\n| Car | A passenger vehicle. |\n| Truck | A goods vehicle. |\n\
                  | Bus | A vehicle for many passengers. |\n| Lane | A strip of road for one line of traffic. |\n\
                  | Junction | A place where roads meet. |\n";
    ensure!(!detect_table_runaway(normal, &codec), "normal table flagged as runaway");
    let rows = parse_response(normal, RecordKind::Definition, '@', &codec).map_err(|e| e.to_string())?;
    ensure!(rows.rows.len() == 5, "normal table gave {} rows", rows.rows.len());
    Ok("`@` line quarantined as ArityMismatch; runaway fires at 500 repetitions, not on a 5-row table".into())
}

fn run_triples(text: &str, onto: &Ontology) -> TripleSet {
    let batch = parse_response(text, RecordKind::Relationship, '@', &CodecConfig::default()).unwrap();
    let (triples, _) = rows_to_triples(&batch, onto, None);
    let mut set = TripleSet::new();
    set.extend(triples);
    set
}

fn has(set: &TripleSet, s: &str, p: &str, o: &str) -> bool {
    set.iter().any(|t| t.subject == id(s) && predicate_key(&t.predicate) == predicate_key(p) && t.object == id(o))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    permutations(n - 1)
        .into_iter()
        .flat_map(|p| {
            (0..n).map(move |at| {
                let mut q = p.clone();
                q.insert(at, n - 1);
                q
            })
        })
        .collect()
}

fn normalizer() -> Outcome {
    let rules = NormalizationRules::sample();
    let onto = load_dot("definition/hierarchy.dot");
    let runs = relationship_runs();
    let car_truck: Vec<TripleSet> = runs.runs["Car/Truck"]
        .iter()
        .map(|r| rules.normalize(&run_triples(r, &onto)).0)
        .collect();
    ensure!(car_truck.len() == 5, "{} fixture runs", car_truck.len());
    let merged = union_runs(&car_truck);

    let races: Vec<_> = merged
        .iter()
        .filter(|t| t.subject == id("Car") && t.object == id("Truck") && t.predicate.to_lowercase().starts_with("races"))
        .collect();
    ensure!(races.len() == 1 && races[0].predicate == "Races", "Races family: {races:?}");
    ensure!(has(&merged, "Truck", "Passes", "Car"), "no Truck Passes Car");
    ensure!(!has(&merged, "Car", "Gets passed by", "Truck"), "passive form survived");
    ensure!(
        !merged.iter().any(|t| predicate_key(&t.predicate) == predicate_key("Shares the road with")),
        "blocklisted predicate survived"
    );

    for perm in permutations(5) {
        let ordered: Vec<&TripleSet> = perm.iter().map(|&i| &car_truck[i]).collect();
        ensure!(union_runs(ordered) == merged, "union differs for order {perm:?}");
    }

    let idempotent = stages_idempotent(&rules, &onto)?;
    Ok(format!(
        "Races x3 -> 1, Gets passed by folded, blocklist applied; {idempotent} idempotence cases; 120 run orders agree"
    ))
}

fn stages_idempotent(rules: &NormalizationRules, onto: &Ontology) -> Result<u32, String> {
    const PREDICATES: &[&str] = &[
        "Races", "Races with", "races against", "Passes", "Gets passed by", "Shares the road with", "Parks behind",
        "Parks next to", "Turns left in front of", "Follows", "Tailgates", "Follows too closely behind", "Influences",
        "Affects", "Changes",
    ];
    const CONCEPTS: &[&str] = &["Car", "Truck", "Bus", "Pedestrian", "TrafficLight"];
    let triple = (0..CONCEPTS.len(), 0..PREDICATES.len(), 0..CONCEPTS.len());
    let cases = 512;
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&proptest::collection::vec(triple, 0..24), |rows| {
            let text: String = rows
                .iter()
                .map(|&(s, p, o)| format!("{} @ {} @ {}\n", CONCEPTS[s], PREDICATES[p], CONCEPTS[o]))
                .collect();
            let set = run_triples(&text, onto);
            type Stage = fn(&NormalizationRules, &TripleSet) -> (TripleSet, Vec<ontodistill::normalize::NormalizationEvent>);
            let stages: [(&str, Stage); 5] = [
                ("synonyms", NormalizationRules::merge_synonyms),
                ("passive", NormalizationRules::fold_active_passive),
                ("groups", NormalizationRules::apply_groups),
                ("blocklist", NormalizationRules::filter_blocklist),
                ("pipeline", NormalizationRules::normalize),
            ];
            for (name, stage) in stages {
                let once = stage(rules, &set).0;
                let twice = stage(rules, &once).0;
                prop_assert_eq!(&once, &twice, "stage {} is not idempotent", name);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(cases)
}

fn replay_determinism() -> Outcome {
    let started = Instant::now();
    let (recorded, g, outcome) = run_hierarchy(scripted(hierarchy_replies()));
    ensure!(
        outcome == RunOutcome::Stopped { reason: StopReason::MaxIterations },
        "recording ended {outcome:?}"
    );
    ensure!(g.transcript().len() == 10, "recorded {} responses", g.transcript().len());
    let transcript = shipped_transcript("hierarchy/transcript.jsonl", g.transcript());
    ensure!(&transcript == g.transcript(), "shipped transcript differs from a fresh recording");

    let (mut replayed, mut g, _) = run_hierarchy(Gateway::replay(transcript));
    ensure!(g.calls() == 10, "{} replayed calls", g.calls());
    let (a, b) = (recorded.ontology.checksum(), replayed.ontology.checksum());
    ensure!(a == b, "checksums differ: recorded {a}, replayed {b}");
    ensure!(
        Snapshot::of(&recorded.ontology).as_bytes() == Snapshot::of(&replayed.ontology).as_bytes(),
        "final snapshots differ"
    );
    let folded = replay_journal(&load_dot("seed.dot"), &replayed.journal).map_err(|e| e.to_string())?;
    ensure!(folded.checksum() == b, "journal fold gives {}", folded.checksum());

    let ninth = replayed
        .task(TaskKind::Hierarchy)
        .accepted()
        .find(|i| i.index == 9)
        .and_then(|i| i.snapshot_ref.clone())
        .ok_or("iteration 9 has no snapshot")?;
    let ninth_bytes = replayed.snapshots[&ninth].as_bytes().to_vec();
    replayed
        .control(TaskKind::Hierarchy, ControlCommand::Revert { to_iteration: 9 }, &mut g)
        .map_err(|e| e.to_string())?;
    ensure!(
        Snapshot::of(&replayed.ontology).as_bytes() == ninth_bytes.as_slice(),
        "Revert(9) did not restore the iteration-9 snapshot"
    );
    ensure!(!replayed.ontology.contains(&id("Electric")), "iteration 9 never had Electric");
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("checksum {} reproduced; Revert(9) bit-exact", &b[..12]))
}

/// Depth in edges, breadth with roots as siblings, computed from the edge list.
fn oracle_shape(onto: &Ontology) -> (usize, usize, usize) {
    let parent: BTreeMap<&ConceptId, &ConceptId> = onto.edges().map(|e| (&e.child, &e.parent)).collect();
    let depth = onto
        .concept_ids()
        .map(|mut c| {
            let mut d = 0;
            while let Some(p) = parent.get(c) {
                c = p;
                d += 1;
            }
            d
        })
        .max()
        .unwrap_or(0);
    let mut children: BTreeMap<Option<&ConceptId>, usize> = BTreeMap::new();
    for c in onto.concept_ids() {
        *children.entry(parent.get(c).copied()).or_default() += 1;
    }
    (onto.len(), depth, children.values().copied().max().unwrap_or(0))
}

/// One accepted iteration of `reply` on the seed under `stopping`.
fn status_after_one(stopping: StoppingCriteria, reply: &str) -> (TaskStatus, Option<StopReason>, Ontology) {
    let config = SessionConfig {
        stopping,
        ..SessionConfig::default()
    };
    let mut s = Session::new(DEFAULT_DOMAIN, load_dot("seed.dot"), config).unwrap();
    let mut g = scripted([reply.to_string()]);
    s.step(TaskKind::Hierarchy, &mut g).unwrap();
    s.control(TaskKind::Hierarchy, ControlCommand::Accept, &mut g).unwrap();
    let run = s.task(TaskKind::Hierarchy);
    (run.status, run.stop_reason, s.ontology.clone())
}

fn stopping_criteria() -> Outcome {
    let first = fixture("hierarchy/iter01.txt");
    let config = SessionConfig {
        stopping: StoppingCriteria {
            no_new_info_window: 2,
            ..StoppingCriteria::default()
        },
        ..SessionConfig::default()
    };
    let mut s = Session::new(DEFAULT_DOMAIN, load_dot("seed.dot"), config).unwrap();
    let mut g = scripted(vec![first.clone(); 4]);
    let outcome = run_task(&mut s, &mut g, TaskKind::Hierarchy, &mut AcceptAll, 10).map_err(|e| e.to_string())?;
    ensure!(
        outcome == RunOutcome::Stopped { reason: StopReason::NoNewInformation },
        "window 2 ended {outcome:?}"
    );
    // One growing iteration, then exactly two empty ones.
    ensure!(g.calls() == 3, "stopped after {} calls", g.calls());

    let unlimited = StoppingCriteria {
        no_new_info_window: 0,
        max_iterations: Some(99),
        ..StoppingCriteria::default()
    };
    let (_, _, grown) = status_after_one(unlimited.clone(), &first);
    let (count, depth, breadth) = oracle_shape(&grown);
    let limits: [LimitCase; 3] = [
        ("concepts", StopReason::ConceptLimit, |s, v| s.max_concepts = Some(v), count),
        ("depth", StopReason::DepthLimit, |s, v| s.max_depth = Some(v), depth),
        ("breadth", StopReason::BreadthLimit, |s, v| s.max_breadth = Some(v), breadth),
    ];
    for (name, reason, set, value) in limits {
        let mut at = unlimited.clone();
        set(&mut at, value);
        let (status, why, _) = status_after_one(at, &first);
        ensure!(
            status == TaskStatus::Completed && why == Some(reason),
            "{name} limit {value}: {status:?} {why:?}"
        );
        let mut above = unlimited.clone();
        set(&mut above, value + 1);
        let (status, why, _) = status_after_one(above, &first);
        ensure!(status == TaskStatus::Idle, "{name} limit {}: stopped early ({why:?})", value + 1);
    }
    Ok(format!(
        "window 2 stops after 2 empty deltas; limits fire at concepts={count}, depth={depth}, breadth={breadth} and not one above"
    ))
}
