mod common;

use common::id;
use ontodistill::dot::{extract_dot_block, hierarchy_from_dot, parse_dot, to_dot_with};
use ontodistill::gateway::{Transcript, TranscriptEntry};
use ontodistill::ontology::{
    apply_edit, diff, validate, ConceptId, EdgeDirection, ManualEdit, Ontology, Provenance, RelationshipTriple,
    Snapshot, TripleSet, ValidationPolicy,
};
use ontodistill::normalize::union_runs;
use ontodistill::records::{parse_response, CodecConfig, RecordKind};
use proptest::prelude::*;

const NAMES: &[&str] = &[
    "Vehicle", "Car", "Truck", "Bus", "Pedestrian", "Bicyclist", "Road", "Lane", "Junction", "Weather", "Rain",
    "Fog", "Traffic Light", "Crosswalk User", "Driver",
];
const PREDICATES: &[&str] = &["Follows", "Passes", "Races", "Stops at", "Yields to"];

/// A forest over a subset of `NAMES`, with definitions and triples.
fn ontology() -> impl Strategy<Value = Ontology> {
    let concept = (proptest::option::of(any::<prop::sample::Index>()), proptest::option::of("[a-z ]{1,20}"));
    let triple = (0..NAMES.len(), 0..PREDICATES.len(), 0..NAMES.len(), 0u32..3);
    (
        proptest::sample::subsequence(NAMES, 1..NAMES.len()),
        proptest::collection::vec(concept, NAMES.len()),
        proptest::collection::vec(triple, 0..12),
    )
        .prop_map(|(names, shape, triples)| {
            let mut o = Ontology::new();
            let mut ids: Vec<ConceptId> = Vec::new();
            for (name, (parent, definition)) in names.iter().zip(shape) {
                let cid = o.add_concept(name).unwrap();
                if let (Some(p), false) = (parent, ids.is_empty()) {
                    o.add_edge(&cid, &ids[p.index(ids.len())]).unwrap();
                }
                if let Some(d) = definition.filter(|d| !d.trim().is_empty()) {
                    o.set_definition(&cid, &d).unwrap();
                }
                ids.push(cid);
            }
            for (s, p, ob, run) in triples {
                let (s, ob) = (id(NAMES[s]), id(NAMES[ob]));
                if o.contains(&s) && o.contains(&ob) {
                    let t = RelationshipTriple::new(s, PREDICATES[p], ob).with_provenance(Provenance { iteration: 1, run });
                    o.insert_triple(t).unwrap();
                }
            }
            o
        })
}

fn triple_set() -> impl Strategy<Value = TripleSet> {
    proptest::collection::vec((0..5usize, 0..PREDICATES.len(), 0..5usize, 0u32..5), 0..10).prop_map(|rows| {
        let mut set = TripleSet::new();
        set.extend(rows.into_iter().map(|(s, p, o, run)| {
            RelationshipTriple::new(id(NAMES[s]), PREDICATES[p], id(NAMES[o]))
                .with_provenance(Provenance { iteration: 1, run })
        }));
        set
    })
}

proptest! {
    #[test]
    fn delta_replays_onto_its_base(before in ontology(), after in ontology()) {
        let delta = diff(&before, &after);
        let rebuilt = before.apply_delta(&delta).unwrap();
        prop_assert!(rebuilt.same_content(&after));
        prop_assert!(diff(&after, &after).is_empty());
    }

    #[test]
    fn emitted_dot_parses_back_in_both_directions(onto in ontology(), flip in any::<bool>()) {
        let direction = if flip { EdgeDirection::ChildToParent } else { EdgeDirection::ParentToChild };
        let text = to_dot_with(&onto, direction);
        let (graph, _) = parse_dot(&text).unwrap();
        let back = hierarchy_from_dot(&graph, direction).into_ontology();
        prop_assert_eq!(back.concept_ids().collect::<Vec<_>>(), onto.concept_ids().collect::<Vec<_>>());
        prop_assert_eq!(back.edges().collect::<Vec<_>>(), onto.edges().collect::<Vec<_>>());
        let fenced = format!("Here you go:\n```dot\n{text}```\nAnything else?");
        prop_assert_eq!(extract_dot_block(&fenced).unwrap().text.trim(), text.trim());
    }

    #[test]
    fn snapshots_restore_exactly(onto in ontology()) {
        let snap = Snapshot::of(&onto);
        let restored = snap.restore().unwrap();
        prop_assert_eq!(&restored, &onto);
        prop_assert_eq!(Snapshot::of(&restored).id(), snap.id());
        prop_assert_eq!(restored.checksum(), onto.checksum());
    }

    #[test]
    fn accepted_edits_never_add_strict_violations(onto in ontology(), a in 0..NAMES.len(), b in 0..NAMES.len(), kind in 0..3u8) {
        let edit = match kind {
            0 => ManualEdit::reparent(NAMES[a], NAMES[b]),
            1 => ManualEdit::remove(NAMES[a]),
            _ => ManualEdit::MergeConcepts { winner: NAMES[a].into(), loser: NAMES[b].into() },
        };
        let before = validate(&onto, ValidationPolicy::Strict);
        if let Ok(next) = apply_edit(&onto, &edit) {
            let after = validate(&next, ValidationPolicy::Strict);
            prop_assert!(after.introduced_since(&before).is_empty(), "{:?}: {}", edit, after.summary());
        }
    }

    #[test]
    fn union_is_order_free(a in triple_set(), b in triple_set(), c in triple_set()) {
        prop_assert_eq!(union_runs([&a, &b, &c]), union_runs([&c, &a, &b]));
        prop_assert_eq!(union_runs([&a, &a]), union_runs([&a]));
    }

    #[test]
    fn record_parsing_is_total(text in "(\\PC{0,40}[@|\\n-]){0,20}", kind in 0..3u8, pipe in any::<bool>()) {
        let kind = [RecordKind::Definition, RecordKind::Relationship, RecordKind::Property][kind as usize];
        let codec = CodecConfig::default();
        let delimiter = if pipe { '|' } else { '@' };
        if let Ok(batch) = parse_response(&text, kind, delimiter, &codec) {
            let lines = text.lines().count();
            for row in &batch.rows {
                prop_assert_eq!(row.cells.len(), codec.arity(kind));
                prop_assert!(row.cells.iter().all(|c| !c.is_empty()));
                prop_assert!(row.line_no >= 1 && row.line_no <= lines);
            }
        }
    }

    #[test]
    fn transcripts_round_trip(responses in proptest::collection::vec("\\PC{0,60}", 0..8)) {
        let mut t = Transcript::new();
        for (i, r) in responses.iter().enumerate() {
            t.push(TranscriptEntry { prompt_hash: format!("{i:064x}"), sequence_no: i as u64 * 2 + 1, response_text: r.clone() }).unwrap();
        }
        prop_assert_eq!(Transcript::from_jsonl(&t.to_jsonl()).unwrap(), t);
    }
}
