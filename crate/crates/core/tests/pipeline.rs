use civet_core::answer::ModelResponse;
use civet_core::manifest::{ManifestRecord, parse_jsonl, write_jsonl};
use civet_core::metrics::{AnnotationMatrix, AnnotationRow, accuracy, fleiss_kappa, join};
use civet_core::question::{Aspect, build_questions};
use civet_core::render::{RenderConfig, render};
use civet_core::replay::{oracle_replay, random_replay, random_replay_sequential};
use civet_core::world::{self, Setting, SizeClass, World};
use proptest::prelude::*;

fn manifest(worlds: &[World], aspect: Aspect) -> Vec<ManifestRecord> {
    build_questions(worlds, aspect)
        .unwrap()
        .into_iter()
        .zip(worlds)
        .map(|(q, w)| ManifestRecord::from_question(q, w, 336, SizeClass::Regular))
        .collect()
}

fn responses(records: &[ManifestRecord], replay: Vec<civet_core::manifest::ReplayRecord>) -> Vec<ModelResponse> {
    replay
        .into_iter()
        .zip(records)
        .map(|(r, m)| ModelResponse::scored(r.stimulus_id, r.raw_text, &m.options, 0))
        .collect()
}

#[test]
fn manifest_round_trips_through_jsonl() {
    let worlds = world::enumerate(Setting::RelativePosition, SizeClass::Regular, 0).unwrap();
    let records = manifest(&worlds[..200], Aspect::RelativePosition);
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &records).unwrap();
    let back: Vec<ManifestRecord> = parse_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back, records);
    assert_eq!(std::str::from_utf8(&buf).unwrap().lines().count(), 200);
}

#[test]
fn oracle_replay_scores_perfectly_and_random_replay_is_split_independent() {
    let worlds = world::enumerate(Setting::RelativeSize, SizeClass::Regular, 0).unwrap();
    let records = manifest(&worlds, Aspect::RelativeSize);
    let oracle = responses(&records, oracle_replay(&records));
    let joined = join(&records, &oracle).unwrap();
    assert!(joined.missing.is_empty());
    let t = accuracy(&joined.scored);
    assert_eq!((t.correct, t.total), (25_920, 25_920));

    assert_eq!(random_replay(&records, 3), random_replay_sequential(&records, 3));
    assert_ne!(random_replay(&records, 3), random_replay(&records, 4));
}

#[test]
fn rendering_is_a_pure_function_of_the_world() {
    let worlds = world::enumerate(Setting::RelativeDistance, SizeClass::Regular, 0).unwrap();
    let cfg = RenderConfig::with_size(336);
    for w in worlds.iter().step_by(500) {
        let a = render(w, &cfg, None).unwrap().to_png().unwrap();
        let b = render(w, &cfg, None).unwrap().to_png().unwrap();
        assert_eq!(a, b, "{}", w.id());
    }
    let regenerated = world::enumerate(Setting::RelativeDistance, SizeClass::Regular, 0).unwrap();
    assert_eq!(worlds, regenerated);
}

fn matrix(rows: Vec<Vec<u64>>) -> AnnotationMatrix {
    let k = rows[0].len();
    AnnotationMatrix::new(
        (0..k).map(|i| format!("c{i}")).collect(),
        rows.into_iter()
            .enumerate()
            .map(|(i, counts)| AnnotationRow {
                stimulus_id: format!("s{i}"),
                counts,
            })
            .collect(),
    )
    .unwrap()
}

fn votes(k: usize, raters: u64) -> impl Strategy<Value = Vec<u64>> {
    proptest::collection::vec(0..k, raters as usize).prop_map(move |picks| {
        let mut row = vec![0u64; k];
        for p in picks {
            row[p] += 1;
        }
        row
    })
}

proptest! {
    #[test]
    fn kappa_is_bounded_and_label_permutation_invariant(rows in proptest::collection::vec(votes(4, 5), 2..30)) {
        let Ok(k) = fleiss_kappa(&matrix(rows.clone())) else { return Ok(()) };
        prop_assert!(k <= 1.0 + 1e-12);
        let reversed: Vec<Vec<u64>> = rows.iter().map(|r| r.iter().rev().copied().collect()).collect();
        let k2 = fleiss_kappa(&matrix(reversed)).unwrap();
        prop_assert!((k - k2).abs() < 1e-12);
    }
}
