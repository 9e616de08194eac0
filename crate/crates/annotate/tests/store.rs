mod common;

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::sync::Arc;

use civet_annotate::{AnnotateError, Campaign, Next, SessionStatus, Store};
use civet_core::metrics::fleiss_kappa;
use civet_core::world::{Cell, Vocabulary, section_of};
use common::*;

fn truth(store: &Store, id: &str) -> String {
    store.campaign().record(id).unwrap().ground_truth.clone()
}

/// Answer every item of a session with `choose`, at `elapsed_ms` each.
fn complete(store: &Store, session_id: &str, elapsed_ms: u64, mut choose: impl FnMut(&str) -> String) -> SessionStatus {
    let mut status = SessionStatus::Active;
    while let Next::Stimulus { stimulus_id, .. } = store.next_stimulus(session_id).unwrap() {
        let option = choose(&stimulus_id);
        status = store.submit_answer(session_id, &stimulus_id, &option, elapsed_ms).unwrap().status;
    }
    status
}

#[test]
fn pool_filter_selects_81_positions() {
    let dir = tempfile::tempdir().unwrap();
    write_manifest(dir.path());
    let store = open(&position_config(dir.path()));
    assert_eq!(store.campaign().stimuli.len(), 81);
    assert_eq!(store.campaign().categories.len(), 9);
    let st = store.status();
    assert_eq!(st.progress, "0/648");
    assert!(!st.complete);
}

#[test]
fn mixed_option_sets_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_manifest(dir.path());
    let mut cfg = position_config(dir.path());
    cfg.aspect = None;
    assert!(matches!(Campaign::load(cfg).unwrap_err(), AnnotateError::Config(_)));
}

#[test]
fn sessions_take_lowest_coverage_first() {
    let dir = tempfile::tempdir().unwrap();
    write_manifest(dir.path());
    let store = open(&position_config(dir.path()));
    let a = store.create_session("ann-1").unwrap();
    let b = store.create_session("ann-1").unwrap();
    assert_eq!(a.stimuli.len(), 10);
    assert_eq!(a.stimuli.iter().collect::<HashSet<_>>().len(), 10);
    assert!(a.stimuli.iter().all(|s| !b.stimuli.contains(s)));
    assert_ne!(a.session_id, b.session_id);

    // the first batch is the ten smallest ids, in shuffled order
    let mut sorted = a.stimuli.clone();
    sorted.sort();
    let ids: Vec<String> = store.campaign().stimuli[..10].iter().map(|r| r.stimulus_id.clone()).collect();
    assert_eq!(sorted, ids);
    assert_ne!(a.stimuli, ids);

    // answering in b leaves a untouched
    let first_b = b.stimuli[0].clone();
    store.submit_answer(&b.session_id, &first_b, &truth(&store, &first_b), 2000).unwrap();
    assert_eq!(store.session(&a.session_id).unwrap().cursor(), 0);
}

#[test]
fn next_does_not_advance_and_tracks_progress() {
    let dir = tempfile::tempdir().unwrap();
    write_manifest(dir.path());
    let store = open(&position_config(dir.path()));
    let s = store.create_session("ann").unwrap();
    let first = store.next_stimulus(&s.session_id).unwrap();
    assert_eq!(first, store.next_stimulus(&s.session_id).unwrap());
    let Next::Stimulus { progress, image_url, options, .. } = &first else {
        panic!("expected a stimulus")
    };
    assert_eq!((progress.index, progress.total), (1, 10));
    assert!(image_url.starts_with("/assets/images/"));
    assert_eq!(options.len(), 9);

    for id in &s.stimuli[..9] {
        store.submit_answer(&s.session_id, id, &truth(&store, id), 2000).unwrap();
    }
    match store.next_stimulus(&s.session_id).unwrap() {
        Next::Stimulus { stimulus_id, progress, .. } => {
            assert_eq!(stimulus_id, s.stimuli[9]);
            assert_eq!((progress.index, progress.total), (10, 10));
        }
        other => panic!("unexpected {other:?}"),
    }
    let last = &s.stimuli[9];
    store.submit_answer(&s.session_id, last, &truth(&store, last), 2000).unwrap();
    match store.next_stimulus(&s.session_id).unwrap() {
        Next::Complete { session_code, status } => {
            assert_eq!(session_code, s.code);
            assert_eq!(status, SessionStatus::Approved);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn submit_validation_and_sequencing() {
    let dir = tempfile::tempdir().unwrap();
    write_manifest(dir.path());
    let store = open(&position_config(dir.path()));
    let s = store.create_session("ann").unwrap();
    let id = &s.stimuli[0];
    assert!(matches!(
        store.submit_answer(&s.session_id, id, "purple", 1000),
        Err(AnnotateError::Validation(_))
    ));
    assert!(matches!(
        store.submit_answer(&s.session_id, &s.stimuli[1], "center", 1000),
        Err(AnnotateError::Sequencing(_))
    ));
    assert!(matches!(
        store.submit_answer("nope", id, "center", 1000),
        Err(AnnotateError::NotFound(_))
    ));
    let ack = store.submit_answer(&s.session_id, id, "center", 1000).unwrap();
    assert_eq!((ack.cursor, ack.total), (1, 10));
    assert!(matches!(
        store.submit_answer(&s.session_id, id, "center", 1000),
        Err(AnnotateError::Sequencing(_))
    ));
    assert!(matches!(store.next_stimulus("nope"), Err(AnnotateError::NotFound(_))));
}

#[test]
fn quality_control_policy() {
    let dir = tempfile::tempdir().unwrap();
    write_manifest(dir.path());
    let mut cfg = position_config(dir.path());
    cfg.batch = 81;
    cfg.target = 3;
    let store = open(&cfg);

    let good = store.create_session("good").unwrap();
    assert_eq!(complete(&store, &good.session_id, 4000, |id| truth(&store, id)), SessionStatus::Approved);

    let sloppy = store.create_session("sloppy").unwrap();
    let corner = store
        .campaign()
        .stimuli
        .iter()
        .find(|r| r.world.primary().cell == Cell::new(0, 0).unwrap())
        .unwrap()
        .stimulus_id
        .clone();
    let status = complete(&store, &sloppy.session_id, 4000, |id| {
        if id == corner { "bottom right".into() } else { truth(&store, id) }
    });
    assert_eq!(status, SessionStatus::Rejected);
    assert!(store.session(&sloppy.session_id).unwrap().review.unwrap().contains(&corner));

    // a wrong answer outside the corners does not fail the gold check
    let center = store
        .campaign()
        .stimuli
        .iter()
        .find(|r| r.world.primary().cell == Cell::new(4, 4).unwrap())
        .unwrap()
        .stimulus_id
        .clone();
    let fast = store.create_session("fast").unwrap();
    let status = complete(&store, &fast.session_id, 300, |id| {
        if id == center { "top left".into() } else { truth(&store, id) }
    });
    assert_eq!(status, SessionStatus::Rejected);
    assert!(store.session(&fast.session_id).unwrap().review.unwrap().contains("median"));

    // rejected sessions release their slots; only the approved one holds any
    let status = store.status();
    assert_eq!((status.sessions_approved, status.sessions_rejected), (1, 2));
    assert_eq!(status.assigned, 81);
    let slow = store.create_session("slow-but-careful").unwrap();
    assert_eq!(complete(&store, &slow.session_id, 1500, |id| truth(&store, id)), SessionStatus::Approved);
    assert!(store.coverage().values().all(|&c| c == 2));
}

#[test]
fn concurrent_assignment_respects_coverage_bound() {
    let dir = tempfile::tempdir().unwrap();
    write_manifest(dir.path());
    let store = Arc::new(open(&position_config(dir.path())));
    let handles: Vec<_> = (0..8)
        .map(|t| {
            let store = Arc::clone(&store);
            std::thread::spawn(move || {
                let mut made = 0;
                loop {
                    match store.create_session(&format!("worker-{t}")) {
                        Ok(_) => made += 1,
                        Err(AnnotateError::CampaignComplete) => return made,
                        Err(e) => panic!("{e}"),
                    }
                }
            })
        })
        .collect();
    let total: usize = handles.into_iter().map(|h| h.join().unwrap()).sum();
    // 648 slots in batches of 10
    assert_eq!(total, 65);
    let coverage = store.coverage();
    assert!(coverage.values().all(|&c| c == 8 || c == 9));
    assert_eq!(coverage.values().map(|&c| c as usize).sum::<usize>(), 650);
    assert!(matches!(store.create_session("late"), Err(AnnotateError::CampaignComplete)));
}

#[test]
fn acknowledged_answers_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    write_manifest(dir.path());
    let mut cfg = position_config(dir.path());
    cfg.snapshot_every = 4;
    let (session, before) = {
        let store = open(&cfg);
        let s = store.create_session("ann").unwrap();
        for id in &s.stimuli[..7] {
            store.submit_answer(&s.session_id, id, &truth(&store, id), 1800).unwrap();
        }
        (s, store.records())
    };
    assert_eq!(before.len(), 7);

    // simulate a crash mid-append
    let log = dir.path().join("data/events.jsonl");
    let mut f = std::fs::OpenOptions::new().append(true).open(&log).unwrap();
    f.write_all(b"{\"seq\":99,\"event\":\"answer_rec").unwrap();
    drop(f);

    let store = open(&cfg);
    assert_eq!(store.records(), before);
    let restored = store.session(&session.session_id).unwrap();
    assert_eq!(restored.stimuli, session.stimuli);
    assert_eq!(restored.cursor(), 7);
    for id in &session.stimuli[7..] {
        store.submit_answer(&session.session_id, id, &truth(&store, id), 1800).unwrap();
    }
    drop(store);

    // without the snapshot the log alone rebuilds the same state
    std::fs::remove_file(dir.path().join("data/snapshot.json")).unwrap();
    let store = open(&cfg);
    let s = store.session(&session.session_id).unwrap();
    assert_eq!(s.status, SessionStatus::Approved);
    assert_eq!(store.records().len(), 10);
    assert_eq!(store.status().annotations, 10);
}

#[test]
fn simulated_campaign_matches_hand_computed_kappa() {
    let dir = tempfile::tempdir().unwrap();
    write_manifest(dir.path());
    let store = open(&position_config(dir.path()));

    // Voters answer correctly, except that the first two approved votes on
    // each row-3 stimulus name the section of the cell above. Every fifth
    // session is a speeder voting "bottom right" and gets rejected.
    let mut seen: HashMap<String, u32> = HashMap::new();
    let mut n = 0;
    loop {
        let session = match store.create_session(&format!("voter-{n}")) {
            Ok(s) => s,
            Err(AnnotateError::CampaignComplete) => break,
            Err(e) => panic!("{e}"),
        };
        let speeder = n % 5 == 4;
        n += 1;
        let status = complete(&store, &session.session_id, if speeder { 200 } else { 2500 }, |id| {
            if speeder {
                return "bottom right".into();
            }
            let cell = store.campaign().record(id).unwrap().world.primary().cell;
            let k = seen.entry(id.to_string()).or_default();
            *k += 1;
            if cell.row() == 3 && *k <= 2 {
                section_of(Cell::new(2, cell.col()).unwrap()).as_str().to_string()
            } else {
                truth(&store, id)
            }
        });
        assert_eq!(status == SessionStatus::Rejected, speeder);
    }
    let status = store.status();
    assert!(status.complete);
    assert_eq!(status.progress, "648/648");
    assert!(status.sessions_rejected > 0);

    let agg = store.aggregate().unwrap();
    assert!(agg.incomplete.is_empty());
    assert_eq!(agg.matrix.items.len(), 81);
    assert!(agg.matrix.items.iter().all(|r| r.raters() == 8));
    assert_eq!(agg.matrix.categories, store.campaign().categories);

    // 72 unanimous rows and 9 rows split 6/2 between vertically adjacent
    // sections: P = 20/21, P_e = 217/1944, kappa = 11441/12089.
    let kappa = fleiss_kappa(&agg.matrix).unwrap();
    assert!((kappa - 11441.0 / 12089.0).abs() < 1e-12, "{kappa}");
}

#[test]
fn unanimous_campaign_has_kappa_one() {
    let dir = tempfile::tempdir().unwrap();
    write_manifest(dir.path());
    let mut cfg = position_config(dir.path());
    cfg.target = 2;
    cfg.batch = 27;
    let store = open(&cfg);
    while let Ok(s) = store.create_session("a") {
        complete(&store, &s.session_id, 2000, |id| truth(&store, id));
    }
    let agg = store.aggregate().unwrap();
    assert_eq!(agg.matrix.items.len(), 81);
    assert_eq!(fleiss_kappa(&agg.matrix).unwrap(), 1.0);
}

#[test]
fn incomplete_stimuli_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    write_manifest(dir.path());
    let store = open(&position_config(dir.path()));
    let s = store.create_session("a").unwrap();
    complete(&store, &s.session_id, 2000, |id| truth(&store, id));
    let agg = store.aggregate().unwrap();
    assert!(agg.matrix.items.is_empty());
    assert_eq!(agg.incomplete.len(), 81);
    assert_eq!(agg.incomplete.iter().filter(|i| i.approved == 1).count(), 10);
}
