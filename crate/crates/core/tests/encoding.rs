mod common;

use clickcfa::clickstream::{
    build_full_sequence, build_static, build_time_varying, classify_event, classify_first, coalesce_events,
    compute_cfa, ClickEvent, ClickSession, EncodingConfig, EventType, RawRecord, NUM_EVENT_TYPES,
};
use proptest::prelude::*;

fn ev(event_type: EventType, position: f64, timestamp: f64, playing: bool, rate: f64) -> ClickEvent {
    ClickEvent {
        event_type,
        position,
        timestamp,
        playing,
        rate,
    }
}

fn raw(position: f64, timestamp: f64, playing: bool, rate: f64) -> RawRecord {
    RawRecord {
        position,
        timestamp,
        playing,
        rate,
    }
}

fn session(events: Vec<ClickEvent>, answer: Option<f64>, points: f64) -> ClickSession {
    ClickSession {
        user_id: "u".into(),
        video_id: "v".into(),
        video_length: 100.0,
        events,
        answer_timestamp: answer,
        points_awarded: points,
        points_max: 10.0,
    }
}

#[test]
fn skip_truth_table() {
    use EventType::*;
    let cfg = EncodingConfig::default();
    let playing = ev(Play, 20.0, 100.0, true, 1.0);
    let paused = ev(Pause, 20.0, 100.0, false, 1.0);
    let fast = ev(Play, 20.0, 100.0, true, 2.0);
    let cases = [
        // Playing: p' = 20 + 1.0 * 10 = 30.
        (playing, raw(10.0, 110.0, true, 1.0), SkipBack),
        (playing, raw(60.0, 110.0, true, 1.0), SkipForward),
        (playing, raw(30.0, 110.0, false, 1.0), Pause),
        (playing, raw(30.0, 110.0, true, 1.5), RateChange),
        // Paused: p' = 20 regardless of elapsed time.
        (paused, raw(20.0, 130.0, true, 1.0), Play),
        (paused, raw(5.0, 130.0, false, 1.0), SkipBack),
        (paused, raw(50.0, 130.0, true, 1.0), SkipForward),
        // Playing at rate 2: p' = 20 + 2.0 * 10 = 40.
        (fast, raw(40.5, 110.0, true, 2.0), Play),
        (fast, raw(30.0, 110.0, true, 2.0), SkipBack),
    ];
    for (i, (prev, r, want)) in cases.iter().enumerate() {
        assert_eq!(classify_event(prev, r, &cfg).unwrap(), *want, "case {i}");
    }
}

#[test]
fn malformed_records_are_rejected() {
    let cfg = EncodingConfig::default();
    let prev = ev(EventType::Play, 20.0, 100.0, true, 1.0);
    assert!(classify_event(&prev, &raw(-1.0, 110.0, true, 1.0), &cfg).is_err());
    assert!(classify_event(&prev, &raw(5.0, 110.0, true, 0.0), &cfg).is_err());
    assert!(classify_event(&prev, &raw(5.0, 90.0, true, 1.0), &cfg).is_err());
    assert_eq!(classify_first(&raw(0.0, 1.0, false, 1.0)).unwrap(), EventType::Pause);
}

#[test]
fn coalescing_keeps_last_of_each_run() {
    use EventType::*;
    let pa = |t: f64| ev(Pause, t * 10.0, t, false, 1.0);
    let out = coalesce_events(&[pa(0.0), pa(2.0), pa(4.0)], 5.0);
    assert_eq!(out, vec![pa(4.0)]);
    let spaced = [pa(0.0), pa(6.0)];
    assert_eq!(coalesce_events(&spaced, 5.0), spaced.to_vec());
    let alternating = [
        ev(Play, 0.0, 0.0, true, 1.0),
        ev(Pause, 1.0, 1.0, false, 1.0),
        ev(Play, 1.0, 2.0, true, 1.0),
    ];
    assert_eq!(coalesce_events(&alternating, 5.0), alternating.to_vec());
    // The window applies between successive events, not from the run head.
    assert_eq!(coalesce_events(&[pa(0.0), pa(4.0), pa(8.0)], 5.0), vec![pa(8.0)]);
    assert_eq!(coalesce_events(&[pa(0.0), pa(5.0)], 5.0), vec![pa(5.0)]);
    assert!(coalesce_events(&[], 5.0).is_empty());
}

#[test]
fn cfa_labels() {
    let s = |o: f64| session(vec![ev(EventType::Play, 0.0, 0.0, true, 1.0)], Some(1.0), o);
    let full = compute_cfa(&s(10.0)).unwrap();
    assert!(full.cfa);
    assert_eq!(full.one_hot(), [1.0, 0.0]);
    assert_eq!(compute_cfa(&s(7.0)).unwrap().one_hot(), [0.0, 1.0]);
    assert!(!compute_cfa(&s(0.0)).unwrap().cfa);
    assert!(compute_cfa(&s(11.0)).is_err());
    let mut bad = s(0.0);
    bad.points_max = 0.0;
    assert!(compute_cfa(&bad).is_err());
}

#[test]
fn answer_cut_and_boundary_row() {
    let events: Vec<ClickEvent> = (0..7)
        .map(|i| {
            ev(
                if i % 2 == 0 { EventType::Play } else { EventType::Pause },
                i as f64 * 5.0,
                10.0 * i as f64,
                i % 2 == 0,
                1.0,
            )
        })
        .collect();
    let s = session(events, Some(45.0), 10.0);
    let enc = build_time_varying(&s, &EncodingConfig::default()).unwrap();
    assert_eq!(enc.len(), 5);
    assert_eq!(enc.rows[0], [0.0, 0.0, 0.0, 1.0, 0.25]);
    assert_eq!(enc.rows[1][2], 10.0 / 300.0);
    assert_eq!(build_full_sequence(&s, &EncodingConfig::default()).len(), 7);
    let early = session(s.events.clone(), Some(0.0), 10.0);
    assert!(build_time_varying(&early, &EncodingConfig::default()).is_err());
}

#[test]
fn static_counts() {
    use EventType::*;
    let types = [Play, Play, Pause, SkipBack, Play];
    let events = types
        .iter()
        .enumerate()
        .map(|(i, &t)| ev(t, 0.0, i as f64, true, 1.0))
        .collect();
    let st = build_static(&session(events, None, 0.0));
    assert_eq!(st.total_clicks, 5);
    assert_eq!(st.per_type_counts, [3, 1, 1, 0, 0]);
    let single = build_static(&session(vec![ev(Play, 0.0, 0.0, true, 1.0)], None, 0.0));
    assert_eq!((single.total_clicks, single.per_type_counts), (1, [1, 0, 0, 0, 0]));
}

#[test]
fn row_total_matches_recount() {
    let corpus = common::synthetic(300, 3, 5);
    let cfg = EncodingConfig::default();
    let mut rows = 0;
    let mut recount = 0;
    for s in &corpus.sessions {
        if let Ok(enc) = build_time_varying(s, &cfg) {
            rows += enc.len();
        }
        let answer = s.answer_timestamp.unwrap();
        let mut n = 0;
        for e in &s.events {
            if e.timestamp < answer {
                n += 1;
            }
        }
        recount += n;
    }
    assert_eq!(rows, recount);
}

fn event_list() -> impl Strategy<Value = Vec<ClickEvent>> {
    prop::collection::vec((0u8..5, 0.0f64..8.0, 0.0f64..100.0, any::<bool>()), 0..40).prop_map(|items| {
        let mut t = 0.0;
        items
            .into_iter()
            .map(|(code, gap, pos, playing)| {
                t += gap;
                ev(EventType::from_code(code).unwrap(), pos, t, playing, 1.0)
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn coalescing_is_idempotent(events in event_list(), window in 0.0f64..10.0) {
        let once = coalesce_events(&events, window);
        prop_assert_eq!(coalesce_events(&once, window), once.clone());
        prop_assert!(once.len() <= events.len());
    }

    #[test]
    fn zero_elapsed_time_is_never_a_skip(
        code in 0u8..5, pos in 0.0f64..500.0, t in 0.0f64..1e9, playing in any::<bool>(),
        rate in 0.25f64..4.0, now_playing in any::<bool>(),
    ) {
        let prev = ev(EventType::from_code(code).unwrap(), pos, t, playing, rate);
        let ty = classify_event(&prev, &raw(pos, t, now_playing, rate), &EncodingConfig::default()).unwrap();
        prop_assert!(ty != EventType::SkipBack && ty != EventType::SkipForward);
    }

    #[test]
    fn static_counts_match_histogram(events in event_list()) {
        let st = build_static(&session(events.clone(), None, 0.0));
        let mut hist = [0usize; NUM_EVENT_TYPES];
        for e in &events {
            for (k, t) in EventType::ALL.iter().enumerate() {
                if e.event_type == *t {
                    hist[k] += 1;
                }
            }
        }
        prop_assert_eq!(st.per_type_counts, hist);
        prop_assert_eq!(st.per_type_counts.iter().sum::<usize>(), st.total_clicks);
    }

    #[test]
    fn rows_are_bounded(events in event_list(), rate in 0.5f64..4.0) {
        let events: Vec<ClickEvent> = events.into_iter().map(|e| ClickEvent { rate, ..e }).collect();
        prop_assume!(!events.is_empty());
        let s = session(events, Some(f64::INFINITY), 10.0);
        let enc = build_time_varying(&s, &EncodingConfig::default()).unwrap();
        for r in &enc.rows {
            prop_assert!(r.iter().all(|v| v.is_finite()));
            prop_assert!((0.0..=1.0).contains(&r[1]) && (0.0..=1.0).contains(&r[3]) && (0.0..=1.0).contains(&r[2]));
            prop_assert!(r[4] > 0.0 && r[4] <= 1.0);
        }
    }

    #[test]
    fn one_hot_is_consistent(points in 0u32..=10) {
        let s = session(vec![ev(EventType::Play, 0.0, 0.0, true, 1.0)], Some(1.0), points as f64);
        let l = compute_cfa(&s).unwrap();
        let h = l.one_hot();
        prop_assert_eq!(h[0] + h[1], 1.0);
        prop_assert_eq!(h[0] == 1.0, l.cfa);
        prop_assert_eq!(l.cfa, points == 10);
    }
}
