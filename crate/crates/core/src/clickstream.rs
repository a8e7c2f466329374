//! Video-player click events, session assembly and the encodings fed to
//! the models.

use clickcfa_neural::Tensor;

use crate::error::{Error, Result};

/// Number of event types and the width of a time-varying feature row.
pub const NUM_EVENT_TYPES: usize = 5;
pub const ROW_DIM: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventType {
    Play = 0,
    Pause = 1,
    SkipBack = 2,
    SkipForward = 3,
    RateChange = 4,
}

impl EventType {
    pub const ALL: [EventType; NUM_EVENT_TYPES] = [
        EventType::Play,
        EventType::Pause,
        EventType::SkipBack,
        EventType::SkipForward,
        EventType::RateChange,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn abbrev(self) -> &'static str {
        match self {
            EventType::Play => "Pl",
            EventType::Pause => "Pa",
            EventType::SkipBack => "Sb",
            EventType::SkipForward => "Sf",
            EventType::RateChange => "Sp",
        }
    }
}

/// Player state reported with each click, before typing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawRecord {
    pub position: f64,
    pub timestamp: f64,
    pub playing: bool,
    pub rate: f64,
}

impl RawRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.position.is_finite() && self.position >= 0.0) {
            return Err(Error::MalformedRecord(format!("position {}", self.position)));
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::MalformedRecord(format!("rate {}", self.rate)));
        }
        if !(self.timestamp.is_finite() && self.timestamp >= 0.0) {
            return Err(Error::MalformedRecord(format!("timestamp {}", self.timestamp)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClickEvent {
    pub event_type: EventType,
    pub position: f64,
    pub timestamp: f64,
    pub playing: bool,
    pub rate: f64,
}

impl ClickEvent {
    pub fn new(event_type: EventType, raw: RawRecord) -> Result<Self> {
        raw.validate()?;
        match (event_type, raw.playing) {
            (EventType::Play, false) => return Err(Error::MalformedRecord("play event in paused state".into())),
            (EventType::Pause, true) => return Err(Error::MalformedRecord("pause event in playing state".into())),
            _ => {}
        }
        Ok(Self {
            event_type,
            position: raw.position,
            timestamp: raw.timestamp,
            playing: raw.playing,
            rate: raw.rate,
        })
    }

    pub fn raw(&self) -> RawRecord {
        RawRecord {
            position: self.position,
            timestamp: self.timestamp,
            playing: self.playing,
            rate: self.rate,
        }
    }

    /// Where the player head would be at `t` if nothing had been clicked.
    pub fn projected_position(&self, t: f64) -> f64 {
        if self.playing {
            self.position + self.rate * (t - self.timestamp)
        } else {
            self.position
        }
    }
}

/// Tunables for typing, coalescing and feature scaling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncodingConfig {
    /// Position discrepancy (seconds) below which a click is not a skip.
    pub eps_skip: f64,
    /// Window (seconds) within which same-type clicks are merged.
    pub coalesce_window: f64,
    /// Inter-event gaps are capped at this many seconds, then scaled to [0, 1].
    pub dt_cap: f64,
    /// Playback rate that maps to 1.0 in the feature row.
    pub r_max: f64,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            eps_skip: 1.0,
            coalesce_window: 5.0,
            dt_cap: 300.0,
            r_max: 4.0,
        }
    }
}

/// Types a click from the previous event and the new player state.
///
/// Rate changes take precedence, then skips (beyond `eps_skip` of the
/// projected position), then the play/pause state.
pub fn classify_event(prev: &ClickEvent, raw: &RawRecord, cfg: &EncodingConfig) -> Result<EventType> {
    raw.validate()?;
    if raw.timestamp < prev.timestamp {
        return Err(Error::MalformedRecord(format!(
            "timestamp {} precedes previous event at {}",
            raw.timestamp, prev.timestamp
        )));
    }
    let before = prev.projected_position(raw.timestamp);
    Ok(if (raw.rate - prev.rate).abs() > 0.0 {
        EventType::RateChange
    } else if before - raw.position > cfg.eps_skip {
        EventType::SkipBack
    } else if raw.position - before > cfg.eps_skip {
        EventType::SkipForward
    } else if raw.playing {
        EventType::Play
    } else {
        EventType::Pause
    })
}

/// Type of the first click of a session, which has no predecessor.
pub fn classify_first(raw: &RawRecord) -> Result<EventType> {
    raw.validate()?;
    Ok(if raw.playing { EventType::Play } else { EventType::Pause })
}

/// Collapses runs of same-type events whose successive gaps are at most
/// `window` seconds into the last event of the run.
pub fn coalesce_events(events: &[ClickEvent], window: f64) -> Vec<ClickEvent> {
    let mut out: Vec<ClickEvent> = Vec::with_capacity(events.len());
    for (i, e) in events.iter().enumerate() {
        let continues_run = i > 0 && {
            let prev = &events[i - 1];
            prev.event_type == e.event_type && e.timestamp - prev.timestamp <= window
        };
        if continues_run {
            *out.last_mut().expect("run has a head") = *e;
        } else {
            out.push(*e);
        }
    }
    out
}

/// All clicks of one student on one video plus the quiz outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct ClickSession {
    pub user_id: String,
    pub video_id: String,
    pub video_length: f64,
    pub events: Vec<ClickEvent>,
    pub answer_timestamp: Option<f64>,
    pub points_awarded: f64,
    pub points_max: f64,
}

impl ClickSession {
    pub fn key(&self) -> (&str, &str) {
        (&self.user_id, &self.video_id)
    }

    pub fn id(&self) -> String {
        format!("{}/{}", self.user_id, self.video_id)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn types(&self) -> Vec<EventType> {
        self.events.iter().map(|e| e.event_type).collect()
    }

    /// Events strictly before the first answer.
    pub fn pre_answer_events(&self) -> &[ClickEvent] {
        match self.answer_timestamp {
            None => &[],
            Some(ts) => {
                let n = self.events.partition_point(|e| e.timestamp < ts);
                &self.events[..n]
            }
        }
    }

    /// Whether the session can be used for CFA training and evaluation.
    pub fn is_labeled(&self) -> bool {
        self.answer_timestamp.is_some() && !self.pre_answer_events().is_empty()
    }
}

/// Per-event feature rows:
/// `(type_code / 4, position / video_length, min(Δt, cap) / cap, state, rate / r_max)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeVaryingEncoding {
    pub rows: Vec<[f64; ROW_DIM]>,
}

impl TimeVaryingEncoding {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_rows(&self.rows, ROW_DIM).expect("fixed-width rows")
    }
}

/// Feature rows for an arbitrary event slice (used for both the full
/// sequence and the pre-answer prefix).
pub fn encode_events(events: &[ClickEvent], video_length: f64, cfg: &EncodingConfig) -> Vec<[f64; ROW_DIM]> {
    let max_code = (NUM_EVENT_TYPES - 1) as f64;
    events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let dt = if i == 0 {
                0.0
            } else {
                (e.timestamp - events[i - 1].timestamp).clamp(0.0, cfg.dt_cap) / cfg.dt_cap
            };
            [
                e.event_type.code() as f64 / max_code,
                (e.position / video_length).clamp(0.0, 1.0),
                dt,
                if e.playing { 1.0 } else { 0.0 },
                e.rate / cfg.r_max,
            ]
        })
        .collect()
}

/// Encoding of the clicks made before the first quiz answer.
pub fn build_time_varying(session: &ClickSession, cfg: &EncodingConfig) -> Result<TimeVaryingEncoding> {
    let events = session.pre_answer_events();
    if events.is_empty() {
        return Err(Error::EmptyEncoding(session.id()));
    }
    Ok(TimeVaryingEncoding {
        rows: encode_events(events, session.video_length, cfg),
    })
}

/// Encoding of the whole session, used for pre-training.
pub fn build_full_sequence(session: &ClickSession, cfg: &EncodingConfig) -> TimeVaryingEncoding {
    TimeVaryingEncoding {
        rows: encode_events(&session.events, session.video_length, cfg),
    }
}

/// Static clustering criterion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Criterion {
    /// Total clicks only.
    C1,
    /// Per-event-type counts.
    C2,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "c1" => Ok(Criterion::C1),
            "c2" => Ok(Criterion::C2),
            _ => Err(Error::Config(format!("unknown criterion `{s}`"))),
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Criterion::C1 => "C1",
            Criterion::C2 => "C2",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StaticEncoding {
    pub total_clicks: usize,
    pub per_type_counts: [usize; NUM_EVENT_TYPES],
}

impl StaticEncoding {
    pub fn features(&self, criterion: Criterion) -> Vec<f64> {
        match criterion {
            Criterion::C1 => vec![self.total_clicks as f64],
            Criterion::C2 => self.per_type_counts.iter().map(|&c| c as f64).collect(),
        }
    }
}

/// Click counts over the whole session.
pub fn build_static(session: &ClickSession) -> StaticEncoding {
    let mut per_type_counts = [0usize; NUM_EVENT_TYPES];
    for e in &session.events {
        per_type_counts[e.event_type.code() as usize] += 1;
    }
    StaticEncoding {
        total_clicks: session.events.len(),
        per_type_counts,
    }
}

/// Correct-on-first-attempt label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CfaLabel {
    pub cfa: bool,
}

impl CfaLabel {
    /// `(1, 0)` for CFA, `(0, 1)` otherwise.
    pub fn one_hot(self) -> [f64; 2] {
        if self.cfa {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        }
    }

    pub fn as_u8(self) -> u8 {
        self.cfa as u8
    }
}

/// Slack for comparing real-valued grades.
pub const SCORE_SLACK: f64 = 1e-9;

pub fn compute_cfa(session: &ClickSession) -> Result<CfaLabel> {
    let (o, max) = (session.points_awarded, session.points_max);
    // Written positively so NaN grades are rejected too.
    let valid = max > 0.0 && o >= 0.0 && o <= max + SCORE_SLACK;
    if !valid {
        return Err(Error::InvalidScore { awarded: o, max });
    }
    Ok(CfaLabel {
        cfa: max - o <= SCORE_SLACK,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

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

    #[test]
    fn event_codes_are_bijective() {
        for (i, t) in EventType::ALL.iter().enumerate() {
            assert_eq!(t.code() as usize, i);
            assert_eq!(EventType::from_code(i as u8), Some(*t));
        }
        assert_eq!(EventType::from_code(5), None);
    }

    #[test]
    fn classify_examples() {
        let cfg = EncodingConfig::default();
        let playing = ev(EventType::Play, 20.0, 100.0, true, 1.0);
        let paused = ev(EventType::Pause, 20.0, 100.0, false, 1.0);
        assert_eq!(
            classify_event(&playing, &raw(10.0, 110.0, true, 1.0), &cfg).unwrap(),
            EventType::SkipBack
        );
        assert_eq!(
            classify_event(&paused, &raw(20.0, 130.0, true, 1.0), &cfg).unwrap(),
            EventType::Play
        );
        assert_eq!(
            classify_event(&playing, &raw(30.0, 110.0, true, 1.5), &cfg).unwrap(),
            EventType::RateChange
        );
    }

    #[test]
    fn classify_rejects_malformed() {
        let cfg = EncodingConfig::default();
        let prev = ev(EventType::Play, 0.0, 0.0, true, 1.0);
        assert!(classify_event(&prev, &raw(-1.0, 1.0, true, 1.0), &cfg).is_err());
        assert!(classify_event(&prev, &raw(1.0, 1.0, true, 0.0), &cfg).is_err());
    }

    #[test]
    fn coalesce_examples() {
        let p = |t| ev(EventType::Pause, 3.0, t, false, 1.0);
        let l = |t| ev(EventType::Play, 3.0, t, true, 1.0);
        assert_eq!(coalesce_events(&[p(0.0), p(2.0), p(4.0)], 5.0), vec![p(4.0)]);
        assert_eq!(coalesce_events(&[p(0.0), p(6.0)], 5.0), vec![p(0.0), p(6.0)]);
        let alt = vec![l(0.0), p(1.0), l(2.0)];
        assert_eq!(coalesce_events(&alt, 5.0), alt);
        assert!(coalesce_events(&[], 5.0).is_empty());
    }

    #[test]
    fn first_row_normalization() {
        let s = ClickSession {
            user_id: "u".into(),
            video_id: "v".into(),
            video_length: 100.0,
            events: vec![ev(EventType::Play, 0.0, 1000.0, true, 1.0)],
            answer_timestamp: Some(1001.0),
            points_awarded: 1.0,
            points_max: 1.0,
        };
        let enc = build_time_varying(&s, &EncodingConfig::default()).unwrap();
        assert_eq!(enc.rows, vec![[0.0, 0.0, 0.0, 1.0, 0.25]]);
    }

    #[test]
    fn time_varying_cut_and_empty_error() {
        let events: Vec<ClickEvent> = (0..7)
            .map(|i| ev(EventType::Play, i as f64, 10.0 * i as f64, true, 1.0))
            .collect();
        let mut s = ClickSession {
            user_id: "u".into(),
            video_id: "v".into(),
            video_length: 100.0,
            events,
            answer_timestamp: Some(45.0),
            points_awarded: 0.0,
            points_max: 1.0,
        };
        assert_eq!(build_time_varying(&s, &EncodingConfig::default()).unwrap().len(), 5);
        s.answer_timestamp = Some(0.0);
        assert!(matches!(
            build_time_varying(&s, &EncodingConfig::default()),
            Err(Error::EmptyEncoding(_))
        ));
        s.answer_timestamp = None;
        assert!(build_time_varying(&s, &EncodingConfig::default()).is_err());
    }

    #[test]
    fn static_counts() {
        use EventType::*;
        let types = [Play, Play, Pause, SkipBack, Play];
        let s = ClickSession {
            user_id: "u".into(),
            video_id: "v".into(),
            video_length: 100.0,
            events: types
                .iter()
                .enumerate()
                .map(|(i, &t)| ev(t, 0.0, i as f64 * 10.0, t != Pause, 1.0))
                .collect(),
            answer_timestamp: None,
            points_awarded: 0.0,
            points_max: 1.0,
        };
        let st = build_static(&s);
        assert_eq!(st.total_clicks, 5);
        assert_eq!(st.per_type_counts, [3, 1, 1, 0, 0]);
        assert_eq!(st.features(Criterion::C1), vec![5.0]);
    }

    #[test]
    fn cfa_examples() {
        let mut s = ClickSession {
            user_id: "u".into(),
            video_id: "v".into(),
            video_length: 1.0,
            events: vec![],
            answer_timestamp: None,
            points_awarded: 10.0,
            points_max: 10.0,
        };
        let l = compute_cfa(&s).unwrap();
        assert!(l.cfa);
        assert_eq!(l.one_hot(), [1.0, 0.0]);
        s.points_awarded = 7.0;
        assert_eq!(compute_cfa(&s).unwrap().one_hot(), [0.0, 1.0]);
        s.points_awarded = 0.0;
        assert!(!compute_cfa(&s).unwrap().cfa);
        s.points_awarded = 11.0;
        assert!(matches!(compute_cfa(&s), Err(Error::InvalidScore { .. })));
    }
}
