use std::fmt::Write as _;

use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Poisson};

use super::Corpus;
use crate::clickstream::{
    classify_event, ClickEvent, ClickSession, EncodingConfig, EventType, RawRecord, NUM_EVENT_TYPES,
};
use crate::error::{Error, Result};
use crate::kv;

/// Length in seconds of every generated video.
pub const VIDEO_LENGTH: f64 = 3600.0;
const NUM_VIDEOS: usize = 40;
const BASE_TIMESTAMP: f64 = 1.6e9;
/// Gaps between generated clicks exceed the coalescing window.
const MIN_GAP: f64 = 6.0;
const RATES: [f64; 6] = [0.5, 0.75, 1.0, 1.25, 1.5, 2.0];
const POINTS_MAX: f64 = 10.0;

/// A behavioural profile for generated sessions.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthArchetype {
    pub name: String,
    /// Row `i` is the distribution of the next event type after type `i`.
    pub transition: [[f64; NUM_EVENT_TYPES]; NUM_EVENT_TYPES],
    pub mean_session_length: usize,
    pub cfa_base_prob: f64,
    /// Added to the CFA probability per unit of skip-forward fraction.
    pub skip_forward_cfa_penalty: f64,
    pub cfa_floor: f64,
    pub cfa_ceiling: f64,
    /// Mean of the exponential part of inter-click gaps, in seconds.
    pub mean_gap: f64,
}

impl SynthArchetype {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("archetype `{}`: {msg}", self.name)));
        for (i, row) in self.transition.iter().enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return bad(format!("transition row {i} has entries outside [0, 1]"));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return bad(format!("transition row {i} sums to {s}"));
            }
        }
        if self.mean_session_length == 0 {
            return bad("mean_session_length must be positive".into());
        }
        for (k, v) in [
            ("cfa_base_prob", self.cfa_base_prob),
            ("cfa_floor", self.cfa_floor),
            ("cfa_ceiling", self.cfa_ceiling),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{k} = {v} is not a probability"));
            }
        }
        if self.cfa_floor > self.cfa_ceiling {
            return bad("cfa_floor exceeds cfa_ceiling".into());
        }
        if !self.skip_forward_cfa_penalty.is_finite() || !(self.mean_gap >= 0.0 && self.mean_gap.is_finite()) {
            return bad("non-finite penalty or gap".into());
        }
        Ok(())
    }

    pub fn cfa_probability(&self, skip_forward_fraction: f64) -> f64 {
        (self.cfa_base_prob + self.skip_forward_cfa_penalty * skip_forward_fraction)
            .clamp(self.cfa_floor, self.cfa_ceiling)
    }

    fn template(name: &str) -> Self {
        Self {
            name: name.to_string(),
            transition: [[0.2; NUM_EVENT_TYPES]; NUM_EVENT_TYPES],
            mean_session_length: 40,
            cfa_base_prob: 0.5,
            skip_forward_cfa_penalty: 0.0,
            cfa_floor: 0.0,
            cfa_ceiling: 1.0,
            mean_gap: 20.0,
        }
    }
}

/// Attentive viewers who rarely skip ahead, and skimmers who mostly do.
/// A skimmer's CFA probability saturates at the floor.
pub fn default_archetypes() -> Vec<SynthArchetype> {
    vec![
        SynthArchetype {
            transition: [
                [0.05, 0.60, 0.25, 0.02, 0.08],
                [0.75, 0.05, 0.15, 0.02, 0.03],
                [0.50, 0.30, 0.15, 0.02, 0.03],
                [0.60, 0.30, 0.05, 0.02, 0.03],
                [0.60, 0.30, 0.05, 0.02, 0.03],
            ],
            mean_session_length: 45,
            cfa_base_prob: 0.95,
            ..SynthArchetype::template("attentive")
        },
        SynthArchetype {
            transition: [
                [0.05, 0.10, 0.05, 0.75, 0.05],
                [0.40, 0.05, 0.05, 0.45, 0.05],
                [0.20, 0.05, 0.05, 0.65, 0.05],
                [0.10, 0.05, 0.05, 0.75, 0.05],
                [0.30, 0.05, 0.05, 0.55, 0.05],
            ],
            mean_session_length: 30,
            cfa_base_prob: 0.95,
            skip_forward_cfa_penalty: -10.0,
            cfa_floor: 0.05,
            ..SynthArchetype::template("skimmer")
        },
    ]
}

/// Reads archetypes from a flat key=value file. Each `name` key opens a
/// new archetype; `transition` lists five rows separated by `;`.
pub fn parse_archetypes(text: &str) -> Result<Vec<SynthArchetype>> {
    let mut out: Vec<SynthArchetype> = Vec::new();
    for e in kv::parse(text)? {
        if e.key == "name" {
            out.push(SynthArchetype::template(&e.value));
            continue;
        }
        let a = out
            .last_mut()
            .ok_or_else(|| Error::Config(format!("line {}: `{}` before any `name`", e.line, e.key)))?;
        match e.key.as_str() {
            "transition" => {
                let rows: Vec<&str> = e.value.split(';').map(str::trim).collect();
                if rows.len() != NUM_EVENT_TYPES {
                    return Err(Error::Config(format!(
                        "line {}: transition needs {NUM_EVENT_TYPES} rows",
                        e.line
                    )));
                }
                for (i, r) in rows.iter().enumerate() {
                    let vals: Vec<f64> = r
                        .split_whitespace()
                        .map(|v| v.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::Config(format!("line {}: bad number in transition row {i}", e.line)))?;
                    if vals.len() != NUM_EVENT_TYPES {
                        return Err(Error::Config(format!(
                            "line {}: transition row {i} needs {NUM_EVENT_TYPES} values",
                            e.line
                        )));
                    }
                    a.transition[i].copy_from_slice(&vals);
                }
            }
            "mean_session_length" => a.mean_session_length = kv::parse_value(&e)?,
            "cfa_base_prob" => a.cfa_base_prob = kv::parse_value(&e)?,
            "skip_forward_cfa_penalty" => a.skip_forward_cfa_penalty = kv::parse_value(&e)?,
            "cfa_floor" => a.cfa_floor = kv::parse_value(&e)?,
            "cfa_ceiling" => a.cfa_ceiling = kv::parse_value(&e)?,
            "mean_gap" => a.mean_gap = kv::parse_value(&e)?,
            other => {
                return Err(Error::Config(format!(
                    "line {}: unknown archetype key `{other}`",
                    e.line
                )))
            }
        }
    }
    for a in &out {
        a.validate()?;
    }
    Ok(out)
}

pub fn write_archetypes(archetypes: &[SynthArchetype]) -> String {
    let mut s = String::new();
    for (i, a) in archetypes.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        let rows: Vec<String> = a
            .transition
            .iter()
            .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))
            .collect();
        writeln!(s, "name = {}", a.name).unwrap();
        writeln!(s, "transition = {}", rows.join("; ")).unwrap();
        for (k, v) in [
            ("mean_session_length", a.mean_session_length.to_string()),
            ("cfa_base_prob", a.cfa_base_prob.to_string()),
            ("skip_forward_cfa_penalty", a.skip_forward_cfa_penalty.to_string()),
            ("cfa_floor", a.cfa_floor.to_string()),
            ("cfa_ceiling", a.cfa_ceiling.to_string()),
            ("mean_gap", a.mean_gap.to_string()),
        ] {
            writeln!(s, "{k} = {v}").unwrap();
        }
    }
    s
}

fn round_ms(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn sample_row(row: &[f64; NUM_EVENT_TYPES], rng: &mut ChaCha8Rng) -> EventType {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return EventType::ALL[i];
        }
    }
    // Rounding left `u` past the last cumulative sum.
    let last = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    EventType::ALL[last]
}

/// Player state for a click of type `want` right after `prev`. Skips
/// that would leave the video fall back to the opposite direction.
fn synthesize(prev: &ClickEvent, want: EventType, t: f64, rng: &mut ChaCha8Rng) -> RawRecord {
    let here = round_ms(prev.projected_position(t));
    let mut raw = RawRecord {
        position: here,
        timestamp: t,
        playing: prev.playing,
        rate: prev.rate,
    };
    let room_back = here - 3.0;
    let room_ahead = VIDEO_LENGTH - here - 3.0;
    let skip_back = |raw: &mut RawRecord, rng: &mut ChaCha8Rng| {
        raw.position = round_ms(here - rng.random_range(3.0..=room_back.clamp(3.0, 30.0)));
    };
    let skip_ahead = |raw: &mut RawRecord, rng: &mut ChaCha8Rng| {
        raw.position = round_ms(here + rng.random_range(3.0..=room_ahead.clamp(3.0, 60.0)));
    };
    match want {
        EventType::Play => raw.playing = true,
        EventType::Pause => raw.playing = false,
        EventType::SkipBack if room_back >= 0.0 => skip_back(&mut raw, rng),
        EventType::SkipForward if room_ahead >= 0.0 => skip_ahead(&mut raw, rng),
        EventType::SkipBack if room_ahead >= 0.0 => skip_ahead(&mut raw, rng),
        EventType::SkipForward if room_back >= 0.0 => skip_back(&mut raw, rng),
        EventType::SkipBack | EventType::SkipForward => raw.playing = true,
        EventType::RateChange => {
            let others: Vec<f64> = RATES.iter().copied().filter(|&r| r != prev.rate).collect();
            raw.rate = others[rng.random_range(0..others.len())];
        }
    }
    raw
}

/// Generates `n_sessions` sessions, each from a uniformly chosen archetype.
///
/// Every session opens with a Play at position 0. Later clicks follow
/// the archetype's Markov chain; their positions are derived from the
/// previous click's projected position so typing the log from its
/// kinematics recovers the generated types. Clicks are at least six
/// seconds apart, so coalescing leaves the sessions unchanged. The quiz
/// is answered one second after a click drawn from the last 40% of the
/// session, and CFA is drawn from the archetype's probability at the
/// session's skip-forward fraction.
pub fn generate_synthetic(archetypes: &[SynthArchetype], n_sessions: usize, seed: u64) -> Result<Corpus> {
    if archetypes.is_empty() {
        return Err(Error::Config("at least one archetype is required".into()));
    }
    if n_sessions == 0 {
        return Err(Error::Config("n_sessions must be positive".into()));
    }
    for a in archetypes {
        a.validate()?;
    }
    let cfg = EncodingConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = Uniform::new(0, archetypes.len()).expect("non-empty range");
    let mut sessions = Vec::with_capacity(n_sessions);
    let mut truth = Vec::with_capacity(n_sessions);
    for i in 0..n_sessions {
        let ai = pick.sample(&mut rng);
        let a = &archetypes[ai];
        let lambda = a.mean_session_length as f64;
        let len = (Poisson::new(lambda).expect("positive mean").sample(&mut rng) as usize).max(3);
        let gap = Exp::new(1.0 / a.mean_gap.max(1e-9)).expect("positive rate");

        let t0 = BASE_TIMESTAMP + (i as f64) * 100_000.0 + round_ms(rng.random_range(0.0..1000.0));
        let first = RawRecord {
            position: 0.0,
            timestamp: t0,
            playing: true,
            rate: 1.0,
        };
        let mut events = vec![ClickEvent::new(EventType::Play, first)?];
        while events.len() < len {
            let prev = *events.last().expect("non-empty");
            let want = sample_row(&a.transition[prev.event_type.code() as usize], &mut rng);
            let t = round_ms(prev.timestamp + MIN_GAP + if a.mean_gap > 0.0 { gap.sample(&mut rng) } else { 0.0 });
            let raw = synthesize(&prev, want, t, &mut rng);
            let ty = classify_event(&prev, &raw, &cfg)?;
            events.push(ClickEvent::new(ty, raw)?);
        }

        let cut = rng.random_range((len * 3).div_ceil(5).max(1)..=len);
        let answer = events[cut - 1].timestamp + 1.0;
        let sf = events.iter().filter(|e| e.event_type == EventType::SkipForward).count() as f64 / len as f64;
        let cfa = rng.random_bool(a.cfa_probability(sf));
        let points = if cfa {
            POINTS_MAX
        } else {
            rng.random_range(0..POINTS_MAX as u32) as f64
        };
        sessions.push(ClickSession {
            user_id: format!("u{i:05}"),
            video_id: format!("v{:03}", i % NUM_VIDEOS),
            video_length: VIDEO_LENGTH,
            events,
            answer_timestamp: Some(answer),
            points_awarded: points,
            points_max: POINTS_MAX,
        });
        truth.push(ai);
    }
    Ok(Corpus {
        dataset_name: "synthetic".into(),
        sessions,
        fold_assignments: None,
        archetypes: Some(truth),
    })
}
