use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use super::Corpus;
use crate::clickstream::{
    classify_event, classify_first, coalesce_events, ClickEvent, ClickSession, EncodingConfig, EventType, RawRecord,
    SCORE_SLACK,
};
use crate::error::{Error, Result};

/// The events file and its sidecars.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusPaths {
    pub events: PathBuf,
    pub quiz: PathBuf,
    pub videos: PathBuf,
    pub truth: PathBuf,
}

impl CorpusPaths {
    /// `dir/name.tsv` -> `dir/name.quiz.tsv`, `dir/name.videos.tsv`, `dir/name.truth.tsv`.
    pub fn from_events(events: impl AsRef<Path>) -> Self {
        let events = events.as_ref().to_path_buf();
        let file = events
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
        let stem = file.strip_suffix(".tsv").unwrap_or(&file).to_string();
        let sibling = |suffix: &str| events.with_file_name(format!("{stem}.{suffix}.tsv"));
        Self {
            quiz: sibling("quiz"),
            videos: sibling("videos"),
            truth: sibling("truth"),
            events,
        }
    }
}

/// Line counts gathered while parsing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParseSummary {
    pub event_lines: usize,
    pub malformed_events: usize,
    pub quiz_lines: usize,
    pub malformed_quiz: usize,
    /// Quiz lines for pairs with no events.
    pub orphan_quiz: usize,
    /// Later submissions for a pair that already has an earlier one.
    pub repeat_submissions: usize,
    /// Events whose logged code disagrees with the kinematic typing.
    pub retyped_events: usize,
    /// Events merged away by coalescing.
    pub coalesced_events: usize,
}

struct LoggedEvent {
    code: u8,
    raw: RawRecord,
}

struct Quiz {
    points: f64,
    points_max: f64,
    answer: f64,
}

fn read_optional(path: &Path) -> Result<Option<String>> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn field<T: std::str::FromStr>(f: &str) -> Option<T> {
    f.trim().parse().ok()
}

fn parse_event_line(line: &str) -> Option<(String, String, LoggedEvent)> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != 7 || f[0].is_empty() || f[1].is_empty() {
        return None;
    }
    let code: u8 = field(f[2])?;
    EventType::from_code(code)?;
    let state: u8 = field(f[5])?;
    if state > 1 {
        return None;
    }
    let raw = RawRecord {
        position: field(f[3])?,
        timestamp: field(f[4])?,
        playing: state == 1,
        rate: field(f[6])?,
    };
    raw.validate().ok()?;
    Some((f[0].to_string(), f[1].to_string(), LoggedEvent { code, raw }))
}

fn parse_quiz_line(line: &str) -> Option<(String, String, Quiz)> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != 5 || f[0].is_empty() || f[1].is_empty() {
        return None;
    }
    let q = Quiz {
        points: field(f[2])?,
        points_max: field(f[3])?,
        answer: field(f[4])?,
    };
    let ok = q.points_max > 0.0
        && q.points >= 0.0
        && q.points <= q.points_max + SCORE_SLACK
        && q.answer.is_finite()
        && q.answer >= 0.0;
    ok.then(|| (f[0].to_string(), f[1].to_string(), q))
}

fn check_rejection(malformed: usize, total: usize) -> Result<()> {
    if total > 0 && 2 * malformed > total {
        return Err(Error::CorpusRejected { malformed, total });
    }
    Ok(())
}

/// Reads an events file and its sidecars into sessions.
///
/// Lines are grouped by `(user, video)` in order of first appearance,
/// sorted by timestamp, re-typed from the player kinematics and
/// coalesced. The logged event code is only compared, never trusted.
/// Malformed lines are skipped and counted; a file with more than half
/// of its lines malformed is rejected.
pub fn parse_log(events_path: impl AsRef<Path>, cfg: &EncodingConfig) -> Result<(Corpus, ParseSummary)> {
    let paths = CorpusPaths::from_events(events_path);
    let text = fs::read_to_string(&paths.events).map_err(|e| Error::io(&paths.events, e))?;
    let mut summary = ParseSummary::default();

    let mut groups: IndexMap<(String, String), Vec<LoggedEvent>> = IndexMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        summary.event_lines += 1;
        match parse_event_line(line) {
            Some((u, v, e)) => groups.entry((u, v)).or_default().push(e),
            None => summary.malformed_events += 1,
        }
    }
    check_rejection(summary.malformed_events, summary.event_lines)?;
    if summary.event_lines == 0 {
        log::warn!("{}: no event records", paths.events.display());
    }

    let mut quizzes: IndexMap<(String, String), Quiz> = IndexMap::new();
    if let Some(text) = read_optional(&paths.quiz)? {
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            summary.quiz_lines += 1;
            let Some((u, v, q)) = parse_quiz_line(line) else {
                summary.malformed_quiz += 1;
                continue;
            };
            let key = (u, v);
            if !groups.contains_key(&key) {
                summary.orphan_quiz += 1;
                continue;
            }
            match quizzes.get_mut(&key) {
                Some(prev) => {
                    summary.repeat_submissions += 1;
                    if q.answer < prev.answer {
                        *prev = q;
                    }
                }
                None => {
                    quizzes.insert(key, q);
                }
            }
        }
        check_rejection(summary.malformed_quiz, summary.quiz_lines)?;
    }

    let mut lengths: IndexMap<String, f64> = IndexMap::new();
    if let Some(text) = read_optional(&paths.videos)? {
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let parsed = line
                .split_once('\t')
                .and_then(|(v, l)| field::<f64>(l).filter(|l| l.is_finite() && *l > 0.0).map(|l| (v, l)));
            match parsed {
                Some((v, l)) => {
                    lengths.insert(v.to_string(), l);
                }
                None => log::warn!("{}:{}: ignoring malformed video length", paths.videos.display(), i + 1),
            }
        }
    }
    for ((_, v), events) in &groups {
        if !lengths.contains_key(v) {
            let observed = events.iter().map(|e| e.raw.position).fold(0.0, f64::max);
            log::debug!("video {v}: no length record, using the furthest observed position");
            lengths.insert(v.clone(), observed.max(1.0));
        }
    }

    let mut sessions = Vec::with_capacity(groups.len());
    for ((user, video), mut logged) in groups {
        logged.sort_by(|a, b| a.raw.timestamp.total_cmp(&b.raw.timestamp));
        let mut events: Vec<ClickEvent> = Vec::with_capacity(logged.len());
        for e in &logged {
            let ty = match events.last() {
                None => classify_first(&e.raw)?,
                Some(prev) => classify_event(prev, &e.raw, cfg)?,
            };
            if ty.code() != e.code {
                summary.retyped_events += 1;
            }
            events.push(ClickEvent::new(ty, e.raw)?);
        }
        let merged = coalesce_events(&events, cfg.coalesce_window);
        summary.coalesced_events += events.len() - merged.len();
        let quiz = quizzes.swap_remove(&(user.clone(), video.clone()));
        sessions.push(ClickSession {
            video_length: lengths[&video],
            answer_timestamp: quiz.as_ref().map(|q| q.answer),
            points_awarded: quiz.as_ref().map_or(0.0, |q| q.points),
            points_max: quiz.as_ref().map_or(1.0, |q| q.points_max),
            user_id: user,
            video_id: video,
            events: merged,
        });
    }

    let archetypes = match read_optional(&paths.truth)? {
        None => None,
        Some(text) => {
            let mut truth: IndexMap<(String, String), usize> = IndexMap::new();
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let f: Vec<&str> = line.split('\t').collect();
                if let [u, v, a] = f[..] {
                    if let Some(a) = field(a) {
                        truth.insert((u.to_string(), v.to_string()), a);
                    }
                }
            }
            sessions
                .iter()
                .map(|s| truth.get(&(s.user_id.clone(), s.video_id.clone())).copied())
                .collect::<Option<Vec<usize>>>()
        }
    };

    let dataset_name = paths
        .events
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok((
        Corpus {
            dataset_name,
            sessions,
            fold_assignments: None,
            archetypes,
        },
        summary,
    ))
}

/// Writes the events file and sidecars. Inverse of [`parse_log`] on
/// corpora whose events are already typed and coalesced.
pub fn write_corpus(corpus: &Corpus, events_path: impl AsRef<Path>) -> Result<CorpusPaths> {
    let paths = CorpusPaths::from_events(events_path);
    let mut events = String::new();
    let mut quiz = String::new();
    let mut videos: IndexMap<&str, f64> = IndexMap::new();
    for s in &corpus.sessions {
        for e in &s.events {
            writeln!(
                events,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                s.user_id,
                s.video_id,
                e.event_type.code(),
                e.position,
                e.timestamp,
                e.playing as u8,
                e.rate
            )
            .expect("string write");
        }
        if let Some(ts) = s.answer_timestamp {
            writeln!(
                quiz,
                "{}\t{}\t{}\t{}\t{}",
                s.user_id, s.video_id, s.points_awarded, s.points_max, ts
            )
            .expect("string write");
        }
        videos.entry(&s.video_id).or_insert(s.video_length);
    }
    let videos: String = videos.iter().map(|(v, l)| format!("{v}\t{l}\n")).collect();
    write_file(&paths.events, &events)?;
    write_file(&paths.quiz, &quiz)?;
    write_file(&paths.videos, &videos)?;
    if let Some(arch) = &corpus.archetypes {
        let truth: String = corpus
            .sessions
            .iter()
            .zip(arch)
            .map(|(s, a)| format!("{}\t{}\t{a}\n", s.user_id, s.video_id))
            .collect();
        write_file(&paths.truth, &truth)?;
    }
    Ok(paths)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_names() {
        let p = CorpusPaths::from_events("/tmp/run/synth.tsv");
        assert_eq!(p.quiz, PathBuf::from("/tmp/run/synth.quiz.tsv"));
        assert_eq!(p.videos, PathBuf::from("/tmp/run/synth.videos.tsv"));
        let p = CorpusPaths::from_events("log");
        assert_eq!(p.truth, PathBuf::from("log.truth.tsv"));
    }

    #[test]
    fn event_line_validation() {
        assert!(parse_event_line("u\tv\t0\t1.5\t100\t1\t1").is_some());
        assert!(parse_event_line("u\tv\t5\t1.5\t100\t1\t1").is_none());
        assert!(parse_event_line("u\tv\t0\t-1\t100\t1\t1").is_none());
        assert!(parse_event_line("u\tv\t0\t1\t100\t2\t1").is_none());
        assert!(parse_event_line("u\tv\t0\t1\t100\t1\t0").is_none());
        assert!(parse_event_line("u\tv\t0\t1\t100\t1").is_none());
        assert!(parse_quiz_line("u\tv\t11\t10\t5").is_none());
        assert!(parse_quiz_line("u\tv\t10\t10\t5").is_some());
    }
}
