//! Frame-over-frame brace monitoring and the append-only JSONL alarm log.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::brace::UnitVerdict;

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("snapshot {curr} (t={curr_ts}) precedes {prev} (t={prev_ts})")]
    NonMonotonicTimestamps {
        prev: String,
        prev_ts: i64,
        curr: String,
        curr_ts: i64,
    },
    #[error("snapshot {frame}: duplicate unit id {unit_id}")]
    DuplicateUnit { frame: String, unit_id: u64 },
    #[error("debounce must be at least 1")]
    InvalidDebounce,
    #[error("alarm log {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Verdicts for one monitoring interval, keyed by unit id.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSnapshot {
    frame_id: String,
    timestamp: i64,
    verdicts: BTreeMap<u64, UnitVerdict>,
}

impl FrameSnapshot {
    pub fn new(frame_id: impl Into<String>, timestamp: i64, verdicts: Vec<UnitVerdict>) -> Result<Self, MonitorError> {
        let frame_id = frame_id.into();
        let mut map = BTreeMap::new();
        for v in verdicts {
            let id = v.unit_id;
            if map.insert(id, v).is_some() {
                return Err(MonitorError::DuplicateUnit {
                    frame: frame_id,
                    unit_id: id,
                });
            }
        }
        Ok(Self {
            frame_id,
            timestamp,
            verdicts: map,
        })
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }

    pub fn timestamp(&self) -> i64 {
        self.timestamp
    }

    pub fn verdict(&self, unit_id: u64) -> Option<&UnitVerdict> {
        self.verdicts.get(&unit_id)
    }

    pub fn verdicts(&self) -> impl Iterator<Item = &UnitVerdict> {
        self.verdicts.values()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlarmKind {
    BraceRemoved,
    UnitLost,
}

/// One alarm, serialized as a log line. `curr_hits` is null for a lost unit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alarm {
    pub ts: i64,
    pub unit_id: u64,
    pub kind: AlarmKind,
    pub prev_frame: String,
    pub curr_frame: String,
    pub prev_hits: usize,
    pub curr_hits: Option<usize>,
}

/// Alarms for `prev -> curr`, ordered by unit id: a brace-present unit that
/// turns negative raises `BRACE_REMOVED`, a unit missing from `curr` raises
/// `UNIT_LOST`. New units and negative-to-positive flips are silent.
pub fn compare_frames(prev: &FrameSnapshot, curr: &FrameSnapshot) -> Result<Vec<Alarm>, MonitorError> {
    if prev.timestamp > curr.timestamp {
        return Err(MonitorError::NonMonotonicTimestamps {
            prev: prev.frame_id.clone(),
            prev_ts: prev.timestamp,
            curr: curr.frame_id.clone(),
            curr_ts: curr.timestamp,
        });
    }
    let alarm = |unit_id, kind, prev_hits, curr_hits| Alarm {
        ts: curr.timestamp,
        unit_id,
        kind,
        prev_frame: prev.frame_id.clone(),
        curr_frame: curr.frame_id.clone(),
        prev_hits,
        curr_hits,
    };
    let mut out = Vec::new();
    for (&id, before) in &prev.verdicts {
        match curr.verdicts.get(&id) {
            None => out.push(alarm(id, AlarmKind::UnitLost, before.central_hits, None)),
            Some(after) if before.brace_present && !after.brace_present => out.push(alarm(
                id,
                AlarmKind::BraceRemoved,
                before.central_hits,
                Some(after.central_hits),
            )),
            Some(_) => {}
        }
    }
    Ok(out)
}

/// Sequential monitor with k-frame debouncing of brace removal.
///
/// With `debounce == 1` the alarms for a sequence are exactly those of
/// [`compare_frames`] on consecutive pairs. With `debounce == k` a unit must
/// read negative in `k` consecutive frames after its last positive reading;
/// the alarm names the last positive frame and the frame that confirmed the
/// removal.
#[derive(Debug)]
pub struct Monitor {
    debounce: usize,
    last: Option<FrameSnapshot>,
    /// unit id -> (last positive frame id, its hits, consecutive negatives since)
    pending: BTreeMap<u64, (String, usize, usize)>,
}

impl Monitor {
    pub fn new(debounce: usize) -> Result<Self, MonitorError> {
        if debounce == 0 {
            return Err(MonitorError::InvalidDebounce);
        }
        Ok(Self {
            debounce,
            last: None,
            pending: BTreeMap::new(),
        })
    }

    pub fn observe(&mut self, snap: FrameSnapshot) -> Result<Vec<Alarm>, MonitorError> {
        let Some(prev) = self.last.take() else {
            for v in snap.verdicts().filter(|v| v.brace_present) {
                self.pending
                    .insert(v.unit_id, (snap.frame_id.clone(), v.central_hits, 0));
            }
            self.last = Some(snap);
            return Ok(Vec::new());
        };
        let mut alarms: Vec<Alarm> = compare_frames(&prev, &snap)?
            .into_iter()
            .filter(|a| a.kind == AlarmKind::UnitLost)
            .collect();
        let lost: BTreeSet<u64> = alarms.iter().map(|a| a.unit_id).collect();
        self.pending.retain(|id, _| !lost.contains(id));
        for v in snap.verdicts() {
            if v.brace_present {
                self.pending
                    .insert(v.unit_id, (snap.frame_id.clone(), v.central_hits, 0));
            } else if let Some((frame, hits, misses)) = self.pending.get_mut(&v.unit_id) {
                *misses += 1;
                if *misses == self.debounce {
                    alarms.push(Alarm {
                        ts: snap.timestamp,
                        unit_id: v.unit_id,
                        kind: AlarmKind::BraceRemoved,
                        prev_frame: frame.clone(),
                        curr_frame: snap.frame_id.clone(),
                        prev_hits: *hits,
                        curr_hits: Some(v.central_hits),
                    });
                    self.pending.remove(&v.unit_id);
                }
            }
        }
        alarms.sort_by_key(|a| a.unit_id);
        self.last = Some(snap);
        Ok(alarms)
    }
}

/// Appends one JSON object per alarm. An empty list leaves the file untouched.
pub fn append_log(alarms: &[Alarm], path: &Path) -> Result<(), MonitorError> {
    if alarms.is_empty() {
        return Ok(());
    }
    let io = |source| MonitorError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut buf = Vec::new();
    for a in alarms {
        serde_json::to_writer(&mut buf, a).expect("alarm serializes");
        buf.push(b'\n');
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    file.write_all(&buf).map_err(io)?;
    file.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdict(unit_id: u64, present: bool) -> UnitVerdict {
        UnitVerdict {
            unit_id,
            brace_present: present,
            intersections: vec![],
            n_lines_a: 0,
            n_lines_b: 0,
            central_hits: usize::from(present) * 2,
        }
    }

    fn snap(id: &str, ts: i64, units: &[(u64, bool)]) -> FrameSnapshot {
        FrameSnapshot::new(id, ts, units.iter().map(|&(u, p)| verdict(u, p)).collect()).unwrap()
    }

    #[test]
    fn identical_snapshots_are_quiet() {
        let s = snap("a", 0, &[(1, true), (2, false), (3, true)]);
        assert!(compare_frames(&s, &s).unwrap().is_empty());
    }

    #[test]
    fn removal_lost_and_new_units() {
        let prev = snap("a", 10, &[(1, true), (3, true), (4, false), (5, true)]);
        let curr = snap("b", 20, &[(1, true), (3, false), (4, true), (6, true)]);
        let alarms = compare_frames(&prev, &curr).unwrap();
        assert_eq!(
            alarms,
            vec![
                Alarm {
                    ts: 20,
                    unit_id: 3,
                    kind: AlarmKind::BraceRemoved,
                    prev_frame: "a".into(),
                    curr_frame: "b".into(),
                    prev_hits: 2,
                    curr_hits: Some(0),
                },
                Alarm {
                    ts: 20,
                    unit_id: 5,
                    kind: AlarmKind::UnitLost,
                    prev_frame: "a".into(),
                    curr_frame: "b".into(),
                    prev_hits: 2,
                    curr_hits: None,
                },
            ]
        );
    }

    #[test]
    fn timestamps_must_not_decrease() {
        let prev = snap("a", 10, &[]);
        let curr = snap("b", 9, &[]);
        assert!(matches!(
            compare_frames(&prev, &curr),
            Err(MonitorError::NonMonotonicTimestamps { .. })
        ));
    }

    #[test]
    fn duplicate_unit_rejected() {
        assert!(matches!(
            FrameSnapshot::new("x", 0, vec![verdict(1, true), verdict(1, false)]),
            Err(MonitorError::DuplicateUnit { unit_id: 1, .. })
        ));
    }

    #[test]
    fn log_line_format() {
        let prev = snap("f0", 1, &[(3, true)]);
        let curr = snap("f1", 2, &[(3, false)]);
        let a = compare_frames(&prev, &curr).unwrap();
        let line = serde_json::to_string(&a[0]).unwrap();
        assert_eq!(
            line,
            r#"{"ts":2,"unit_id":3,"kind":"BRACE_REMOVED","prev_frame":"f0","curr_frame":"f1","prev_hits":2,"curr_hits":0}"#
        );
    }

    #[test]
    fn append_only_log() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alarms.jsonl");
        append_log(&[], &path).unwrap();
        assert!(!path.exists());

        let prev = snap("f0", 1, &[(1, true), (2, true)]);
        let curr = snap("f1", 2, &[(1, false)]);
        let alarms = compare_frames(&prev, &curr).unwrap();
        assert_eq!(alarms.len(), 2);
        append_log(&alarms, &path).unwrap();
        let first = std::fs::read(&path).unwrap();
        assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 2);
        for line in String::from_utf8(first.clone()).unwrap().lines() {
            serde_json::from_str::<Alarm>(line).unwrap();
        }

        append_log(&[], &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);

        append_log(&alarms[..1], &path).unwrap();
        let second = std::fs::read(&path).unwrap();
        assert!(second.starts_with(&first));
        assert_eq!(second.iter().filter(|&&b| b == b'\n').count(), 3);
    }

    #[test]
    fn debounce_one_matches_pairwise() {
        let frames = [
            snap("0", 0, &[(1, true), (2, true), (3, false)]),
            snap("1", 1, &[(1, false), (2, true), (3, true)]),
            snap("2", 2, &[(1, true), (3, false)]),
            snap("3", 3, &[(1, false), (2, false), (3, false)]),
        ];
        let mut m = Monitor::new(1).unwrap();
        let mut streamed = Vec::new();
        for f in frames.iter().cloned() {
            streamed.extend(m.observe(f).unwrap());
        }
        let pairwise: Vec<Alarm> = frames
            .windows(2)
            .flat_map(|w| compare_frames(&w[0], &w[1]).unwrap())
            .collect();
        assert_eq!(streamed, pairwise);
    }

    #[test]
    fn debounce_two_needs_consecutive_misses() {
        let mut m = Monitor::new(2).unwrap();
        assert!(m.observe(snap("0", 0, &[(1, true)])).unwrap().is_empty());
        assert!(m.observe(snap("1", 1, &[(1, false)])).unwrap().is_empty());
        assert!(m.observe(snap("2", 2, &[(1, true)])).unwrap().is_empty());
        assert!(m.observe(snap("3", 3, &[(1, false)])).unwrap().is_empty());
        let a = m.observe(snap("4", 4, &[(1, false)])).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!((a[0].prev_frame.as_str(), a[0].curr_frame.as_str()), ("2", "4"));
        assert!(m.observe(snap("5", 5, &[(1, false)])).unwrap().is_empty());
    }
}
