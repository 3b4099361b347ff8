//! Parsing and serialization for the three interchange formats: RTTM
//! diarization files, delimited-text embedding tables, and the JSON
//! corpus manifest.
//!
//! RTTM lines have ten whitespace-separated fields; only type
//! `SPEAKER` lines carry data (file id in field 2, onset in field 4,
//! duration in field 5, speaker label in field 8). Onsets and
//! durations are written with exactly three decimals, matching the
//! millisecond convention of diarization corpora, so a parse/write
//! round trip is byte-stable for inputs that carry at most three
//! decimals.
//!
//! Segment ids are not part of RTTM; after validation each segment is
//! assigned `"{recording_id}_{index:05}"` in canonical (sorted) order.
//! Embedding files bind vectors to segments through these ids.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeline::{validate_timeline, SpeechSegment, Timeline, TimelineError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("segment {id:?} carries no speaker label")]
    MissingSpeakerLabel { id: String },
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: duplicate segment id {id:?}")]
    DuplicateSegmentId { line: usize, id: String },
    #[error("line {line}: segment {id:?} has an all-zero embedding")]
    ZeroVector { line: usize, id: String },
    #[error("participant {participant:?} references unknown recording {recording:?}")]
    UnknownRecordingRef {
        participant: String,
        recording: String,
    },
    #[error("participant {participant:?}: item scores sum to {item_sum} but severity is {severity}")]
    ItemSumMismatch {
        participant: String,
        item_sum: u32,
        severity: u32,
    },
    #[error("manifest is not valid JSON: {0}")]
    ManifestSyntax(#[from] serde_json::Error),
    #[error(transparent)]
    InvalidTimeline(#[from] TimelineError),
}

/// Per-segment speaker embeddings, keyed by segment id.
///
/// All vectors share one dimension and none is all-zero (cosine
/// distance would be undefined). Keys iterate in sorted order, which
/// downstream clustering relies on for determinism.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// Builds a table from (id, vector) pairs, enforcing the dimension
    /// and non-zero invariants.
    pub fn from_entries(
        entries: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self, IoError> {
        let mut map = BTreeMap::new();
        let mut dim = 0;
        for (line, (id, vec)) in entries.into_iter().enumerate() {
            let line = line + 1;
            if map.is_empty() {
                dim = vec.len();
            } else if vec.len() != dim {
                return Err(IoError::DimensionMismatch {
                    line,
                    expected: dim,
                    found: vec.len(),
                });
            }
            if vec.iter().all(|v| *v == 0.0) {
                return Err(IoError::ZeroVector { line, id });
            }
            if map.insert(id.clone(), vec).is_some() {
                return Err(IoError::DuplicateSegmentId { line, id });
            }
        }
        Ok(EmbeddingTable { dim, entries: map })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parses RTTM text into validated per-recording timelines.
///
/// Non-`SPEAKER` lines (comments, other record types, blanks) are
/// ignored. Each recording's total duration is the end of its last
/// segment; callers with better duration metadata (the manifest)
/// should override it.
pub fn parse_rttm(text: &str) -> Result<BTreeMap<String, Timeline>, IoError> {
    let mut by_recording: BTreeMap<String, Vec<SpeechSegment>> = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let fields: Vec<&str> = raw_line.split_whitespace().collect();
        if fields.first() != Some(&"SPEAKER") {
            continue;
        }
        if fields.len() != 10 {
            return Err(IoError::MalformedLine {
                line,
                reason: format!("expected 10 fields, found {}", fields.len()),
            });
        }
        let onset: f64 = fields[3].parse().map_err(|_| IoError::MalformedLine {
            line,
            reason: format!("unparseable onset {:?}", fields[3]),
        })?;
        let duration: f64 = fields[4].parse().map_err(|_| IoError::MalformedLine {
            line,
            reason: format!("unparseable duration {:?}", fields[4]),
        })?;
        by_recording
            .entry(fields[1].to_string())
            .or_default()
            .push(SpeechSegment::with_speaker("", onset, duration, fields[7]));
    }
    let mut out = BTreeMap::new();
    for (rec_id, segments) in by_recording {
        let total = segments.iter().map(SpeechSegment::end).fold(0.0, f64::max);
        let mut timeline = validate_timeline(rec_id.clone(), segments, total)?;
        assign_segment_ids(&mut timeline);
        out.insert(rec_id, timeline);
    }
    Ok(out)
}

/// Canonical segment ids: `{recording_id}_{index:05}` in sorted order.
pub fn assign_segment_ids(t: &mut Timeline) {
    for (i, seg) in t.segments.iter_mut().enumerate() {
        seg.segment_id = format!("{}_{:05}", t.recording_id, i);
    }
}

/// Serializes timelines as RTTM with three-decimal onsets/durations.
pub fn write_rttm<'a>(timelines: impl IntoIterator<Item = &'a Timeline>) -> Result<String, IoError> {
    let mut out = String::new();
    for t in timelines {
        for seg in &t.segments {
            let speaker = seg
                .speaker
                .as_deref()
                .ok_or_else(|| IoError::MissingSpeakerLabel {
                    id: seg.segment_id.clone(),
                })?;
            out.push_str(&format!(
                "SPEAKER {} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>\n",
                t.recording_id, seg.onset, seg.duration, speaker
            ));
        }
    }
    Ok(out)
}

/// Parses an embedding table: one record per line, the segment id
/// followed by comma-separated reals. The dimension is inferred from
/// the first record and enforced on the rest.
pub fn load_embeddings(text: &str) -> Result<EmbeddingTable, IoError> {
    let mut entries = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let mut parts = raw_line.split(',');
        let id = parts
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| IoError::MalformedLine {
                line,
                reason: "missing segment id".into(),
            })?
            .to_string();
        let vec: Vec<f64> = parts
            .map(|p| {
                p.trim().parse::<f64>().map_err(|_| IoError::MalformedLine {
                    line,
                    reason: format!("unparseable component {p:?}"),
                })
            })
            .collect::<Result<_, _>>()?;
        if vec.is_empty() {
            return Err(IoError::MalformedLine {
                line,
                reason: "record has no components".into(),
            });
        }
        match dim {
            None => dim = Some(vec.len()),
            Some(d) if d != vec.len() => {
                return Err(IoError::DimensionMismatch {
                    line,
                    expected: d,
                    found: vec.len(),
                })
            }
            _ => {}
        }
        if vec.iter().all(|v| *v == 0.0) {
            return Err(IoError::ZeroVector { line, id });
        }
        if entries.insert(id.clone(), vec).is_some() {
            return Err(IoError::DuplicateSegmentId { line, id });
        }
    }
    Ok(EmbeddingTable {
        dim: dim.unwrap_or(0),
        entries,
    })
}

/// Serializes an embedding table in load_embeddings format. Floats use
/// shortest round-trip formatting, so load(write(t)) == t exactly.
pub fn write_embeddings(table: &EmbeddingTable) -> String {
    let mut out = String::new();
    for (id, vec) in &table.entries {
        out.push_str(id);
        for v in vec {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Dev,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupTag {
    Healthy,
    Depression,
    Psychosis,
}

impl std::fmt::Display for GroupTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GroupTag::Healthy => write!(f, "healthy"),
            GroupTag::Depression => write!(f, "depression"),
            GroupTag::Psychosis => write!(f, "psychosis"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordingEntry {
    pub recording_id: String,
    pub rttm: String,
    pub embeddings: String,
    pub split: Split,
    /// Whether the RTTM carries trusted speaker annotations.
    #[serde(default)]
    pub annotated: bool,
    /// Recording length in seconds when known; RTTM alone cannot
    /// recover trailing silence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_secs: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticipantEntry {
    pub participant_id: String,
    pub recording_ids: Vec<String>,
    /// Severity questionnaire total, 0..=27.
    pub severity_score: u32,
    /// The nine per-item scores, each 0..=3, summing to the total.
    pub item_scores: Vec<u32>,
    pub group: GroupTag,
}

/// The corpus index: recordings with file paths plus optional
/// participant covariates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub recordings: Vec<RecordingEntry>,
    #[serde(default)]
    pub participants: Vec<ParticipantEntry>,
}

/// Parses and validates a manifest JSON document.
pub fn load_manifest(text: &str) -> Result<CorpusManifest, IoError> {
    let manifest: CorpusManifest = serde_json::from_str(text)?;
    for p in &manifest.participants {
        if p.item_scores.len() != 9 || p.item_scores.iter().any(|s| *s > 3) || p.severity_score > 27
        {
            return Err(IoError::MalformedLine {
                line: 0,
                reason: format!(
                    "participant {:?}: expected 9 item scores in 0..=3 and severity in 0..=27",
                    p.participant_id
                ),
            });
        }
        let item_sum: u32 = p.item_scores.iter().sum();
        if item_sum != p.severity_score {
            return Err(IoError::ItemSumMismatch {
                participant: p.participant_id.clone(),
                item_sum,
                severity: p.severity_score,
            });
        }
        for rid in &p.recording_ids {
            if !manifest.recordings.iter().any(|r| &r.recording_id == rid) {
                return Err(IoError::UnknownRecordingRef {
                    participant: p.participant_id.clone(),
                    recording: rid.clone(),
                });
            }
        }
    }
    Ok(manifest)
}

pub fn write_manifest(manifest: &CorpusManifest) -> String {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_single_speaker_line() {
        let map = parse_rttm("SPEAKER rec1 1 5.00 2.50 <NA> <NA> spk1 <NA> <NA>").unwrap();
        let t = &map["rec1"];
        assert_eq!(t.segments.len(), 1);
        assert_eq!(t.segments[0].onset, 5.0);
        assert_eq!(t.segments[0].duration, 2.5);
        assert_eq!(t.segments[0].speaker.as_deref(), Some("spk1"));
        assert_eq!(t.segments[0].segment_id, "rec1_00000");
    }

    #[test]
    fn empty_input_empty_map() {
        assert!(parse_rttm("").unwrap().is_empty());
    }

    #[test]
    fn non_speaker_lines_ignored() {
        let text = "SPKR-INFO rec1 1 <NA> <NA> <NA> unknown spk1 <NA>\n\
                    SPEAKER rec1 1 0.00 1.00 <NA> <NA> spk1 <NA> <NA>\n";
        let map = parse_rttm(text).unwrap();
        assert_eq!(map["rec1"].segments.len(), 1);
    }

    #[test]
    fn unparseable_onset_reports_line() {
        let err = parse_rttm("SPEAKER rec1 1 abc 2.5 <NA> <NA> spk1 <NA> <NA>").unwrap_err();
        match err {
            IoError::MalformedLine { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn wrong_field_count_rejected() {
        let err = parse_rttm("SPEAKER rec1 1 0.0 2.5 <NA> spk1 <NA> <NA>").unwrap_err();
        assert!(matches!(err, IoError::MalformedLine { line: 1, .. }));
    }

    #[test]
    fn write_requires_speaker_labels() {
        let t = validate_timeline("r", vec![SpeechSegment::new("s0", 0.0, 1.0)], 10.0).unwrap();
        let err = write_rttm([&t]).unwrap_err();
        assert!(matches!(err, IoError::MissingSpeakerLabel { .. }));
    }

    #[test]
    fn rttm_round_trip_is_byte_identical() {
        let text = "SPEAKER rec1 1 0.000 2.500 <NA> <NA> spkA <NA> <NA>\n\
                    SPEAKER rec1 1 3.100 1.250 <NA> <NA> spkB <NA> <NA>\n\
                    SPEAKER rec2 1 0.500 0.301 <NA> <NA> spkC <NA> <NA>\n";
        let parsed = parse_rttm(text).unwrap();
        let written = write_rttm(parsed.values()).unwrap();
        assert_eq!(written, text);
    }

    #[test]
    fn load_embeddings_infers_dim() {
        let table = load_embeddings("s1,1.0,0.0\ns2,0.0,1.0").unwrap();
        assert_eq!(table.dim, 2);
        assert_eq!(table.len(), 2);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let err = load_embeddings("s1,1.0,0.0\ns2,0.0,1.0,2.0").unwrap_err();
        assert!(matches!(
            err,
            IoError::DimensionMismatch {
                line: 2,
                expected: 2,
                found: 3
            }
        ));
    }

    #[test]
    fn zero_vector_rejected() {
        let err = load_embeddings("s1,0,0").unwrap_err();
        assert!(matches!(err, IoError::ZeroVector { line: 1, .. }));
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = load_embeddings("s1,1.0\ns1,2.0").unwrap_err();
        assert!(matches!(err, IoError::DuplicateSegmentId { line: 2, .. }));
    }

    #[test]
    fn embeddings_round_trip_exact() {
        let table = load_embeddings("s1,0.1,-2.25,3e-7\ns2,1,2,3").unwrap();
        let again = load_embeddings(&write_embeddings(&table)).unwrap();
        assert_eq!(table, again);
    }

    fn manifest_json(severity: u32, items: &str, rec_ref: &str) -> String {
        format!(
            r#"{{
              "recordings": [
                {{"recording_id": "rec1", "rttm": "rec1.rttm", "embeddings": "rec1.emb", "split": "dev", "annotated": true}}
              ],
              "participants": [
                {{"participant_id": "p1", "recording_ids": ["{rec_ref}"], "severity_score": {severity}, "item_scores": {items}, "group": "healthy"}}
              ]
            }}"#
        )
    }

    #[test]
    fn manifest_accepts_consistent_participant() {
        let m = load_manifest(&manifest_json(10, "[3,3,3,1,0,0,0,0,0]", "rec1")).unwrap();
        assert_eq!(m.participants.len(), 1);
        assert_eq!(m.recordings[0].split, Split::Dev);
    }

    #[test]
    fn manifest_item_sum_mismatch() {
        let err = load_manifest(&manifest_json(10, "[3,3,3,3,0,0,0,0,0]", "rec1")).unwrap_err();
        assert!(matches!(err, IoError::ItemSumMismatch { item_sum: 12, severity: 10, .. }));
    }

    #[test]
    fn manifest_unknown_recording_ref() {
        let err = load_manifest(&manifest_json(10, "[3,3,3,1,0,0,0,0,0]", "recX")).unwrap_err();
        assert!(matches!(err, IoError::UnknownRecordingRef { .. }));
    }
}
