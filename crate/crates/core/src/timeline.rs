//! Speaker-attributed time intervals, recording timelines, and the
//! fixed non-overlapping windowing used by the interaction analyses.
//!
//! All types are immutable after construction and all operations are
//! pure, so they are safe to share across threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TimelineError {
    #[error("segment {id:?} has non-positive duration {duration}")]
    NonPositiveDuration { id: String, duration: f64 },
    #[error("segment {id:?} ends at {end} which exceeds the recording duration {total}")]
    SegmentExceedsRecording { id: String, end: f64, total: f64 },
}

/// One speaker-attributed speech interval.
///
/// `speaker` is present in annotated data and absent in raw VAD output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechSegment {
    pub segment_id: String,
    pub onset: f64,
    pub duration: f64,
    pub speaker: Option<String>,
}

impl SpeechSegment {
    pub fn new(segment_id: impl Into<String>, onset: f64, duration: f64) -> Self {
        SpeechSegment {
            segment_id: segment_id.into(),
            onset,
            duration,
            speaker: None,
        }
    }

    pub fn with_speaker(
        segment_id: impl Into<String>,
        onset: f64,
        duration: f64,
        speaker: impl Into<String>,
    ) -> Self {
        SpeechSegment {
            segment_id: segment_id.into(),
            onset,
            duration,
            speaker: Some(speaker.into()),
        }
    }

    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }
}

/// Canonical segment order: onset, then duration, then speaker label.
pub(crate) fn segment_order(a: &SpeechSegment, b: &SpeechSegment) -> std::cmp::Ordering {
    a.onset
        .total_cmp(&b.onset)
        .then(a.duration.total_cmp(&b.duration))
        .then_with(|| a.speaker.cmp(&b.speaker))
}

/// An ordered, validated collection of segments for one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub recording_id: String,
    pub segments: Vec<SpeechSegment>,
    pub total_duration: f64,
}

/// Sorts and validates raw segments into a [`Timeline`].
///
/// Segments with non-positive duration or extending past
/// `total_duration` are rejected, never silently dropped.
pub fn validate_timeline(
    recording_id: impl Into<String>,
    raw: Vec<SpeechSegment>,
    total_duration: f64,
) -> Result<Timeline, TimelineError> {
    let mut segments = raw;
    for seg in &segments {
        if seg.duration.is_nan() || seg.duration <= 0.0 {
            return Err(TimelineError::NonPositiveDuration {
                id: seg.segment_id.clone(),
                duration: seg.duration,
            });
        }
        if seg.end() > total_duration + 1e-9 {
            return Err(TimelineError::SegmentExceedsRecording {
                id: seg.segment_id.clone(),
                end: seg.end(),
                total: total_duration,
            });
        }
    }
    segments.sort_by(segment_order);
    Ok(Timeline {
        recording_id: recording_id.into(),
        segments,
        total_duration,
    })
}

/// One fixed-length analysis window holding the sub-timeline clipped to
/// `[start, start + length)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub index: usize,
    pub start: f64,
    pub length: f64,
    pub segments: Vec<SpeechSegment>,
}

/// Default analysis window length in seconds (ten minutes).
pub const DEFAULT_WINDOW_SECS: f64 = 600.0;

/// Splits a timeline into non-overlapping contiguous windows of
/// `window_len` seconds.
///
/// The trailing remainder shorter than a full window is dropped.
/// Segments straddling a boundary are clipped into both windows, so
/// per-window speech mass is conserved.
pub fn segment_windows(t: &Timeline, window_len: f64) -> Vec<Window> {
    assert!(window_len > 0.0, "window length must be positive");
    let n_windows = (t.total_duration / window_len).floor() as usize;
    let mut windows: Vec<Window> = (0..n_windows)
        .map(|i| Window {
            index: i,
            start: i as f64 * window_len,
            length: window_len,
            segments: Vec::new(),
        })
        .collect();
    for seg in &t.segments {
        if n_windows == 0 {
            break;
        }
        let covered_end = n_windows as f64 * window_len;
        let first = ((seg.onset / window_len).floor() as usize).min(n_windows);
        // Exclusive end: a segment ending exactly on a boundary does not
        // enter the next window.
        let last = (((seg.end() / window_len).ceil() as usize).max(first + 1)).min(n_windows);
        for window in windows.iter_mut().take(last).skip(first) {
            let clip_start = seg.onset.max(window.start);
            let clip_end = seg.end().min(window.start + window.length).min(covered_end);
            // Sub-nanosecond clips are boundary float noise, not speech.
            if clip_end - clip_start > 1e-9 {
                window.segments.push(SpeechSegment {
                    segment_id: seg.segment_id.clone(),
                    onset: clip_start,
                    duration: clip_end - clip_start,
                    speaker: seg.speaker.clone(),
                });
            }
        }
    }
    for w in &mut windows {
        w.segments.sort_by(segment_order);
    }
    windows
}

/// Fraction of the window covered by speech, counting overlapping
/// speech once via interval union.
pub fn speech_percentage(w: &Window) -> f64 {
    union_length(w.segments.iter().map(|s| (s.onset, s.end()))) / w.length
}

/// Total length of the union of a set of intervals.
pub fn union_length(intervals: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut spans: Vec<(f64, f64)> = intervals.filter(|(a, b)| b > a).collect();
    spans.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in spans {
        match cur {
            None => cur = Some((a, b)),
            Some((ca, cb)) => {
                if a <= cb {
                    cur = Some((ca, cb.max(b)));
                } else {
                    total += cb - ca;
                    cur = Some((a, b));
                }
            }
        }
    }
    if let Some((ca, cb)) = cur {
        total += cb - ca;
    }
    total
}
