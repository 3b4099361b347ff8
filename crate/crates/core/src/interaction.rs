//! Per-participant interaction analytics: dyadic ratio over windows,
//! cross-window target-speaker identification, and pause/response
//! timing features.
//!
//! Event definitions. Segments scan in onset order; a *response event*
//! is a target segment immediately following another speaker's segment
//! and starting at or after its end (value = onset minus that end); a
//! *pause event* is a target segment immediately following another
//! target segment with no intervening onset (gap clamped at zero).
//! Overlapping follow-ons are excluded from response events but
//! counted, so the exclusion is auditable.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::clustering::cosine_distance;
use crate::detect::DyadicVerdict;
use crate::io::{GroupTag, ParticipantEntry};
use crate::timeline::Window;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("participant has no analysis windows")]
    EmptyWindowList,
    #[error("target identification needs at least 2 dyadic windows, found {0}")]
    TooFewWindows(usize),
    #[error("window {window} has no segments attributed to target {target:?}")]
    TargetAbsent { window: usize, target: String },
}

/// One analyzed window: the dyadic verdict plus the per-detected-
/// speaker summaries the downstream feature extraction needs. Dyadic
/// windows carry exactly two speakers; their window segments are
/// relabeled with the detected speaker ids.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowVerdict {
    pub window: Window,
    pub verdict: DyadicVerdict,
    pub speech_pct: f64,
    /// L2-normalized mean embedding per detected speaker.
    pub speaker_embeddings: BTreeMap<String, Vec<f64>>,
    /// Speech seconds per detected speaker.
    pub speaker_speech_times: BTreeMap<String, f64>,
}

/// Conversational timing summary. The means are present only when the
/// corresponding event count is positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingFeatures {
    pub pause_time: Option<f64>,
    pub response_time: Option<f64>,
    pub n_pause_events: usize,
    pub n_response_events: usize,
    /// Overlapping follow-ons excluded from response events.
    pub n_overlap_events: usize,
}

/// Per-participant summary row.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantProfile {
    pub participant_id: String,
    pub n_windows: usize,
    pub n_dyadic: usize,
    pub dyadic_ratio: f64,
    /// Absent when fewer than two dyadic windows exist.
    pub timing: Option<TimingFeatures>,
    pub severity_score: u32,
    pub item_scores: Vec<u32>,
    pub group: GroupTag,
}

/// Fraction of windows judged dyadic.
pub fn dyadic_ratio(verdicts: &[WindowVerdict]) -> Result<f64, MetricsError> {
    if verdicts.is_empty() {
        return Err(MetricsError::EmptyWindowList);
    }
    let dyadic = verdicts.iter().filter(|v| v.verdict.is_dyadic).count();
    Ok(dyadic as f64 / verdicts.len() as f64)
}

/// Default number of speech-rich windows feeding the timing features.
pub const DEFAULT_TOP_K: usize = 10;

/// The dyadic windows with the highest speech percentages, ties toward
/// the earlier window. May return fewer than `k`.
pub fn select_top_windows(verdicts: &[WindowVerdict], k: usize) -> Vec<&WindowVerdict> {
    let mut dyadic: Vec<&WindowVerdict> =
        verdicts.iter().filter(|v| v.verdict.is_dyadic).collect();
    dyadic.sort_by(|a, b| {
        b.speech_pct
            .total_cmp(&a.speech_pct)
            .then(a.window.index.cmp(&b.window.index))
    });
    dyadic.truncate(k);
    dyadic
}

/// The cross-window target chain: per window, the speaker inferred to
/// be the recurring participant, plus the mean cosine distance among
/// the chosen embeddings (low = confident).
#[derive(Debug, Clone, PartialEq)]
pub struct TargetAssignment {
    pub per_window: BTreeMap<usize, String>,
    pub mean_intra_distance: f64,
}

/// Picks, for each dyadic window, the speaker whose embedding is
/// closest (summed minimum cosine distance) to the speaker pairs of
/// every other window. The recurring participant forms a low-distance
/// chain; ties resolve toward the speaker with more speech time, then
/// the lexicographically smaller id.
pub fn identify_target_speaker(
    windows: &[&WindowVerdict],
) -> Result<TargetAssignment, MetricsError> {
    let dyadic: Vec<&&WindowVerdict> =
        windows.iter().filter(|w| w.verdict.is_dyadic).collect();
    if dyadic.len() < 2 {
        return Err(MetricsError::TooFewWindows(dyadic.len()));
    }
    for w in &dyadic {
        assert_eq!(
            w.speaker_embeddings.len(),
            2,
            "dyadic window must carry exactly two speaker embeddings"
        );
    }
    let embeddings: Vec<Vec<(&String, &Vec<f64>)>> = dyadic
        .iter()
        .map(|w| w.speaker_embeddings.iter().collect())
        .collect();

    let mut per_window = BTreeMap::new();
    let mut chosen: Vec<&Vec<f64>> = Vec::with_capacity(dyadic.len());
    for (wi, w) in dyadic.iter().enumerate() {
        let mut best: Option<(f64, f64, &String, &Vec<f64>)> = None;
        for (speaker, embedding) in &embeddings[wi] {
            let mut cost = 0.0;
            for (wj, others) in embeddings.iter().enumerate() {
                if wj == wi {
                    continue;
                }
                let d = others
                    .iter()
                    .map(|(_, e)| cosine_distance(embedding, e).expect("embedding dims align"))
                    .fold(f64::INFINITY, f64::min);
                cost += d;
            }
            let speech = w.speaker_speech_times.get(*speaker).copied().unwrap_or(0.0);
            let better = match &best {
                None => true,
                Some((bc, bs, bid, _)) => {
                    cost < *bc
                        || (cost == *bc && speech > *bs)
                        || (cost == *bc && speech == *bs && *speaker < *bid)
                }
            };
            if better {
                best = Some((cost, speech, speaker, embedding));
            }
        }
        let (_, _, speaker, embedding) = best.expect("dyadic window has two candidates");
        per_window.insert(w.window.index, speaker.clone());
        chosen.push(embedding);
    }

    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..chosen.len() {
        for j in (i + 1)..chosen.len() {
            sum += cosine_distance(chosen[i], chosen[j]).expect("embedding dims align");
            pairs += 1;
        }
    }
    Ok(TargetAssignment {
        per_window,
        mean_intra_distance: if pairs > 0 { sum / pairs as f64 } else { 0.0 },
    })
}

/// Pause and response timing for one window and a chosen target
/// speaker. Segments must carry the speaker attribution produced by
/// the detection stage.
pub fn timing_features(window: &Window, target: &str) -> Result<TimingFeatures, MetricsError> {
    let has_target = window
        .segments
        .iter()
        .any(|s| s.speaker.as_deref() == Some(target));
    if !has_target {
        return Err(MetricsError::TargetAbsent {
            window: window.index,
            target: target.to_string(),
        });
    }
    let mut pauses = Vec::new();
    let mut responses = Vec::new();
    let mut n_overlap = 0usize;
    for pair in window.segments.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        if cur.speaker.as_deref() != Some(target) {
            continue;
        }
        if prev.speaker.as_deref() == Some(target) {
            pauses.push((cur.onset - prev.end()).max(0.0));
        } else if cur.onset >= prev.end() {
            responses.push(cur.onset - prev.end());
        } else {
            n_overlap += 1;
        }
    }
    let mean = |v: &Vec<f64>| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    Ok(TimingFeatures {
        pause_time: mean(&pauses),
        response_time: mean(&responses),
        n_pause_events: pauses.len(),
        n_response_events: responses.len(),
        n_overlap_events: n_overlap,
    })
}

/// Unweighted mean of per-window timing features; each mean averages
/// only the windows where it is defined.
pub fn average_timing(per_window: &[TimingFeatures]) -> TimingFeatures {
    let collect = |f: fn(&TimingFeatures) -> Option<f64>| {
        let values: Vec<f64> = per_window.iter().filter_map(f).collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    TimingFeatures {
        pause_time: collect(|t| t.pause_time),
        response_time: collect(|t| t.response_time),
        n_pause_events: per_window.iter().map(|t| t.n_pause_events).sum(),
        n_response_events: per_window.iter().map(|t| t.n_response_events).sum(),
        n_overlap_events: per_window.iter().map(|t| t.n_overlap_events).sum(),
    }
}

/// Builds a participant's profile from their window verdicts: dyadic
/// ratio over all windows, timing averaged over the top-`k`
/// speech-rich dyadic windows with the identified target.
pub fn participant_profile(
    entry: &ParticipantEntry,
    verdicts: &[WindowVerdict],
    k: usize,
) -> Result<ParticipantProfile, MetricsError> {
    let ratio = dyadic_ratio(verdicts)?;
    let dyadic: Vec<&WindowVerdict> =
        verdicts.iter().filter(|v| v.verdict.is_dyadic).collect();
    let timing = if dyadic.len() < 2 {
        None
    } else {
        let targets = identify_target_speaker(&dyadic)?;
        let mut per_window = Vec::new();
        for w in select_top_windows(verdicts, k) {
            let target = &targets.per_window[&w.window.index];
            per_window.push(timing_features(&w.window, target)?);
        }
        Some(average_timing(&per_window))
    };
    Ok(ParticipantProfile {
        participant_id: entry.participant_id.clone(),
        n_windows: verdicts.len(),
        n_dyadic: dyadic.len(),
        dyadic_ratio: ratio,
        timing,
        severity_score: entry.severity_score,
        item_scores: entry.item_scores.clone(),
        group: entry.group,
    })
}
