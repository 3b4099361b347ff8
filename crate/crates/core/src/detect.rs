//! Dyadic verdicts from speaker counts, the ground-truth labeling rule
//! for annotated recordings, and detection metrics.

use thiserror::Error;

use crate::clustering::{cluster_segments, ClusterError};
use crate::io::EmbeddingTable;
use crate::spurious::{SpuriousError, SpuriousMode};
use crate::timeline::Timeline;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Spurious(#[from] SpuriousError),
    #[error("segment {0:?} carries no speaker label")]
    UnlabeledSegments(String),
    #[error("verdict and label lists have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("{0} is undefined: no examples of the required class")]
    DegenerateClassForMetric(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    /// Clustering of speaker embeddings with optional spurious-cluster
    /// screening.
    Embedding,
    /// The VAD-statistics random-forest baseline.
    Baseline,
}

/// A single dyadic/non-dyadic decision. For the embedding detector the
/// verdict is exactly `n_speakers == 2`; the baseline votes directly
/// and carries no count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadicVerdict {
    pub is_dyadic: bool,
    pub n_speakers_detected: Option<usize>,
    pub source: DetectorKind,
}

/// Runs the embedding pipeline on one recording: cluster, screen,
/// count, binarize.
pub fn detect_dyadic(
    table: &EmbeddingTable,
    timeline: &Timeline,
    threshold: f64,
    mode: &SpuriousMode,
) -> Result<DyadicVerdict, DetectError> {
    let clusters = cluster_segments(table, threshold)?;
    let clusters = crate::spurious::apply(clusters, table, timeline, mode)?;
    Ok(DyadicVerdict {
        is_dyadic: clusters.n_clusters == 2,
        n_speakers_detected: Some(clusters.n_clusters),
        source: DetectorKind::Embedding,
    })
}

/// Minimum recording length for ground-truth labeling: strictly longer
/// than five minutes.
pub const MIN_LABEL_DURATION_SECS: f64 = 300.0;

/// Speech-time share the top two speakers must exceed for a recording
/// to count as dyadic.
pub const DYADIC_SHARE_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundTruth {
    Dyadic,
    NonDyadic,
    /// Too short to label.
    Excluded,
}

/// Labels an annotated recording: dyadic iff it has at least two
/// speakers and the two largest per-speaker speech-time totals cover
/// strictly more than `share_threshold` of all speech time.
/// Recordings not strictly longer than `min_duration` are excluded.
pub fn ground_truth_label(
    timeline: &Timeline,
    min_duration: f64,
    share_threshold: f64,
) -> Result<GroundTruth, DetectError> {
    if timeline.total_duration <= min_duration {
        return Ok(GroundTruth::Excluded);
    }
    let mut per_speaker: std::collections::BTreeMap<&str, f64> = Default::default();
    for seg in &timeline.segments {
        let speaker = seg
            .speaker
            .as_deref()
            .ok_or_else(|| DetectError::UnlabeledSegments(seg.segment_id.clone()))?;
        *per_speaker.entry(speaker).or_insert(0.0) += seg.duration;
    }
    if per_speaker.len() < 2 {
        return Ok(GroundTruth::NonDyadic);
    }
    let mut totals: Vec<f64> = per_speaker.values().copied().collect();
    totals.sort_by(|a, b| b.total_cmp(a));
    let all: f64 = totals.iter().sum();
    let top2 = totals[0] + totals[1];
    if all > 0.0 && top2 / all > share_threshold {
        Ok(GroundTruth::Dyadic)
    } else {
        Ok(GroundTruth::NonDyadic)
    }
}

/// Confusion counts with dyadic as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionMetrics {
    pub accuracy: f64,
    pub specificity: f64,
    pub sensitivity: f64,
    pub confusion: Confusion,
}

/// Accuracy, sensitivity (dyadic recall), and specificity over paired
/// verdicts and labels.
pub fn evaluate(verdicts: &[DyadicVerdict], labels: &[bool]) -> Result<DetectionMetrics, DetectError> {
    if verdicts.len() != labels.len() {
        return Err(DetectError::LengthMismatch(verdicts.len(), labels.len()));
    }
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (v, &label) in verdicts.iter().zip(labels) {
        match (v.is_dyadic, label) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let total = c.tp + c.fp + c.tn + c.fn_;
    if c.tp + c.fn_ == 0 {
        return Err(DetectError::DegenerateClassForMetric("sensitivity"));
    }
    if c.tn + c.fp == 0 {
        return Err(DetectError::DegenerateClassForMetric("specificity"));
    }
    Ok(DetectionMetrics {
        accuracy: (c.tp + c.tn) as f64 / total as f64,
        sensitivity: c.tp as f64 / (c.tp + c.fn_) as f64,
        specificity: c.tn as f64 / (c.tn + c.fp) as f64,
        confusion: c,
    })
}
