//! End-to-end composition: corpus loading, per-window detection,
//! participant profiling, threshold tuning, detector evaluation, and
//! the statistics report. The CLI subcommands are thin wrappers over
//! these functions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::baseline::{
    compute_vad_features, predict_baseline, train_baseline, BaselineError, BaselineModel,
};
use crate::clustering::{cluster_segments, DevRecording, ThresholdTuneReport};
use crate::detect::{
    evaluate, ground_truth_label, DetectError, DetectionMetrics, DetectorKind, DyadicVerdict,
    GroundTruth, DYADIC_SHARE_THRESHOLD, MIN_LABEL_DURATION_SECS,
};
use crate::interaction::{participant_profile, MetricsError, ParticipantProfile, WindowVerdict};
use crate::io::{
    load_embeddings, load_manifest, CorpusManifest, EmbeddingTable, IoError, RecordingEntry, Split,
};
use crate::spurious::{SpuriousError, SpuriousMode};
use crate::stats::{pearson, split_correlation, t_test_welch, StatsError};
use crate::timeline::{segment_windows, speech_percentage, Timeline};

#[derive(Debug, Error)]
pub enum PipelineError {
    // The cause is part of the message, not a chained source, so
    // anyhow-style chain printing does not repeat it.
    #[error("{path}: {cause}")]
    Io {
        path: PathBuf,
        cause: std::io::Error,
    },
    #[error("{path}: {cause}")]
    Format { path: PathBuf, cause: IoError },
    #[error("manifest references recording {0:?} but its RTTM defines no such recording")]
    MissingRecording(String),
    #[error("segment {0:?} has no embedding")]
    MissingEmbedding(String),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Spurious(#[from] SpuriousError),
    #[error(transparent)]
    Cluster(#[from] crate::clustering::ClusterError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("no recordings in the requested split")]
    EmptySplit,
}

/// One recording loaded from disk.
#[derive(Debug, Clone)]
pub struct LoadedRecording {
    pub entry: RecordingEntry,
    pub timeline: Timeline,
    pub table: EmbeddingTable,
}

fn read(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|cause| PipelineError::Io {
        path: path.to_path_buf(),
        cause,
    })
}

/// Loads a manifest and every recording it references; relative paths
/// resolve against the manifest's directory. The manifest's
/// `duration_secs`, when present, overrides the RTTM-derived duration
/// (RTTM cannot represent trailing silence).
pub fn load_corpus(
    manifest_path: &Path,
) -> Result<(CorpusManifest, Vec<LoadedRecording>), PipelineError> {
    let manifest_text = read(manifest_path)?;
    let manifest = load_manifest(&manifest_text).map_err(|cause| PipelineError::Format {
        path: manifest_path.to_path_buf(),
        cause,
    })?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut recordings = Vec::with_capacity(manifest.recordings.len());
    for entry in &manifest.recordings {
        let rttm_path = base.join(&entry.rttm);
        let timelines =
            crate::io::parse_rttm(&read(&rttm_path)?).map_err(|cause| PipelineError::Format {
                path: rttm_path.clone(),
                cause,
            })?;
        let mut timeline = timelines
            .get(&entry.recording_id)
            .cloned()
            .ok_or_else(|| PipelineError::MissingRecording(entry.recording_id.clone()))?;
        if let Some(duration) = entry.duration_secs {
            timeline.total_duration = duration.max(timeline.total_duration);
        }
        let emb_path = base.join(&entry.embeddings);
        let table =
            load_embeddings(&read(&emb_path)?).map_err(|cause| PipelineError::Format {
                path: emb_path.clone(),
                cause,
            })?;
        recordings.push(LoadedRecording {
            entry: entry.clone(),
            timeline,
            table,
        });
    }
    Ok((manifest, recordings))
}

/// Knobs shared by the analysis subcommands.
#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub threshold: f64,
    pub spurious: SpuriousMode,
    pub window_secs: f64,
    pub top_k: usize,
}

/// Runs detection on every window of one recording. Window segments
/// are relabeled with the detected speaker ids (`s0`, `s1`, ...), the
/// attribution downstream timing features consume.
pub fn analyze_windows(
    recording: &LoadedRecording,
    threshold: f64,
    mode: &SpuriousMode,
    window_secs: f64,
) -> Result<Vec<WindowVerdict>, PipelineError> {
    let windows = segment_windows(&recording.timeline, window_secs);
    let mut verdicts = Vec::with_capacity(windows.len());
    for mut window in windows {
        let speech_pct = speech_percentage(&window);
        if window.segments.is_empty() {
            verdicts.push(WindowVerdict {
                window,
                verdict: DyadicVerdict {
                    is_dyadic: false,
                    n_speakers_detected: Some(0),
                    source: DetectorKind::Embedding,
                },
                speech_pct,
                speaker_embeddings: BTreeMap::new(),
                speaker_speech_times: BTreeMap::new(),
            });
            continue;
        }
        let entries: Result<Vec<(String, Vec<f64>)>, PipelineError> = window
            .segments
            .iter()
            .map(|seg| {
                recording
                    .table
                    .entries
                    .get(&seg.segment_id)
                    .map(|v| (seg.segment_id.clone(), v.clone()))
                    .ok_or_else(|| PipelineError::MissingEmbedding(seg.segment_id.clone()))
            })
            .collect();
        let sub_table = EmbeddingTable::from_entries(entries?).expect("subset of a valid table");

        // Build a window-local timeline so cluster features see the
        // clipped durations.
        let window_timeline = Timeline {
            recording_id: recording.timeline.recording_id.clone(),
            segments: window.segments.clone(),
            total_duration: window.start + window.length,
        };
        let clusters = cluster_segments(&sub_table, threshold)?;
        let clusters = crate::spurious::apply(clusters, &sub_table, &window_timeline, mode)?;

        let mut speech_times: BTreeMap<String, f64> = BTreeMap::new();
        for seg in &mut window.segments {
            let cluster = clusters.assignment[&seg.segment_id];
            let label = format!("s{cluster}");
            *speech_times.entry(label.clone()).or_insert(0.0) += seg.duration;
            seg.speaker = Some(label);
        }
        let speaker_embeddings: BTreeMap<String, Vec<f64>> = clusters
            .centroids
            .iter()
            .enumerate()
            .map(|(c, centroid)| (format!("s{c}"), centroid.clone()))
            .collect();
        verdicts.push(WindowVerdict {
            window,
            verdict: DyadicVerdict {
                is_dyadic: clusters.n_clusters == 2,
                n_speakers_detected: Some(clusters.n_clusters),
                source: DetectorKind::Embedding,
            },
            speech_pct,
            speaker_embeddings,
            speaker_speech_times: speech_times,
        });
    }
    Ok(verdicts)
}

/// Builds participant profiles: windows pooled across each
/// participant's recordings (re-indexed sequentially), detection per
/// window, then ratio and timing features. Participants run in
/// parallel; results keep manifest order.
pub fn analyze_participants(
    manifest: &CorpusManifest,
    recordings: &[LoadedRecording],
    options: &AnalysisOptions,
) -> Result<Vec<ParticipantProfile>, PipelineError> {
    let by_id: BTreeMap<&str, &LoadedRecording> = recordings
        .iter()
        .map(|r| (r.entry.recording_id.as_str(), r))
        .collect();
    manifest
        .participants
        .par_iter()
        .map(|entry| {
            let mut verdicts = Vec::new();
            for rid in &entry.recording_ids {
                let recording = by_id
                    .get(rid.as_str())
                    .ok_or_else(|| PipelineError::MissingRecording(rid.clone()))?;
                let mut batch = analyze_windows(
                    recording,
                    options.threshold,
                    &options.spurious,
                    options.window_secs,
                )?;
                let offset = verdicts.len();
                for v in &mut batch {
                    v.window.index += offset;
                }
                verdicts.append(&mut batch);
            }
            Ok(participant_profile(entry, &verdicts, options.top_k)?)
        })
        .collect()
}

/// Ground-truth labels for the annotated recordings of one split;
/// recordings the labeling rule excludes (too short) are skipped.
pub fn labeled_split(
    recordings: &[LoadedRecording],
    split: Split,
) -> Result<Vec<(usize, bool)>, PipelineError> {
    let mut labeled = Vec::new();
    for (i, rec) in recordings.iter().enumerate() {
        if rec.entry.split != split || !rec.entry.annotated {
            continue;
        }
        match ground_truth_label(&rec.timeline, MIN_LABEL_DURATION_SECS, DYADIC_SHARE_THRESHOLD)? {
            GroundTruth::Dyadic => labeled.push((i, true)),
            GroundTruth::NonDyadic => labeled.push((i, false)),
            GroundTruth::Excluded => {}
        }
    }
    Ok(labeled)
}

/// Tunes the clustering threshold on the dev split.
pub fn run_tune(
    recordings: &[LoadedRecording],
    grid: &[f64],
    mode: &SpuriousMode,
) -> Result<ThresholdTuneReport, PipelineError> {
    let labeled = labeled_split(recordings, Split::Dev)?;
    if labeled.is_empty() {
        return Err(PipelineError::EmptySplit);
    }
    let dev: Vec<DevRecording> = labeled
        .iter()
        .map(|&(i, dyadic)| DevRecording {
            table: recordings[i].table.clone(),
            timeline: recordings[i].timeline.clone(),
            dyadic,
        })
        .collect();
    Ok(crate::clustering::tune_threshold(&dev, grid, mode)?)
}

/// One row of the evaluation table.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub detector: String,
    pub split: Split,
    pub n: usize,
    pub metrics: DetectionMetrics,
}

/// Evaluates the embedding detector (with and/or without spurious
/// screening) on both splits, plus optionally the VAD baseline
/// (trained on dev, evaluated on eval). Row order mirrors the
/// with/without/baseline table layout.
pub fn run_eval(
    recordings: &[LoadedRecording],
    threshold: f64,
    screened: Option<&SpuriousMode>,
    unscreened: bool,
    baseline_seed: Option<u64>,
) -> Result<Vec<EvalRow>, PipelineError> {
    let mut rows = Vec::new();
    let mut sections: Vec<(String, SpuriousMode)> = Vec::new();
    if let Some(mode) = screened {
        sections.push(("with spurious detection".to_string(), mode.clone()));
    }
    if unscreened {
        sections.push(("without spurious detection".to_string(), SpuriousMode::Off));
    }
    for (name, mode) in &sections {
        for split in [Split::Dev, Split::Eval] {
            let labeled = labeled_split(recordings, split)?;
            if labeled.is_empty() {
                continue;
            }
            let verdicts: Result<Vec<DyadicVerdict>, PipelineError> = labeled
                .par_iter()
                .map(|&(i, _)| {
                    crate::detect::detect_dyadic(
                        &recordings[i].table,
                        &recordings[i].timeline,
                        threshold,
                        mode,
                    )
                    .map_err(PipelineError::from)
                })
                .collect();
            let labels: Vec<bool> = labeled.iter().map(|&(_, l)| l).collect();
            rows.push(EvalRow {
                detector: name.clone(),
                split,
                n: labels.len(),
                metrics: evaluate(&verdicts?, &labels)?,
            });
        }
    }
    if let Some(seed) = baseline_seed {
        let model = train_baseline_on_dev(recordings, seed)?;
        let labeled = labeled_split(recordings, Split::Eval)?;
        if !labeled.is_empty() {
            let mut verdicts = Vec::new();
            let mut labels = Vec::new();
            for &(i, label) in &labeled {
                let features = compute_vad_features(&recordings[i].timeline)?;
                verdicts.push(predict_baseline(&model, &features)?.0);
                labels.push(label);
            }
            rows.push(EvalRow {
                detector: "vad baseline".to_string(),
                split: Split::Eval,
                n: labels.len(),
                metrics: evaluate(&verdicts, &labels)?,
            });
        }
    }
    Ok(rows)
}

/// Trains the VAD baseline on the dev split's ground-truth labels.
pub fn train_baseline_on_dev(
    recordings: &[LoadedRecording],
    seed: u64,
) -> Result<BaselineModel, PipelineError> {
    let labeled = labeled_split(recordings, Split::Dev)?;
    if labeled.is_empty() {
        return Err(PipelineError::EmptySplit);
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for &(i, label) in &labeled {
        features.push(compute_vad_features(&recordings[i].timeline)?);
        labels.push(label);
    }
    Ok(train_baseline(&features, &labels, seed)?)
}

/// One line of the statistics report: (analysis name, n, statistic,
/// p value), with a note replacing the numbers when the analysis is
/// undefined on this cohort.
#[derive(Debug, Clone)]
pub struct AnalysisRow {
    pub analysis: String,
    pub n: usize,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub note: Option<String>,
}

impl AnalysisRow {
    fn from_corr(name: &str, result: Result<crate::stats::CorrelationResult, StatsError>) -> Self {
        match result {
            Ok(c) => AnalysisRow {
                analysis: name.to_string(),
                n: c.n,
                statistic: Some(c.r),
                p_value: Some(c.p_two_sided),
                note: None,
            },
            Err(e) => AnalysisRow {
                analysis: name.to_string(),
                n: 0,
                statistic: None,
                p_value: None,
                note: Some(e.to_string()),
            },
        }
    }
}

/// The full statistics layer over participant profiles: split
/// correlations of dyadic ratio against severity, timing correlations,
/// per-item group differences, and group summaries.
pub fn statistics_report(profiles: &[ParticipantProfile], cut: u32) -> Vec<AnalysisRow> {
    let mut rows = Vec::new();

    let (below, above) = split_correlation(profiles, cut);
    rows.push(AnalysisRow::from_corr(
        &format!("dyadic_ratio_vs_severity_below_{cut}"),
        below,
    ));
    rows.push(AnalysisRow::from_corr(
        &format!("dyadic_ratio_vs_severity_from_{cut}"),
        above,
    ));

    let timing_pairs: Vec<(f64, Option<f64>, Option<f64>)> = profiles
        .iter()
        .filter_map(|p| {
            p.timing
                .map(|t| (p.severity_score as f64, t.response_time, t.pause_time))
        })
        .collect();
    let response: Vec<(f64, f64)> = timing_pairs
        .iter()
        .filter_map(|(s, r, _)| r.map(|r| (*s, r)))
        .collect();
    let pause: Vec<(f64, f64)> = timing_pairs
        .iter()
        .filter_map(|(s, _, p)| p.map(|p| (*s, p)))
        .collect();
    for (name, pairs) in [
        ("response_time_vs_severity", response),
        ("pause_time_vs_severity", pause),
    ] {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        rows.push(AnalysisRow::from_corr(name, pearson(&x, &y)));
    }

    // Per-item group difference in response time: item score 0 vs > 0.
    for item in 0..9 {
        let name = format!("response_time_item{}_zero_vs_nonzero", item + 1);
        let mut zero = Vec::new();
        let mut nonzero = Vec::new();
        for p in profiles {
            let response = p.timing.and_then(|t| t.response_time);
            if let Some(r) = response {
                if p.item_scores.get(item).copied().unwrap_or(0) == 0 {
                    zero.push(r);
                } else {
                    nonzero.push(r);
                }
            }
        }
        let n = zero.len() + nonzero.len();
        match t_test_welch(&nonzero, &zero) {
            Ok(t) => rows.push(AnalysisRow {
                analysis: name,
                n,
                statistic: Some(t.t),
                p_value: Some(t.p_two_sided),
                note: None,
            }),
            Err(e) => rows.push(AnalysisRow {
                analysis: name,
                n,
                statistic: None,
                p_value: None,
                note: Some(e.to_string()),
            }),
        }
    }

    // Group summaries: severity and response time, mean then std.
    for group in [
        crate::io::GroupTag::Healthy,
        crate::io::GroupTag::Depression,
        crate::io::GroupTag::Psychosis,
    ] {
        let severities: Vec<f64> = profiles
            .iter()
            .filter(|p| p.group == group)
            .map(|p| p.severity_score as f64)
            .collect();
        let responses: Vec<f64> = profiles
            .iter()
            .filter(|p| p.group == group)
            .filter_map(|p| p.timing.and_then(|t| t.response_time))
            .collect();
        for (kind, values) in [("severity", severities), ("response_time", responses)] {
            match crate::stats::group_summary(&values) {
                Ok((mean, std)) => {
                    rows.push(AnalysisRow {
                        analysis: format!("group_{group}_{kind}_mean"),
                        n: values.len(),
                        statistic: Some(mean),
                        p_value: None,
                        note: None,
                    });
                    rows.push(AnalysisRow {
                        analysis: format!("group_{group}_{kind}_std"),
                        n: values.len(),
                        statistic: Some(std),
                        p_value: None,
                        note: None,
                    });
                }
                Err(e) => rows.push(AnalysisRow {
                    analysis: format!("group_{group}_{kind}_mean"),
                    n: values.len(),
                    statistic: None,
                    p_value: None,
                    note: Some(e.to_string()),
                }),
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_cohort, write_corpus, CohortSpec};

    #[test]
    fn cohort_pipeline_end_to_end_in_memory() {
        let spec = CohortSpec {
            n_participants: 6,
            windows_per_participant: 4,
            seed: 31,
            ..CohortSpec::default()
        };
        let corpus = gen_cohort(&spec).unwrap();
        let dir = std::env::temp_dir().join(format!("dyadic-pipe-test-{}", std::process::id()));
        write_corpus(&dir, &corpus).unwrap();

        let (manifest, recordings) = load_corpus(&dir.join("manifest.json")).unwrap();
        assert_eq!(recordings.len(), 6);
        // Manifest duration wins over the RTTM-derived one.
        for rec in &recordings {
            assert_eq!(rec.timeline.total_duration, 4.0 * 600.0);
        }
        let options = AnalysisOptions {
            threshold: 0.35,
            spurious: SpuriousMode::default(),
            window_secs: 600.0,
            top_k: 10,
        };
        let profiles = analyze_participants(&manifest, &recordings, &options).unwrap();
        assert_eq!(profiles.len(), 6);
        for p in &profiles {
            assert_eq!(p.n_windows, 4);
            assert!((0.0..=1.0).contains(&p.dyadic_ratio));
        }
        // At least the high-ratio participants should carry timing.
        assert!(profiles.iter().any(|p| p.timing.is_some()));
        let rows = statistics_report(&profiles, 10);
        assert!(rows.iter().any(|r| r.analysis.starts_with("dyadic_ratio")));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn window_detection_recovers_speaker_count() {
        let spec = CohortSpec {
            n_participants: 2,
            windows_per_participant: 4,
            spurious_rate: 0.0,
            seed: 77,
            ..CohortSpec::default()
        };
        let corpus = gen_cohort(&spec).unwrap();
        let (timeline, table) = &corpus.recordings[0];
        let loaded = LoadedRecording {
            entry: corpus.manifest.recordings[0].clone(),
            timeline: timeline.clone(),
            table: table.clone(),
        };
        let verdicts = analyze_windows(&loaded, 0.35, &SpuriousMode::Off, 600.0).unwrap();
        assert_eq!(verdicts.len(), 4);
        // Count truth per window from annotations.
        for v in &verdicts {
            let truth: std::collections::BTreeSet<&str> = timeline
                .segments
                .iter()
                .filter(|s| s.onset >= v.window.start && s.onset < v.window.start + 600.0)
                .filter_map(|s| s.speaker.as_deref())
                .collect();
            assert_eq!(
                v.verdict.n_speakers_detected,
                Some(truth.len()),
                "window {}",
                v.window.index
            );
        }
    }
}
