//! Deterministic synthetic corpora: turn-taking conversation timelines
//! with ground-truth speakers, speaker embeddings with controllable
//! separation and noise, and cohort-level covariates tied to severity
//! by configurable models.
//!
//! Everything is a pure function of its spec; per-recording and
//! per-participant work draws from derived seeds so corpora are
//! reproducible byte-for-byte.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::io::{
    write_embeddings, write_manifest, write_rttm, CorpusManifest, EmbeddingTable, GroupTag,
    ParticipantEntry, RecordingEntry, Split,
};
use crate::rng::Pcg32;
use crate::timeline::{validate_timeline, SpeechSegment, Timeline};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("could not place {wanted} centroids at pairwise cosine distance >= {min_distance} in dimension {dim}")]
    CentroidPlacementFailure {
        wanted: usize,
        dim: usize,
        min_distance: f64,
    },
    #[error("corpus write failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Mixes an entity index into a base seed (splitmix64 finalizer), so
/// recordings, participants, and windows get independent generators.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TurnModel {
    /// Speakers take strictly alternating turns.
    RoundRobin,
    /// Next speaker stays the same with the given probability,
    /// otherwise switches uniformly.
    Markov { self_transition: f64 },
}

/// Parameters of one generated conversation.
///
/// Utterance lengths and gaps are exponential with the spec means;
/// `utterance_spread` puts a log-normal multiplier on each speaker's
/// typical utterance length (mean preserved), giving multi-speaker
/// recordings the inter-speaker duration variability that timing-only
/// detectors key on.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversationSpec {
    pub n_speakers: usize,
    pub duration: f64,
    pub mean_utterance: f64,
    pub mean_pause: f64,
    pub mean_response_gap: f64,
    pub overlap_prob: f64,
    pub utterance_spread: f64,
    pub turn_model: TurnModel,
    pub seed: u64,
}

impl Default for ConversationSpec {
    fn default() -> Self {
        ConversationSpec {
            n_speakers: 2,
            duration: 600.0,
            mean_utterance: 2.5,
            mean_pause: 2.0,
            mean_response_gap: 1.0,
            overlap_prob: 0.05,
            utterance_spread: 0.3,
            turn_model: TurnModel::RoundRobin,
            seed: 0,
        }
    }
}

const MIN_UTTERANCE_SECS: f64 = 0.05;

/// Snaps a time to the millisecond grid RTTM serializes at, so a disk
/// round trip reproduces generated timelines exactly.
fn quantize_ms(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Generates one annotated conversation timeline. Speaker labels are
/// `spk0..spk{n-1}`; all draws come from stream 0 of the spec seed in
/// generation order. Onsets and durations land on the millisecond
/// grid.
pub fn gen_conversation(recording_id: &str, spec: &ConversationSpec) -> Timeline {
    assert!(spec.n_speakers >= 1);
    assert!(spec.duration > 0.0 && spec.mean_utterance > 0.0);
    assert!(spec.mean_pause > 0.0 && spec.mean_response_gap > 0.0);
    assert!((0.0..=1.0).contains(&spec.overlap_prob));
    let mut rng = Pcg32::new(spec.seed, 0);

    // Per-speaker typical utterance length, log-normal with unit mean.
    let spread = spec.utterance_spread;
    let speaker_mean: Vec<f64> = (0..spec.n_speakers)
        .map(|_| {
            let factor = (spread * rng.next_gaussian() - 0.5 * spread * spread).exp();
            spec.mean_utterance * factor
        })
        .collect();

    let mut segments = Vec::new();
    let mut current = 0usize;
    let mut onset = 0.0f64;
    let mut counter = 0usize;
    while onset < spec.duration {
        let mut dur = rng.next_exp(speaker_mean[current]).max(MIN_UTTERANCE_SECS);
        if onset + dur > spec.duration {
            dur = spec.duration - onset;
            if dur < MIN_UTTERANCE_SECS {
                break;
            }
        }
        let q_onset = quantize_ms(onset);
        let q_dur = quantize_ms(onset + dur) - q_onset;
        segments.push(SpeechSegment::with_speaker(
            format!("{recording_id}_{counter:05}"),
            q_onset,
            q_dur,
            format!("spk{current}"),
        ));
        counter += 1;
        let prev_end = onset + dur;

        let next = match spec.turn_model {
            _ if spec.n_speakers == 1 => 0,
            TurnModel::RoundRobin => (current + 1) % spec.n_speakers,
            TurnModel::Markov { self_transition } => {
                if rng.next_f64() < self_transition {
                    current
                } else {
                    let other = rng.next_index(spec.n_speakers - 1);
                    if other >= current {
                        other + 1
                    } else {
                        other
                    }
                }
            }
        };
        if next == current {
            onset = prev_end + rng.next_exp(spec.mean_pause);
        } else {
            if rng.next_f64() < spec.overlap_prob {
                // Responder barges in before the turn ends.
                let overlap = rng.next_exp(spec.mean_response_gap).min(0.9 * dur);
                onset = prev_end - overlap;
            } else {
                onset = prev_end + rng.next_exp(spec.mean_response_gap);
            }
            current = next;
        }
    }
    validate_timeline(recording_id, segments, spec.duration)
        .expect("generated segments satisfy timeline invariants")
}

/// Parameters of the synthetic embedding generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingSpec {
    pub dim: usize,
    /// Minimum pairwise cosine distance between speaker centroids.
    pub centroid_min_distance: f64,
    /// Std of the per-segment Gaussian perturbation around the
    /// speaker centroid.
    pub intra_noise: f64,
    /// Fraction of segments receiving an off-manifold displacement.
    pub spurious_rate: f64,
    pub seed: u64,
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec {
            dim: 16,
            centroid_min_distance: 0.8,
            intra_noise: 0.05,
            spurious_rate: 0.0,
            seed: 0,
        }
    }
}

const CENTROID_MAX_TRIES: usize = 50_000;

/// Off-manifold displacement magnitude for spurious segments: well
/// above twice the intra-speaker noise so spurious points never merge
/// back into genuine clusters.
fn spurious_magnitude(intra_noise: f64) -> f64 {
    2.0 + 2.0 * intra_noise
}

fn random_unit(rng: &mut Pcg32, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Places one unit centroid per distinct speaker, pairwise separated
/// by at least the spec's cosine distance (rejection sampling).
pub fn place_centroids(
    n_speakers: usize,
    spec: &EmbeddingSpec,
) -> Result<Vec<Vec<f64>>, SynthError> {
    let mut rng = Pcg32::new(spec.seed, 0);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(n_speakers);
    let mut tries = 0usize;
    while centroids.len() < n_speakers {
        if tries >= CENTROID_MAX_TRIES {
            return Err(SynthError::CentroidPlacementFailure {
                wanted: n_speakers,
                dim: spec.dim,
                min_distance: spec.centroid_min_distance,
            });
        }
        tries += 1;
        let candidate = random_unit(&mut rng, spec.dim);
        let ok = centroids.iter().all(|c| {
            let dot: f64 = c.iter().zip(&candidate).map(|(a, b)| a * b).sum();
            1.0 - dot >= spec.centroid_min_distance
        });
        if ok {
            centroids.push(candidate);
        }
    }
    Ok(centroids)
}

/// Synthesizes one embedding per labeled segment: the speaker centroid
/// plus Gaussian noise, normalized; spurious segments get an extra
/// off-manifold displacement.
pub fn gen_embeddings(
    timeline: &Timeline,
    spec: &EmbeddingSpec,
) -> Result<EmbeddingTable, SynthError> {
    let speakers: BTreeSet<&str> = timeline
        .segments
        .iter()
        .filter_map(|s| s.speaker.as_deref())
        .collect();
    let speakers: Vec<&str> = speakers.into_iter().collect();
    let centroids = place_centroids(speakers.len(), spec)?;
    let index_of = |label: &str| speakers.binary_search(&label).expect("speaker is known");

    let mut rng_noise = Pcg32::new(spec.seed, 1);
    let mut rng_spurious = Pcg32::new(spec.seed, 2);
    let mut entries = Vec::with_capacity(timeline.segments.len());
    for seg in &timeline.segments {
        let speaker = seg.speaker.as_deref().expect("segments are annotated");
        let centroid = &centroids[index_of(speaker)];
        let mut v: Vec<f64> = centroid
            .iter()
            .map(|c| c + spec.intra_noise * rng_noise.next_gaussian())
            .collect();
        if rng_spurious.next_f64() < spec.spurious_rate {
            let dir = random_unit(&mut rng_spurious, spec.dim);
            let m = spurious_magnitude(spec.intra_noise);
            for (x, d) in v.iter_mut().zip(&dir) {
                *x += m * d;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v: Vec<f64> = if norm > 1e-12 {
            v.into_iter().map(|x| x / norm).collect()
        } else {
            centroid.clone()
        };
        entries.push((seg.segment_id.clone(), v));
    }
    Ok(EmbeddingTable::from_entries(entries).expect("generated embeddings are valid"))
}

/// Severity-to-behavior models for cohort generation: a piecewise-
/// linear dyadic-ratio curve (rising below the cut, falling at and
/// above it) and a linear response-gap curve. These are test fixtures
/// shaped like the observed clinical trends, not behavioral claims.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeverityModel {
    pub cut: u32,
    pub ratio_base: f64,
    pub ratio_slope_low: f64,
    pub ratio_at_cut: f64,
    pub ratio_slope_high: f64,
    pub response_base: f64,
    pub response_slope: f64,
}

impl SeverityModel {
    /// The piecewise model used by the end-to-end recovery tests.
    pub fn piecewise() -> Self {
        SeverityModel {
            cut: 10,
            ratio_base: 0.15,
            ratio_slope_low: 0.03,
            ratio_at_cut: 0.55,
            ratio_slope_high: 0.02,
            response_base: 0.8,
            response_slope: 0.02,
        }
    }

    /// Flat model: behavior independent of severity.
    pub fn null() -> Self {
        SeverityModel {
            cut: 10,
            ratio_base: 0.4,
            ratio_slope_low: 0.0,
            ratio_at_cut: 0.4,
            ratio_slope_high: 0.0,
            response_base: 1.0,
            response_slope: 0.0,
        }
    }

    pub fn dyadic_ratio(&self, severity: u32) -> f64 {
        let s = severity as f64;
        let r = if severity < self.cut {
            self.ratio_base + self.ratio_slope_low * s
        } else {
            self.ratio_at_cut - self.ratio_slope_high * (s - self.cut as f64)
        };
        r.clamp(0.05, 0.95)
    }

    pub fn response_gap(&self, severity: u32) -> f64 {
        (self.response_base + self.response_slope * severity as f64).max(0.2)
    }
}

/// Full cohort generation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    pub n_participants: usize,
    pub windows_per_participant: usize,
    pub window_secs: f64,
    pub model: SeverityModel,
    pub mean_utterance: f64,
    pub mean_pause: f64,
    pub overlap_prob: f64,
    pub dim: usize,
    pub centroid_min_distance: f64,
    pub intra_noise: f64,
    pub spurious_rate: f64,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n_participants: 32,
            windows_per_participant: 12,
            window_secs: 600.0,
            model: SeverityModel::piecewise(),
            mean_utterance: 3.0,
            mean_pause: 2.0,
            overlap_prob: 0.05,
            dim: 16,
            centroid_min_distance: 0.6,
            intra_noise: 0.05,
            spurious_rate: 0.02,
            seed: 0,
        }
    }
}

/// An in-memory corpus ready to be written to disk.
#[derive(Debug, Clone)]
pub struct CorpusData {
    pub recordings: Vec<(Timeline, EmbeddingTable)>,
    pub manifest: CorpusManifest,
}

/// Spreads `severity` over nine items scored 0..=3.
fn item_scores(severity: u32, rng: &mut Pcg32) -> Vec<u32> {
    let mut items = vec![0u32; 9];
    let mut remaining = severity.min(27);
    while remaining > 0 {
        let open: Vec<usize> = (0..9).filter(|&i| items[i] < 3).collect();
        let pick = open[rng.next_index(open.len())];
        items[pick] += 1;
        remaining -= 1;
    }
    items
}

/// Generates a full synthetic cohort: one multi-window recording per
/// participant, with dyadic-window frequency and response gaps tied to
/// severity by the spec's model. Severity scores cover 0..=27 evenly
/// across participants.
pub fn gen_cohort(spec: &CohortSpec) -> Result<CorpusData, SynthError> {
    assert!(spec.n_participants >= 1);
    let mut recordings = Vec::new();
    let mut recording_entries = Vec::new();
    let mut participant_entries = Vec::new();

    for p in 0..spec.n_participants {
        let pid = format!("p{p:02}");
        let rec_id = format!("rec_{pid}");
        let pseed = derive_seed(spec.seed, p as u64);
        let severity = if spec.n_participants > 1 {
            (27 * p / (spec.n_participants - 1)) as u32
        } else {
            0
        };
        let mut rng_items = Pcg32::new(pseed, 1);
        let items = item_scores(severity, &mut rng_items);
        let group = if severity < spec.model.cut {
            GroupTag::Healthy
        } else if p % 2 == 0 {
            GroupTag::Depression
        } else {
            GroupTag::Psychosis
        };

        let n_windows = spec.windows_per_participant;
        let n_dyadic = ((spec.model.dyadic_ratio(severity) * n_windows as f64).round() as usize)
            .min(n_windows);
        let mut window_kinds: Vec<usize> = (0..n_windows)
            .map(|w| {
                if w < n_dyadic {
                    2
                } else {
                    // Alternate solo and multi-party windows.
                    match w % 3 {
                        0 => 1,
                        1 => 3,
                        _ => 4,
                    }
                }
            })
            .collect();
        let mut rng_windows = Pcg32::new(pseed, 2);
        rng_windows.shuffle(&mut window_kinds);

        let response_gap = spec.model.response_gap(severity);
        let mut segments = Vec::new();
        for (w, &n_speakers) in window_kinds.iter().enumerate() {
            // Dyadic windows keep occasional same-speaker follow-ons so
            // pause events exist to measure.
            let turn_model = if n_speakers == 2 {
                TurnModel::Markov {
                    self_transition: 0.2,
                }
            } else {
                TurnModel::RoundRobin
            };
            let conv = gen_conversation(
                &rec_id,
                &ConversationSpec {
                    n_speakers,
                    duration: spec.window_secs,
                    mean_utterance: spec.mean_utterance,
                    mean_pause: spec.mean_pause,
                    mean_response_gap: response_gap,
                    overlap_prob: spec.overlap_prob,
                    utterance_spread: 0.2,
                    turn_model,
                    seed: derive_seed(pseed, 100 + w as u64),
                },
            );
            let offset = w as f64 * spec.window_secs;
            for seg in conv.segments {
                let speaker = seg.speaker.as_deref().unwrap();
                let label = if speaker == "spk0" {
                    format!("t_{pid}")
                } else {
                    format!("{pid}_w{w:02}_{speaker}")
                };
                segments.push(SpeechSegment::with_speaker(
                    "",
                    seg.onset + offset,
                    seg.duration,
                    label,
                ));
            }
        }
        let total = n_windows as f64 * spec.window_secs;
        let mut timeline = validate_timeline(rec_id.clone(), segments, total)
            .expect("windowed segments fit the recording");
        crate::io::assign_segment_ids(&mut timeline);

        let table = gen_embeddings(
            &timeline,
            &EmbeddingSpec {
                dim: spec.dim,
                centroid_min_distance: spec.centroid_min_distance,
                intra_noise: spec.intra_noise,
                spurious_rate: spec.spurious_rate,
                seed: derive_seed(pseed, 7),
            },
        )?;

        recording_entries.push(RecordingEntry {
            recording_id: rec_id.clone(),
            rttm: format!("{rec_id}.rttm"),
            embeddings: format!("{rec_id}.emb"),
            split: Split::Eval,
            annotated: true,
            duration_secs: Some(total),
        });
        participant_entries.push(ParticipantEntry {
            participant_id: pid,
            recording_ids: vec![rec_id],
            severity_score: severity,
            item_scores: items,
            group,
        });
        recordings.push((timeline, table));
    }

    Ok(CorpusData {
        recordings,
        manifest: CorpusManifest {
            recordings: recording_entries,
            participants: participant_entries,
        },
    })
}

/// Detection-benchmark corpus parameters: standalone recordings with
/// one to four speakers, split into dev and eval halves.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionCorpusSpec {
    pub n_recordings: usize,
    pub duration: f64,
    pub max_speakers: usize,
    pub dev_fraction: f64,
    pub conversation: ConversationSpec,
    pub embedding: EmbeddingSpec,
    pub seed: u64,
}

impl Default for DetectionCorpusSpec {
    fn default() -> Self {
        DetectionCorpusSpec {
            n_recordings: 200,
            duration: 600.0,
            max_speakers: 4,
            dev_fraction: 0.5,
            conversation: ConversationSpec::default(),
            embedding: EmbeddingSpec {
                spurious_rate: 0.05,
                ..EmbeddingSpec::default()
            },
            seed: 0,
        }
    }
}

/// Generates the detection benchmark: recording `i` has
/// `1 + (i mod max_speakers)` speakers, so speaker counts and the two
/// splits stay balanced.
pub fn gen_detection_corpus(spec: &DetectionCorpusSpec) -> Result<CorpusData, SynthError> {
    let mut recordings = Vec::new();
    let mut recording_entries = Vec::new();
    let n_dev = (spec.n_recordings as f64 * spec.dev_fraction).floor() as usize;
    for i in 0..spec.n_recordings {
        let rec_id = format!("rec{i:04}");
        let rseed = derive_seed(spec.seed, i as u64);
        let n_speakers = 1 + (i % spec.max_speakers);
        let mut timeline = gen_conversation(
            &rec_id,
            &ConversationSpec {
                n_speakers,
                duration: spec.duration,
                seed: rseed,
                ..spec.conversation.clone()
            },
        );
        crate::io::assign_segment_ids(&mut timeline);
        let table = gen_embeddings(
            &timeline,
            &EmbeddingSpec {
                seed: derive_seed(rseed, 1),
                ..spec.embedding
            },
        )?;
        recording_entries.push(RecordingEntry {
            recording_id: rec_id.clone(),
            rttm: format!("{rec_id}.rttm"),
            embeddings: format!("{rec_id}.emb"),
            split: if i < n_dev { Split::Dev } else { Split::Eval },
            annotated: true,
            duration_secs: Some(spec.duration),
        });
        recordings.push((timeline, table));
    }
    Ok(CorpusData {
        recordings,
        manifest: CorpusManifest {
            recordings: recording_entries,
            participants: Vec::new(),
        },
    })
}

/// Atomically writes `contents` (temp file in the same directory, then
/// rename) so interrupted runs never leave truncated files.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let base = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp = dir.join(format!(".{base}.tmp-{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

/// Writes RTTM, embeddings, and the manifest into `dir` (created if
/// missing), honoring the relative paths in the manifest.
pub fn write_corpus(dir: &Path, corpus: &CorpusData) -> Result<(), SynthError> {
    std::fs::create_dir_all(dir)?;
    for ((timeline, table), entry) in corpus.recordings.iter().zip(&corpus.manifest.recordings) {
        let rttm = write_rttm([timeline]).expect("generated timelines carry speakers");
        write_atomic(&dir.join(&entry.rttm), &rttm)?;
        write_atomic(&dir.join(&entry.embeddings), &write_embeddings(table))?;
    }
    write_atomic(&dir.join("manifest.json"), &write_manifest(&corpus.manifest))?;
    Ok(())
}
