//! Detection and removal of spuriously detected speaker clusters
//! (background noise, intra-speaker variability splits) before the
//! speaker count is binarized.
//!
//! A removed cluster's segments are reassigned to the nearest
//! surviving centroid, never dropped, so downstream timing features
//! keep every second of speech. If every cluster would be removed the
//! largest-share cluster is retained.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::clustering::{cosine_distance, ClusterAssignment, ClusterError};
use crate::forest::{train_forest, Forest, ForestConfig, ForestError};
use crate::io::EmbeddingTable;
use crate::timeline::Timeline;

#[derive(Debug, Error)]
pub enum SpuriousError {
    #[error("cluster assignment and timeline disagree: {0}")]
    InconsistentInputs(String),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// Default heuristic cutoff: clusters holding under 5% of speech time
/// are treated as spurious.
pub const DEFAULT_MIN_SHARE: f64 = 0.05;

/// How clusters are screened before speaker counting.
#[derive(Debug, Clone)]
pub enum SpuriousMode {
    Off,
    /// Flag clusters whose speech share falls below `min_share`.
    Heuristic { min_share: f64 },
    /// Classify each cluster's feature row with a trained forest
    /// (class 1 = spurious).
    Model(Forest),
}

impl Default for SpuriousMode {
    fn default() -> Self {
        SpuriousMode::Heuristic {
            min_share: DEFAULT_MIN_SHARE,
        }
    }
}

/// Per-cluster screening features.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterFeatures {
    /// Fraction of total speech time held by this cluster.
    pub speech_share: f64,
    pub n_segments: usize,
    /// Mean pairwise cosine distance within the cluster; 0 for a
    /// singleton.
    pub mean_intra_distance: f64,
    /// Cosine distance to the nearest other centroid; 2 (the maximum)
    /// when there is no other cluster.
    pub min_centroid_distance: f64,
    pub mean_segment_duration: f64,
}

impl ClusterFeatures {
    pub fn to_vector(&self) -> Vec<f64> {
        vec![
            self.speech_share,
            self.n_segments as f64,
            self.mean_intra_distance,
            self.min_centroid_distance,
            self.mean_segment_duration,
        ]
    }
}

/// Computes one feature row per cluster.
///
/// The assignment must cover exactly the timeline segments that carry
/// embeddings.
pub fn compute_cluster_features(
    clusters: &ClusterAssignment,
    table: &EmbeddingTable,
    timeline: &Timeline,
) -> Result<Vec<ClusterFeatures>, SpuriousError> {
    let seg_by_id: BTreeMap<&str, &crate::timeline::SpeechSegment> = timeline
        .segments
        .iter()
        .map(|s| (s.segment_id.as_str(), s))
        .collect();
    for id in clusters.assignment.keys() {
        if !seg_by_id.contains_key(id.as_str()) {
            return Err(SpuriousError::InconsistentInputs(format!(
                "clustered segment {id:?} not present in timeline"
            )));
        }
    }
    for seg in &timeline.segments {
        if table.entries.contains_key(&seg.segment_id)
            && !clusters.assignment.contains_key(&seg.segment_id)
        {
            return Err(SpuriousError::InconsistentInputs(format!(
                "segment {:?} has an embedding but no cluster",
                seg.segment_id
            )));
        }
    }

    let members = clusters.members();
    let mut speech_time = vec![0.0f64; clusters.n_clusters];
    for (c, ids) in members.iter().enumerate() {
        speech_time[c] = ids.iter().map(|id| seg_by_id[id].duration).sum();
    }
    let total_time: f64 = speech_time.iter().sum();

    let mut out = Vec::with_capacity(clusters.n_clusters);
    for (c, ids) in members.iter().enumerate() {
        let n = ids.len();
        let mut intra_sum = 0.0;
        let mut intra_pairs = 0usize;
        for i in 0..n {
            for j in (i + 1)..n {
                intra_sum += cosine_distance(&table.entries[ids[i]], &table.entries[ids[j]])?;
                intra_pairs += 1;
            }
        }
        let mut min_centroid = 2.0f64;
        for (other, centroid) in clusters.centroids.iter().enumerate() {
            if other != c {
                min_centroid =
                    min_centroid.min(cosine_distance(&clusters.centroids[c], centroid)?);
            }
        }
        out.push(ClusterFeatures {
            speech_share: if total_time > 0.0 {
                speech_time[c] / total_time
            } else {
                0.0
            },
            n_segments: n,
            mean_intra_distance: if intra_pairs > 0 {
                intra_sum / intra_pairs as f64
            } else {
                0.0
            },
            min_centroid_distance: min_centroid,
            mean_segment_duration: if n > 0 { speech_time[c] / n as f64 } else { 0.0 },
        });
    }
    Ok(out)
}

/// Removes clusters flagged spurious and reassigns their segments to
/// the nearest surviving centroid. Never returns zero clusters.
pub fn filter_spurious(
    clusters: &ClusterAssignment,
    features: &[ClusterFeatures],
    table: &EmbeddingTable,
    mode: &SpuriousMode,
) -> Result<ClusterAssignment, SpuriousError> {
    assert_eq!(
        features.len(),
        clusters.n_clusters,
        "feature rows must align with clusters"
    );
    let mut spurious = vec![false; clusters.n_clusters];
    match mode {
        SpuriousMode::Off => {}
        SpuriousMode::Heuristic { min_share } => {
            for (c, f) in features.iter().enumerate() {
                spurious[c] = f.speech_share < *min_share;
            }
        }
        SpuriousMode::Model(model) => {
            for (c, f) in features.iter().enumerate() {
                spurious[c] = model.predict(&f.to_vector())?.label == 1;
            }
        }
    }
    if spurious.iter().all(|s| *s) {
        // Guard: keep the largest-share cluster rather than deleting
        // all speech.
        let keep = features
            .iter()
            .enumerate()
            .max_by(|(ia, fa), (ib, fb)| {
                fa.speech_share
                    .total_cmp(&fb.speech_share)
                    .then(ib.cmp(ia))
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        spurious[keep] = false;
    }
    if spurious.iter().all(|s| !s) {
        return Ok(clusters.clone());
    }

    let survivors: Vec<usize> = (0..clusters.n_clusters).filter(|&c| !spurious[c]).collect();
    let relabel: BTreeMap<usize, usize> = survivors
        .iter()
        .enumerate()
        .map(|(new, &old)| (old, new))
        .collect();

    let mut assignment = BTreeMap::new();
    for (id, &old) in &clusters.assignment {
        let new = if let Some(&n) = relabel.get(&old) {
            n
        } else {
            let embedding = &table.entries[id];
            let mut best = (f64::INFINITY, 0usize);
            for (new, &old_survivor) in survivors.iter().enumerate() {
                let d = cosine_distance(embedding, &clusters.centroids[old_survivor])?;
                if d < best.0 {
                    best = (d, new);
                }
            }
            best.1
        };
        assignment.insert(id.clone(), new);
    }

    // Recompute centroids over the final membership.
    let mut sums = vec![vec![0.0f64; table.dim]; survivors.len()];
    let mut counts = vec![0usize; survivors.len()];
    for (id, &c) in &assignment {
        counts[c] += 1;
        for (acc, x) in sums[c].iter_mut().zip(&table.entries[id]) {
            *acc += x;
        }
    }
    let centroids: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(mut v, &n)| {
            for x in &mut v {
                *x /= n.max(1) as f64;
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                for x in &mut v {
                    *x /= norm;
                }
            }
            v
        })
        .collect();

    Ok(ClusterAssignment {
        assignment,
        n_clusters: survivors.len(),
        centroids,
    })
}

/// Clusters, screens, and reassigns in one step; `Off` bypasses
/// feature computation entirely.
pub fn apply(
    clusters: ClusterAssignment,
    table: &EmbeddingTable,
    timeline: &Timeline,
    mode: &SpuriousMode,
) -> Result<ClusterAssignment, SpuriousError> {
    if matches!(mode, SpuriousMode::Off) {
        return Ok(clusters);
    }
    let features = compute_cluster_features(&clusters, table, timeline)?;
    filter_spurious(&clusters, &features, table, mode)
}

/// One annotated recording together with its clustering output.
pub struct AnnotatedClustering<'a> {
    pub clusters: &'a ClusterAssignment,
    pub table: &'a EmbeddingTable,
    pub timeline: &'a Timeline,
}

/// Derives spurious/genuine labels from annotated speakers and trains
/// a screening forest on the cluster features.
///
/// A cluster is labeled spurious when its speech does not
/// majority-overlap any single annotated speaker, or when its
/// majority speaker has a larger-overlap cluster elsewhere in the same
/// recording (equal overlaps resolve toward the lower cluster index).
pub fn train_spurious_model(
    recordings: &[AnnotatedClustering<'_>],
    config: ForestConfig,
) -> Result<Forest, SpuriousError> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for rec in recordings {
        let features = compute_cluster_features(rec.clusters, rec.table, rec.timeline)?;
        let cluster_labels = label_clusters(rec.clusters, rec.timeline)?;
        for (f, l) in features.iter().zip(cluster_labels) {
            rows.push(f.to_vector());
            labels.push(l as usize);
        }
    }
    Ok(train_forest(&rows, &labels, config)?)
}

/// Spurious labels per cluster (true = spurious) from annotations.
pub fn label_clusters(
    clusters: &ClusterAssignment,
    timeline: &Timeline,
) -> Result<Vec<bool>, SpuriousError> {
    let seg_by_id: BTreeMap<&str, &crate::timeline::SpeechSegment> = timeline
        .segments
        .iter()
        .map(|s| (s.segment_id.as_str(), s))
        .collect();
    // overlap[c][speaker] = speech time of cluster c labeled speaker.
    let mut overlap: Vec<BTreeMap<&str, f64>> = vec![BTreeMap::new(); clusters.n_clusters];
    let mut cluster_time = vec![0.0f64; clusters.n_clusters];
    for (id, &c) in &clusters.assignment {
        let seg = seg_by_id
            .get(id.as_str())
            .ok_or_else(|| {
                SpuriousError::InconsistentInputs(format!(
                    "clustered segment {id:?} not present in timeline"
                ))
            })?;
        cluster_time[c] += seg.duration;
        if let Some(speaker) = seg.speaker.as_deref() {
            *overlap[c].entry(speaker).or_insert(0.0) += seg.duration;
        }
    }
    let owner: Vec<Option<&str>> = overlap
        .iter()
        .zip(&cluster_time)
        .map(|(per_speaker, &total)| {
            per_speaker
                .iter()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .filter(|(_, &t)| t * 2.0 > total)
                .map(|(s, _)| *s)
        })
        .collect();
    let labels = (0..clusters.n_clusters)
        .map(|c| {
            let speaker = match owner[c] {
                Some(s) => s,
                None => return true, // majority-overlaps no annotated speaker
            };
            let mine = overlap[c][speaker];
            // Spurious iff some other cluster overlaps this speaker
            // more (or equally, at a lower index).
            (0..clusters.n_clusters).any(|other| {
                if other == c {
                    return false;
                }
                match overlap[other].get(speaker) {
                    Some(&t) => t > mine || (t == mine && other < c),
                    None => false,
                }
            })
        })
        .collect();
    Ok(labels)
}
