//! Average-linkage agglomerative clustering of segment embeddings
//! under cosine distance, plus the threshold grid search that tunes
//! the detector on a development split.
//!
//! Merging is greedy on the global minimum inter-cluster average
//! distance and stops once that minimum exceeds the threshold. Among
//! equal-distance pairs the lexicographically smallest (index, index)
//! pair merges first, and the merged cluster keeps the smaller index,
//! so the whole procedure is deterministic.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::io::EmbeddingTable;
use crate::spurious::SpuriousMode;
use crate::timeline::Timeline;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("cosine distance undefined for a zero vector")]
    ZeroVector,
    #[error("cannot cluster an empty embedding table")]
    EmptyTable,
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("development set contains a single class")]
    SingleClassDev,
}

/// Cosine distance 1 - cos(u, v), in [0, 2].
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64, ClusterError> {
    if u.len() != v.len() {
        return Err(ClusterError::DimensionMismatch(u.len(), v.len()));
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(ClusterError::ZeroVector);
    }
    Ok((1.0 - dot / (nu.sqrt() * nv.sqrt())).clamp(0.0, 2.0))
}

/// Segment-to-cluster mapping with L2-normalized per-cluster centroids.
/// Cluster indices are dense in `0..n_clusters`, ordered by each
/// cluster's first member in segment-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub assignment: BTreeMap<String, usize>,
    pub n_clusters: usize,
    pub centroids: Vec<Vec<f64>>,
}

impl ClusterAssignment {
    /// Member segment ids per cluster, in id order.
    pub fn members(&self) -> Vec<Vec<&str>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (id, &c) in &self.assignment {
            out[c].push(id.as_str());
        }
        out
    }
}

/// Normalizes to unit L2 norm; degenerate near-zero means fall back to
/// the first basis direction rather than dividing by zero.
fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        let mut e = vec![0.0; v.len()];
        if !e.is_empty() {
            e[0] = 1.0;
        }
        return e;
    }
    for x in &mut v {
        *x /= norm;
    }
    v
}

/// Clusters all embeddings, merging while the minimum inter-cluster
/// average cosine distance is at or below `threshold`.
pub fn cluster_segments(
    table: &EmbeddingTable,
    threshold: f64,
) -> Result<ClusterAssignment, ClusterError> {
    if table.is_empty() {
        return Err(ClusterError::EmptyTable);
    }
    assert!(threshold > 0.0, "clustering threshold must be positive");
    let ids: Vec<&String> = table.entries.keys().collect();
    let points: Vec<&Vec<f64>> = table.entries.values().collect();
    let n = points.len();

    // Flat symmetric distance matrix over current clusters.
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = cosine_distance(points[i], points[j])?;
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    // members[i] lists original point indices of cluster i.
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();

    // Per-row nearest neighbor among active columns j > i.
    let mut nearest: Vec<Option<(f64, usize)>> = vec![None; n];
    let recompute_row = |i: usize, dist: &[f64], active: &[bool]| -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for j in (i + 1)..n {
            if !active[j] {
                continue;
            }
            let d = dist[i * n + j];
            if best.map(|(bd, _)| d < bd).unwrap_or(true) {
                best = Some((d, j));
            }
        }
        best
    };
    for (i, cell) in nearest.iter_mut().enumerate() {
        *cell = recompute_row(i, &dist, &active);
    }

    loop {
        // Global minimum; ascending scan + strict < gives the smallest
        // (i, j) pair among ties.
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, cell) in nearest.iter().enumerate() {
            if !active[i] {
                continue;
            }
            if let Some((d, j)) = *cell {
                if best.map(|(bd, _, _)| d < bd).unwrap_or(true) {
                    best = Some((d, i, j));
                }
            }
        }
        let (dmin, i, j) = match best {
            Some(b) => b,
            None => break, // single cluster left
        };
        if dmin > threshold {
            break;
        }

        // Average-linkage update: d(i∪j, k) is the size-weighted mean,
        // exactly the mean pairwise distance over original points.
        let (si, sj) = (size[i] as f64, size[j] as f64);
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let d = (si * dist[i * n + k] + sj * dist[j * n + k]) / (si + sj);
            dist[i * n + k] = d;
            dist[k * n + i] = d;
        }
        active[j] = false;
        size[i] += size[j];
        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        nearest[j] = None;

        for k in 0..n {
            if !active[k] {
                continue;
            }
            if k < i {
                // Row k's cached column may be stale: the merged row's
                // value changed and j disappeared.
                match nearest[k] {
                    Some((_, nk)) if nk == i || nk == j => {
                        nearest[k] = recompute_row(k, &dist, &active);
                    }
                    Some((bd, nk)) => {
                        let d = dist[k * n + i];
                        // On exact ties the smaller column index wins,
                        // matching the lexicographic merge rule.
                        if d < bd || (d == bd && i < nk) {
                            nearest[k] = Some((d, i));
                        }
                    }
                    None => {}
                }
            } else if k == i || matches!(nearest[k], Some((_, nk)) if nk == j) {
                nearest[k] = recompute_row(k, &dist, &active);
            }
        }
    }

    // Dense relabeling in order of each surviving cluster's first
    // member, which is also segment-id order.
    let mut assignment = BTreeMap::new();
    let mut centroids = Vec::new();
    let mut label = 0usize;
    for i in 0..n {
        if !active[i] {
            continue;
        }
        let mut centroid = vec![0.0f64; table.dim];
        for &p in &members[i] {
            assignment.insert(ids[p].clone(), label);
            for (c, x) in centroid.iter_mut().zip(points[p]) {
                *c += x;
            }
        }
        let m = members[i].len() as f64;
        for c in &mut centroid {
            *c /= m;
        }
        centroids.push(normalize(centroid));
        label += 1;
    }
    Ok(ClusterAssignment {
        assignment,
        n_clusters: label,
        centroids,
    })
}

/// One development recording with its ground-truth dyadic label.
#[derive(Debug, Clone)]
pub struct DevRecording {
    pub table: EmbeddingTable,
    pub timeline: Timeline,
    pub dyadic: bool,
}

/// Grid-search report. `best_threshold` attains the maximum accuracy;
/// ties resolve toward the smallest threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTuneReport {
    pub grid: Vec<f64>,
    pub accuracy_per_threshold: Vec<f64>,
    pub best_threshold: f64,
}

/// Default tuning grid: 0.05 steps over [0.1, 1.5].
pub fn default_threshold_grid() -> Vec<f64> {
    (2..=30).map(|i| i as f64 / 20.0).collect()
}

/// Evaluates dyadic-detection accuracy at every grid threshold on the
/// development set and reports the best.
pub fn tune_threshold(
    dev: &[DevRecording],
    grid: &[f64],
    filter: &SpuriousMode,
) -> Result<ThresholdTuneReport, crate::detect::DetectError> {
    if grid.is_empty() {
        return Err(ClusterError::EmptyGrid.into());
    }
    if dev.iter().all(|r| r.dyadic) || dev.iter().all(|r| !r.dyadic) {
        return Err(ClusterError::SingleClassDev.into());
    }
    let mut accuracies = Vec::with_capacity(grid.len());
    for &threshold in grid {
        let mut correct = 0usize;
        for rec in dev {
            let verdict =
                crate::detect::detect_dyadic(&rec.table, &rec.timeline, threshold, filter)?;
            if verdict.is_dyadic == rec.dyadic {
                correct += 1;
            }
        }
        accuracies.push(correct as f64 / dev.len() as f64);
    }
    let mut best_threshold = grid[0];
    let mut best_acc = accuracies[0];
    for (&t, &a) in grid.iter().zip(&accuracies).skip(1) {
        if a > best_acc || (a == best_acc && t < best_threshold) {
            best_acc = a;
            best_threshold = t;
        }
    }
    Ok(ThresholdTuneReport {
        grid: grid.to_vec(),
        accuracy_per_threshold: accuracies,
        best_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(entries: &[(&str, &[f64])]) -> EmbeddingTable {
        EmbeddingTable::from_entries(
            entries
                .iter()
                .map(|(id, v)| (id.to_string(), v.to_vec())),
        )
        .unwrap()
    }

    #[test]
    fn cosine_distance_cases() {
        assert!(cosine_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap() < 1e-12);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let d = cosine_distance(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((d - (1.0 - 1.0 / 2.0f64.sqrt())).abs() < 1e-12);
        assert!((d - 0.29289).abs() < 1e-5);
        assert_eq!(
            cosine_distance(&[0.0, 0.0], &[1.0, 0.0]),
            Err(ClusterError::ZeroVector)
        );
        assert_eq!(
            cosine_distance(&[1.0], &[1.0, 0.0]),
            Err(ClusterError::DimensionMismatch(1, 2))
        );
    }

    #[test]
    fn identical_embeddings_single_cluster() {
        let t = table(&[("a", &[1.0, 1.0]), ("b", &[1.0, 1.0]), ("c", &[1.0, 1.0])]);
        for threshold in [0.01, 0.5, 2.0] {
            let c = cluster_segments(&t, threshold).unwrap();
            assert_eq!(c.n_clusters, 1);
        }
    }

    #[test]
    fn orthogonal_groups_split_at_half() {
        let t = table(&[
            ("a1", &[1.0, 0.0]),
            ("a2", &[2.0, 0.0]),
            ("b1", &[0.0, 1.0]),
            ("b2", &[0.0, 3.0]),
        ]);
        let c = cluster_segments(&t, 0.5).unwrap();
        assert_eq!(c.n_clusters, 2);
        assert_eq!(c.assignment["a1"], c.assignment["a2"]);
        assert_eq!(c.assignment["b1"], c.assignment["b2"]);
        assert_ne!(c.assignment["a1"], c.assignment["b1"]);
    }

    #[test]
    fn threshold_two_collapses_everything() {
        let t = table(&[
            ("a", &[1.0, 0.0]),
            ("b", &[-1.0, 0.0]),
            ("c", &[0.0, 1.0]),
        ]);
        let c = cluster_segments(&t, 2.0).unwrap();
        assert_eq!(c.n_clusters, 1);
    }

    #[test]
    fn empty_table_rejected() {
        let t = EmbeddingTable::from_entries(std::iter::empty()).unwrap();
        assert_eq!(cluster_segments(&t, 0.5), Err(ClusterError::EmptyTable));
    }

    #[test]
    fn centroids_are_normalized() {
        let t = table(&[("a", &[3.0, 0.0]), ("b", &[5.0, 0.0]), ("c", &[0.0, 2.0])]);
        let c = cluster_segments(&t, 0.3).unwrap();
        for centroid in &c.centroids {
            let norm: f64 = centroid.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    /// From-scratch greedy UPGMA used as an independent oracle: every
    /// step recomputes all inter-cluster means over original pairwise
    /// distances.
    fn brute_force_partition(points: &[Vec<f64>], threshold: f64) -> Vec<Vec<usize>> {
        let n = points.len();
        let mut base = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in 0..n {
                base[i][j] = cosine_distance(&points[i], &points[j]).unwrap();
            }
        }
        let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        loop {
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..clusters.len() {
                for j in (i + 1)..clusters.len() {
                    let mut sum = 0.0;
                    for &p in &clusters[i] {
                        for &q in &clusters[j] {
                            sum += base[p][q];
                        }
                    }
                    let d = sum / (clusters[i].len() * clusters[j].len()) as f64;
                    if best.map(|(bd, _, _)| d < bd).unwrap_or(true) {
                        best = Some((d, i, j));
                    }
                }
            }
            match best {
                Some((d, i, j)) if d <= threshold => {
                    let merged = clusters.remove(j);
                    clusters[i].extend(merged);
                }
                _ => break,
            }
        }
        for c in &mut clusters {
            c.sort_unstable();
        }
        clusters.sort();
        clusters
    }

    #[test]
    fn matches_brute_force_oracle_on_small_tables() {
        use crate::rng::Pcg32;
        for seed in 0..30u64 {
            let mut rng = Pcg32::new(seed, 17);
            let n = 3 + rng.next_index(6); // 3..=8 points
            let dim = 3;
            let points: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| rng.next_gaussian()).collect())
                .collect();
            let entries = points
                .iter()
                .enumerate()
                .map(|(i, p)| (format!("s{i:02}"), p.clone()));
            let t = EmbeddingTable::from_entries(entries).unwrap();
            let threshold = 0.2 + rng.next_f64();

            let got = cluster_segments(&t, threshold).unwrap();
            let mut got_partition = vec![Vec::new(); got.n_clusters];
            for (id, &c) in &got.assignment {
                let idx: usize = id[1..].parse().unwrap();
                got_partition[c].push(idx);
            }
            for c in &mut got_partition {
                c.sort_unstable();
            }
            got_partition.sort();

            let expected = brute_force_partition(&points, threshold);
            assert_eq!(got_partition, expected, "seed {seed} threshold {threshold}");
        }
    }

    #[test]
    fn matches_brute_force_oracle_under_exact_ties() {
        use crate::rng::Pcg32;
        // Small integer grid coordinates create many exactly equal
        // distances, exercising the lexicographic merge rule.
        for seed in 0..40u64 {
            let mut rng = Pcg32::new(seed, 23);
            let n = 4 + rng.next_index(5);
            let points: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    loop {
                        let v: Vec<f64> =
                            (0..3).map(|_| rng.next_index(3) as f64 - 1.0).collect();
                        if v.iter().any(|x| *x != 0.0) {
                            break v;
                        }
                    }
                })
                .collect();
            let entries = points
                .iter()
                .enumerate()
                .map(|(i, p)| (format!("s{i:02}"), p.clone()));
            let t = EmbeddingTable::from_entries(entries).unwrap();
            let threshold = 0.25 + 0.25 * rng.next_index(6) as f64;

            let got = cluster_segments(&t, threshold).unwrap();
            let mut got_partition = vec![Vec::new(); got.n_clusters];
            for (id, &c) in &got.assignment {
                let idx: usize = id[1..].parse().unwrap();
                got_partition[c].push(idx);
            }
            for c in &mut got_partition {
                c.sort_unstable();
            }
            got_partition.sort();

            let expected = brute_force_partition(&points, threshold);
            assert_eq!(got_partition, expected, "seed {seed} threshold {threshold}");
        }
    }

    #[test]
    fn tune_picks_threshold_in_optimal_interval() {
        // Dyadic recordings: two orthogonal speakers (between-distance
        // 1.0). Non-dyadic: three mutually orthogonal speakers. Any
        // threshold below 1.0 keeps counts exact, so the smallest grid
        // point with perfect accuracy wins.
        let dyadic = DevRecording {
            table: table(&[("a", &[1.0, 0.0, 0.0]), ("b", &[0.0, 1.0, 0.0])]),
            timeline: crate::timeline::validate_timeline("d", vec![], 600.0).unwrap(),
            dyadic: true,
        };
        let non_dyadic = DevRecording {
            table: table(&[
                ("a", &[1.0, 0.0, 0.0]),
                ("b", &[0.0, 1.0, 0.0]),
                ("c", &[0.0, 0.0, 1.0]),
            ]),
            timeline: crate::timeline::validate_timeline("n", vec![], 600.0).unwrap(),
            dyadic: false,
        };
        let grid = [0.9, 0.3, 0.5, 1.2];
        let report = tune_threshold(
            &[dyadic, non_dyadic],
            &grid,
            &SpuriousMode::Off,
        )
        .unwrap();
        assert_eq!(report.best_threshold, 0.3);
        assert_eq!(report.accuracy_per_threshold.len(), 4);
    }

    #[test]
    fn tune_rejects_degenerate_inputs() {
        use crate::detect::DetectError;
        let rec = DevRecording {
            table: table(&[("a", &[1.0, 0.0])]),
            timeline: crate::timeline::validate_timeline("r", vec![], 600.0).unwrap(),
            dyadic: true,
        };
        assert!(matches!(
            tune_threshold(std::slice::from_ref(&rec), &[], &SpuriousMode::Off),
            Err(DetectError::Cluster(ClusterError::EmptyGrid))
        ));
        assert!(matches!(
            tune_threshold(&[rec], &[0.5], &SpuriousMode::Off),
            Err(DetectError::Cluster(ClusterError::SingleClassDev))
        ));
    }
}
