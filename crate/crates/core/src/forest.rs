//! Bagged CART decision trees with Gini splits.
//!
//! Reproducibility contract: tree `i` of a forest draws its bootstrap
//! sample and per-node feature subsets from [`Pcg32::new(seed, i)`],
//! so training is bit-identical whether trees are built sequentially
//! or in parallel. Split search is deterministic: candidate thresholds
//! are midpoints between consecutive distinct sorted feature values,
//! and impurity ties resolve toward the lowest feature index, then the
//! lowest threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Pcg32;

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("training set needs at least 2 samples, found {0}")]
    EmptyTrainingSet(usize),
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("feature rows have inconsistent dimensions ({0} vs {1})")]
    RaggedFeatures(usize, usize),
    #[error("feature/label counts differ ({0} vs {1})")]
    LabelLengthMismatch(usize, usize),
    #[error("input has dimension {found}, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least {required} samples for {folds}-fold cross-validation, found {found}")]
    TooFewSamples {
        required: usize,
        folds: usize,
        found: usize,
    },
}

/// How many candidate features each split samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FeatureSubsample {
    /// floor(sqrt(n_features)), never below 1.
    Sqrt,
    Count(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub features_per_split: FeatureSubsample,
    pub seed: u64,
}

/// Ensemble size used throughout the dyadic detectors.
pub const DEFAULT_N_TREES: usize = 51;

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: DEFAULT_N_TREES,
            max_depth: None,
            min_leaf: 1,
            features_per_split: FeatureSubsample::Sqrt,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn with_seed(seed: u64) -> Self {
        ForestConfig {
            seed,
            ..ForestConfig::default()
        }
    }

    fn features_per_split(&self, n_features: usize) -> usize {
        match self.features_per_split {
            FeatureSubsample::Sqrt => ((n_features as f64).sqrt().floor() as usize).max(1),
            FeatureSubsample::Count(c) => c.clamp(1, n_features),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Routes a point to its leaf and votes the leaf's majority class
    /// (ties toward the lower class index).
    fn vote(&self, x: &[f64]) -> usize {
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { counts } => {
                    return counts
                        .iter()
                        .enumerate()
                        .max_by(|(ia, ca), (ib, cb)| ca.cmp(cb).then(ib.cmp(ia)))
                        .map(|(i, _)| i)
                        .unwrap_or(0);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: usize,
    /// Fraction of trees voting class 1, the positive (dyadic) class
    /// by crate convention.
    pub vote_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    pub config: ForestConfig,
    pub n_features: usize,
    pub n_classes: usize,
}

impl Forest {
    pub fn predict(&self, x: &[f64]) -> Result<Prediction, ForestError> {
        if x.len() != self.n_features {
            return Err(ForestError::DimensionMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        let mut votes = vec![0usize; self.n_classes];
        for tree in &self.trees {
            votes[tree.vote(x)] += 1;
        }
        let label = votes
            .iter()
            .enumerate()
            .max_by(|(ia, ca), (ib, cb)| ca.cmp(cb).then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let positive = if self.n_classes > 1 { votes[1] } else { 0 };
        Ok(Prediction {
            label,
            vote_fraction: positive as f64 / self.trees.len() as f64,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes")
    }

    pub fn from_json(text: &str) -> Result<Forest, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Trains a bagged forest. Fully deterministic given the config seed,
/// regardless of thread count.
pub fn train_forest(
    features: &[Vec<f64>],
    labels: &[usize],
    config: ForestConfig,
) -> Result<Forest, ForestError> {
    if features.len() != labels.len() {
        return Err(ForestError::LabelLengthMismatch(features.len(), labels.len()));
    }
    if features.len() < 2 {
        return Err(ForestError::EmptyTrainingSet(features.len()));
    }
    let n_features = features[0].len();
    for row in features {
        if row.len() != n_features {
            return Err(ForestError::RaggedFeatures(n_features, row.len()));
        }
    }
    let n_classes = labels.iter().max().map(|m| m + 1).unwrap_or(0);
    {
        let mut seen = vec![false; n_classes];
        for &l in labels {
            seen[l] = true;
        }
        if seen.iter().filter(|s| **s).count() < 2 {
            return Err(ForestError::SingleClass);
        }
    }
    assert!(config.n_trees >= 1 && config.min_leaf >= 1);

    let trees: Vec<Tree> = (0..config.n_trees)
        .into_par_iter()
        .map(|tree_idx| {
            let mut rng = Pcg32::new(config.seed, tree_idx as u64);
            let n = features.len();
            let sample: Vec<usize> = (0..n).map(|_| rng.next_index(n)).collect();
            let mut builder = TreeBuilder {
                features,
                labels,
                n_features,
                n_classes,
                config: &config,
                rng,
                nodes: Vec::new(),
            };
            builder.build(&sample, 0);
            Tree {
                nodes: builder.nodes,
            }
        })
        .collect();

    Ok(Forest {
        trees,
        config,
        n_features,
        n_classes,
    })
}

struct TreeBuilder<'a> {
    features: &'a [Vec<f64>],
    labels: &'a [usize],
    n_features: usize,
    n_classes: usize,
    config: &'a ForestConfig,
    rng: Pcg32,
    nodes: Vec<Node>,
}

struct BestSplit {
    impurity: f64,
    feature: usize,
    threshold: f64,
}

impl TreeBuilder<'_> {
    /// Appends the subtree for `sample` and returns its root index.
    /// Children build left before right so RNG consumption is a pure
    /// function of the data.
    fn build(&mut self, sample: &[usize], depth: usize) -> usize {
        let counts = self.class_counts(sample);
        let n_present = counts.iter().filter(|c| **c > 0).count();
        let depth_reached = self.config.max_depth.map(|d| depth >= d).unwrap_or(false);
        if n_present <= 1 || sample.len() < 2 * self.config.min_leaf || depth_reached {
            return self.push_leaf(counts);
        }
        let split = match self.find_split(sample) {
            Some(s) => s,
            None => return self.push_leaf(counts),
        };
        let (left_sample, right_sample): (Vec<usize>, Vec<usize>) = sample
            .iter()
            .partition(|&&i| self.features[i][split.feature] <= split.threshold);
        let node = self.nodes.len();
        self.nodes.push(Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: 0,
            right: 0,
        });
        let left = self.build(&left_sample, depth + 1);
        let right = self.build(&right_sample, depth + 1);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[node]
        {
            *l = left;
            *r = right;
        }
        node
    }

    fn push_leaf(&mut self, counts: Vec<usize>) -> usize {
        self.nodes.push(Node::Leaf { counts });
        self.nodes.len() - 1
    }

    fn class_counts(&self, sample: &[usize]) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &i in sample {
            counts[self.labels[i]] += 1;
        }
        counts
    }

    fn find_split(&mut self, sample: &[usize]) -> Option<BestSplit> {
        let k = self.config.features_per_split(self.n_features);
        let mut candidates: Vec<usize> = (0..self.n_features).collect();
        for j in 0..k {
            let pick = j + self.rng.next_index(self.n_features - j);
            candidates.swap(j, pick);
        }
        let mut chosen = candidates[..k].to_vec();
        // Ascending evaluation order makes the strict-less-than best
        // comparison implement the documented tie rule.
        chosen.sort_unstable();

        let mut best: Option<BestSplit> = None;
        let min_leaf = self.config.min_leaf;
        let total = sample.len() as f64;
        for feature in chosen {
            let mut ordered: Vec<(f64, usize)> = sample
                .iter()
                .map(|&i| (self.features[i][feature], self.labels[i]))
                .collect();
            ordered.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_counts = vec![0usize; self.n_classes];
            let mut right_counts = self.class_counts(sample);
            let mut n_left = 0usize;
            for idx in 0..ordered.len() - 1 {
                let (value, label) = ordered[idx];
                left_counts[label] += 1;
                right_counts[label] -= 1;
                n_left += 1;
                let next_value = ordered[idx + 1].0;
                if next_value <= value {
                    continue;
                }
                let n_right = ordered.len() - n_left;
                if n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let impurity = (n_left as f64 * gini(&left_counts, n_left)
                    + n_right as f64 * gini(&right_counts, n_right))
                    / total;
                if best.as_ref().map(|b| impurity < b.impurity).unwrap_or(true) {
                    best = Some(BestSplit {
                        impurity,
                        feature,
                        threshold: 0.5 * (value + next_value),
                    });
                }
            }
        }
        best
    }
}

fn gini(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

/// Stream id for cross-validation fold shuffling, disjoint from the
/// per-tree streams 0..n_trees.
pub const CV_FOLD_STREAM: u64 = u64::from_le_bytes(*b"cvfolds\0");

/// Stratified k-fold cross-validation; returns the mean held-out
/// accuracy. Folds are deterministic given the config seed.
pub fn cross_validate(
    features: &[Vec<f64>],
    labels: &[usize],
    config: ForestConfig,
    k_folds: usize,
) -> Result<f64, ForestError> {
    if k_folds < 2 || features.len() < k_folds {
        return Err(ForestError::TooFewSamples {
            required: k_folds.max(2),
            folds: k_folds,
            found: features.len(),
        });
    }
    if features.len() != labels.len() {
        return Err(ForestError::LabelLengthMismatch(features.len(), labels.len()));
    }
    let n_classes = labels.iter().max().map(|m| m + 1).unwrap_or(0);
    let mut rng = Pcg32::new(config.seed, CV_FOLD_STREAM);
    let mut fold_of = vec![0usize; features.len()];
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rng.shuffle(&mut members);
        for (pos, &i) in members.iter().enumerate() {
            fold_of[i] = pos % k_folds;
        }
    }
    let mut accuracies = Vec::with_capacity(k_folds);
    for fold in 0..k_folds {
        let mut train_x = Vec::new();
        let mut train_y = Vec::new();
        let mut test_idx = Vec::new();
        for i in 0..features.len() {
            if fold_of[i] == fold {
                test_idx.push(i);
            } else {
                train_x.push(features[i].clone());
                train_y.push(labels[i]);
            }
        }
        if test_idx.is_empty() {
            continue;
        }
        let model = train_forest(&train_x, &train_y, config)?;
        let correct = test_idx
            .iter()
            .filter(|&&i| model.predict(&features[i]).map(|p| p.label) == Ok(labels[i]))
            .count();
        accuracies.push(correct as f64 / test_idx.len() as f64);
    }
    Ok(accuracies.iter().sum::<f64>() / accuracies.len() as f64)
}
