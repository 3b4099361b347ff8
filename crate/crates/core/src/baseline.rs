//! The baseline dyadic detector: four segment-timing statistics fed to
//! a 51-tree random forest. No speaker inference involved; the point
//! of comparison for the embedding pipeline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{DetectorKind, DyadicVerdict};
use crate::forest::{train_forest, Forest, ForestConfig, ForestError, DEFAULT_N_TREES};
use crate::timeline::Timeline;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("need at least 2 segments to compute gap statistics, found {0}")]
    TooFewSegments(usize),
    #[error("training set contains a single class")]
    SingleClassTrainingSet,
    #[error(transparent)]
    Forest(#[from] ForestError),
}

/// Mean and population standard deviation of segment lengths and of
/// inter-segment gaps.
///
/// Gaps between consecutive sorted segments clamp at zero when
/// segments overlap. The population (n-denominator) deviation keeps
/// the statistic defined for two segments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadFeatureVector {
    pub mean_seg_len: f64,
    pub std_seg_len: f64,
    pub mean_gap: f64,
    pub std_gap: f64,
}

impl VadFeatureVector {
    pub fn to_vector(&self) -> Vec<f64> {
        vec![self.mean_seg_len, self.std_seg_len, self.mean_gap, self.std_gap]
    }
}

fn population_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Computes the four baseline features from a (sorted) timeline.
pub fn compute_vad_features(timeline: &Timeline) -> Result<VadFeatureVector, BaselineError> {
    let segments = &timeline.segments;
    if segments.len() < 2 {
        return Err(BaselineError::TooFewSegments(segments.len()));
    }
    let lengths: Vec<f64> = segments.iter().map(|s| s.duration).collect();
    let gaps: Vec<f64> = segments
        .windows(2)
        .map(|pair| (pair[1].onset - pair[0].end()).max(0.0))
        .collect();
    let (mean_seg_len, std_seg_len) = population_stats(&lengths);
    let (mean_gap, std_gap) = population_stats(&gaps);
    Ok(VadFeatureVector {
        mean_seg_len,
        std_seg_len,
        mean_gap,
        std_gap,
    })
}

/// The trained baseline detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub forest: Forest,
}

impl BaselineModel {
    pub fn to_json(&self) -> String {
        self.forest.to_json()
    }

    pub fn from_json(text: &str) -> Result<BaselineModel, serde_json::Error> {
        Ok(BaselineModel {
            forest: Forest::from_json(text)?,
        })
    }
}

/// Trains the 51-tree forest on labeled feature vectors (true =
/// dyadic).
pub fn train_baseline(
    features: &[VadFeatureVector],
    labels: &[bool],
    seed: u64,
) -> Result<BaselineModel, BaselineError> {
    let rows: Vec<Vec<f64>> = features.iter().map(VadFeatureVector::to_vector).collect();
    let classes: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let config = ForestConfig {
        n_trees: DEFAULT_N_TREES,
        seed,
        ..ForestConfig::default()
    };
    match train_forest(&rows, &classes, config) {
        Ok(forest) => Ok(BaselineModel { forest }),
        Err(ForestError::SingleClass) => Err(BaselineError::SingleClassTrainingSet),
        Err(other) => Err(other.into()),
    }
}

/// Majority vote over the forest; the vote fraction is the share of
/// trees voting dyadic.
pub fn predict_baseline(
    model: &BaselineModel,
    features: &VadFeatureVector,
) -> Result<(DyadicVerdict, f64), BaselineError> {
    let p = model.forest.predict(&features.to_vector())?;
    Ok((
        DyadicVerdict {
            is_dyadic: p.label == 1,
            n_speakers_detected: None,
            source: DetectorKind::Baseline,
        },
        p.vote_fraction,
    ))
}
