//! Detection and timing analysis of dyadic (exactly-two-speaker)
//! interactions in long diarized audio timelines.
//!
//! The crate takes diarized speech segments and per-segment speaker
//! embeddings as input and provides:
//!
//! - [`timeline`]: the segment/timeline data model and fixed
//!   ten-minute windowing;
//! - [`io`]: RTTM, embedding-table, and corpus-manifest formats;
//! - [`clustering`]: average-linkage agglomerative clustering of
//!   embeddings under cosine distance, with threshold tuning;
//! - [`spurious`]: screening of spuriously detected speaker clusters;
//! - [`detect`]: speaker-count binarization, ground-truth labeling,
//!   and detection metrics;
//! - [`baseline`]: the timing-statistics random-forest baseline
//!   detector;
//! - [`forest`]: the deterministic random-forest learner behind both
//!   classifiers;
//! - [`interaction`]: dyadic ratio, target-speaker identification,
//!   and pause/response timing features;
//! - [`stats`]: Pearson correlations, Welch t-tests, and group
//!   summaries;
//! - [`synth`]: deterministic synthetic corpora for end-to-end,
//!   oracle-verifiable evaluation;
//! - [`pipeline`]: the compositions the CLI exposes.

pub mod baseline;
pub mod clustering;
pub mod detect;
pub mod forest;
pub mod interaction;
pub mod io;
pub mod pipeline;
pub mod rng;
pub mod spurious;
pub mod stats;
pub mod synth;
pub mod timeline;

pub use detect::{DetectionMetrics, DyadicVerdict};
pub use interaction::{ParticipantProfile, TimingFeatures, WindowVerdict};
pub use io::{CorpusManifest, EmbeddingTable};
pub use timeline::{SpeechSegment, Timeline, Window};
