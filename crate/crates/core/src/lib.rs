//! Streaming edge anomaly detection with graph autoencoder embeddings and
//! half-space tree forests.
//!
//! Typical flow: train an [`EncoderModel`] on a prefix of the stream with
//! [`train_gae`], initialize node and edge [`Forests`] from training
//! embeddings, then feed edges through a [`Pipeline`]. Labeled validation
//! scores pick a decision threshold via [`fit_threshold`].

pub mod cache;
pub mod embed;
pub mod error;
pub mod graph;
pub mod hst;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod streamgen;
pub mod threshold;
pub mod train;

pub use cache::{CachePolicy, ScoreCache};
pub use embed::{EdgeCombinator, EncoderConfig, EncoderModel, Scaler};
pub use error::{Error, Result};
pub use graph::{FeatureProvider, OrderPolicy, TemporalEdge, TemporalGraph, Timestamp};
pub use hst::{ForestParams, HalfSpaceForest, Mode};
pub use metrics::{average_precision, roc_auc, thresholded_metrics, EvalResult};
pub use pipeline::{Forests, Pipeline, PipelineConfig, ScoreRecord, Weights};
pub use streamgen::{generate, StreamSpec};
pub use threshold::{classify, fit_threshold, ThresholdReport};
pub use train::{train_gae, TrainConfig};
