//! Crowd analytics over per-frame person detections.
//!
//! The crate turns detection records into tracked identities ([`tracker`]),
//! folds tracker state into per-frame statistics ([`analytics`]), and ships
//! the evaluation tooling used to predict people counts from tabular
//! datasets ([`regression`]). [`synth`] generates reproducible synthetic
//! scenes with ground truth for exercising the whole pipeline.

pub mod analytics;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod regression;
pub mod rng;
pub mod synth;
pub mod tracker;

pub use analytics::{assemble_frame_stats, classify_density, FpsError, FpsMeter};
pub use ingest::{
    filter_persons, load_count_dataset, parse_detection_stream, CountDataset, CountRecord, FrameGroup, FrameGrouper,
    IngestError, RawDetectionRecord,
};
pub use model::{
    BoundingBox, BoxViolation, ConfigError, DensityConfig, DensityLevel, Detection, FrameStats, Point, Track,
    TrackerConfig,
};
pub use pipeline::{FrameOutput, Pipeline};
pub use tracker::{FrameUpdateResult, Match, TrackerError, TrackerState};
