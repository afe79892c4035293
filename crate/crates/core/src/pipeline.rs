//! Detection groups in, frame statistics out: the person filter, tracker,
//! FPS meter and density classifier chained for one stream.

use std::time::Instant;

use thiserror::Error;

use crate::analytics::{assemble_frame_stats, FpsError, FpsMeter};
use crate::ingest::{FrameGroup, IngestError, PersonFilter};
use crate::model::{ConfigError, DensityConfig, Detection, FrameStats, TrackerConfig};
use crate::tracker::{FrameUpdateResult, TrackerError, TrackerState};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fps(#[from] FpsError),
}

/// Everything produced for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub stats: FrameStats,
    pub update: FrameUpdateResult,
    /// Detections that passed the filter, in the order the tracker saw them.
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    filter: PersonFilter,
    tracker: TrackerState,
    meter: FpsMeter,
    density: DensityConfig,
}

impl Pipeline {
    /// With `replay_fps` set, reported fps is that nominal rate; otherwise it
    /// is measured against the wall clock from construction time.
    pub fn new(tracker: TrackerConfig, density: DensityConfig, replay_fps: Option<f64>) -> Result<Self, PipelineError> {
        density.validate()?;
        let meter = match replay_fps {
            Some(rate) => FpsMeter::replay(rate)?,
            None => FpsMeter::start_now(),
        };
        Ok(Self {
            filter: PersonFilter::default(),
            tracker: TrackerState::new(tracker)?,
            meter,
            density,
        })
    }

    pub fn with_filter(mut self, filter: PersonFilter) -> Self {
        self.filter = filter;
        self
    }

    pub fn tracker(&self) -> &TrackerState {
        &self.tracker
    }

    pub fn meter(&self) -> &FpsMeter {
        &self.meter
    }

    pub fn process(&mut self, group: &FrameGroup) -> Result<FrameOutput, PipelineError> {
        self.process_at(group, Instant::now())
    }

    pub fn process_at(&mut self, group: &FrameGroup, now: Instant) -> Result<FrameOutput, PipelineError> {
        let detections = self.filter.apply(&group.records)?;
        let update = self.tracker.update(group.frame_index, &detections)?;
        self.meter.tick();
        let stats = assemble_frame_stats(group.frame_index, &self.tracker, &self.meter, now, &self.density);
        Ok(FrameOutput {
            stats,
            update,
            detections,
        })
    }

    /// Runs every group, stopping at the first error.
    pub fn run<'a>(
        &mut self,
        groups: impl IntoIterator<Item = &'a FrameGroup>,
    ) -> Result<Vec<FrameOutput>, PipelineError> {
        groups.into_iter().map(|g| self.process(g)).collect()
    }
}
