//! Per-frame statistics: density level, throughput and the assembled
//! [`FrameStats`] record.

use std::time::Instant;

use thiserror::Error;

use crate::model::{DensityConfig, DensityLevel, FrameStats};
use crate::tracker::TrackerState;

/// Maps a live person count onto a density level.
pub fn classify_density(live_count: u64, config: &DensityConfig) -> DensityLevel {
    if live_count < config.medium_threshold as u64 {
        DensityLevel::Normal
    } else if live_count <= config.high_threshold as u64 {
        DensityLevel::Medium
    } else {
        DensityLevel::High
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum FpsError {
    #[error("fps undefined before time advances")]
    NotAdvanced,
    #[error("invalid elapsed time {0} s")]
    InvalidElapsed(f64),
    #[error("replay rate must be positive and finite, got {0}")]
    InvalidRate(f64),
}

/// `total_frames / elapsed_secs`.
pub fn fps_from(total_frames: u64, elapsed_secs: f64) -> Result<f64, FpsError> {
    if elapsed_secs.is_nan() || elapsed_secs < 0.0 {
        return Err(FpsError::InvalidElapsed(elapsed_secs));
    }
    if elapsed_secs == 0.0 {
        return Err(FpsError::NotAdvanced);
    }
    Ok(total_frames as f64 / elapsed_secs)
}

/// Cumulative frames-per-second since the meter started.
///
/// When `elapsed_override` is set it replaces the wall clock. A replay
/// meter keeps the override at `total_frames / rate` so file replays report
/// their nominal rate.
#[derive(Debug, Clone)]
pub struct FpsMeter {
    pub total_frames: u64,
    pub start_time: Instant,
    pub elapsed_override: Option<f64>,
    replay_rate: Option<f64>,
}

impl FpsMeter {
    pub fn new(start_time: Instant) -> Self {
        Self {
            total_frames: 0,
            start_time,
            elapsed_override: None,
            replay_rate: None,
        }
    }

    /// Meter whose clock advances `1 / rate` seconds per frame.
    pub fn replay(rate: f64) -> Result<Self, FpsError> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(FpsError::InvalidRate(rate));
        }
        Ok(Self {
            elapsed_override: Some(0.0),
            replay_rate: Some(rate),
            ..Self::start_now()
        })
    }

    pub fn start_now() -> Self {
        Self::new(Instant::now())
    }

    /// Meter with a fixed frame count and elapsed time.
    pub fn with_elapsed(total_frames: u64, elapsed_secs: f64) -> Self {
        Self {
            total_frames,
            start_time: Instant::now(),
            elapsed_override: Some(elapsed_secs),
            replay_rate: None,
        }
    }

    pub fn tick(&mut self) {
        self.total_frames += 1;
        if let Some(rate) = self.replay_rate {
            self.elapsed_override = Some(self.total_frames as f64 / rate);
        }
    }

    pub fn elapsed_secs(&self, now: Instant) -> f64 {
        self.elapsed_override
            .unwrap_or_else(|| now.saturating_duration_since(self.start_time).as_secs_f64())
    }

    pub fn fps(&self, now: Instant) -> Result<f64, FpsError> {
        let fps = fps_from(self.total_frames, self.elapsed_secs(now))?;
        // n / (n / rate) is rate in exact arithmetic; skip the double rounding
        Ok(self.replay_rate.unwrap_or(fps))
    }
}

/// Builds the statistics record for a frame the tracker has just processed.
/// If the meter cannot produce a rate yet, `fps` is 0.0 and `warming_up` is
/// set.
pub fn assemble_frame_stats(
    frame_index: u64,
    tracker: &TrackerState,
    meter: &FpsMeter,
    now: Instant,
    density: &DensityConfig,
) -> FrameStats {
    let (fps, warming_up) = match meter.fps(now) {
        Ok(fps) => (fps, false),
        Err(_) => (0.0, true),
    };
    let active_track_ids = tracker.active_track_ids();
    let live_count = active_track_ids.len();
    FrameStats {
        frame_index,
        live_count,
        total_count: tracker.total_count(),
        fps,
        density: classify_density(live_count as u64, density),
        active_track_ids,
        warming_up,
    }
}
