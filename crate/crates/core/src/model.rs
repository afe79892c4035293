//! Domain types shared by the ingest, tracker, analytics and synth modules.
//!
//! Nothing in here performs I/O; serialization layouts live with the
//! modules that own the corresponding file formats.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of consecutive missed frames a track survives.
pub const DEFAULT_MAX_DISAPPEARED: u32 = 40;
/// Default centroid gate, in pixels.
pub const DEFAULT_MAX_DISTANCE: f64 = 50.0;
/// Live counts at or above this are at least a medium crowd.
pub const DEFAULT_MEDIUM_THRESHOLD: u32 = 15;
/// Live counts above this are a high crowd.
pub const DEFAULT_HIGH_THRESHOLD: u32 = 25;

/// A point in image coordinates (origin top-left, pixels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Euclidean distance to `other`.
    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Which box invariant was broken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum BoxViolation {
    #[error("x1 > x2")]
    XOrder,
    #[error("y1 > y2")]
    YOrder,
    #[error("non-finite {0}")]
    NonFinite(&'static str),
}

/// Axis-aligned box given by its top-left `(x1, y1)` and bottom-right
/// `(x2, y2)` corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    /// Builds a box and checks its invariants.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, BoxViolation> {
        let b = Self { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    /// Checks finiteness first, then corner ordering.
    pub fn validate(&self) -> Result<(), BoxViolation> {
        for (name, v) in [("x1", self.x1), ("y1", self.y1), ("x2", self.x2), ("y2", self.y2)] {
            if !v.is_finite() {
                return Err(BoxViolation::NonFinite(name));
            }
        }
        if self.x1 > self.x2 {
            return Err(BoxViolation::XOrder);
        }
        if self.y1 > self.y2 {
            return Err(BoxViolation::YOrder);
        }
        Ok(())
    }

    pub fn centroid(&self) -> Point {
        Point::new((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum InvalidDetection {
    #[error("invalid box: {0}")]
    Box(#[from] BoxViolation),
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
}

/// One candidate object in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_index: u64,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub class_label: String,
}

impl Detection {
    pub fn new(
        frame_index: u64,
        bbox: BoundingBox,
        confidence: f64,
        class_label: impl Into<String>,
    ) -> Result<Self, InvalidDetection> {
        let d = Self {
            frame_index,
            bbox,
            confidence,
            class_label: class_label.into(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), InvalidDetection> {
        self.bbox.validate()?;
        // also rejects NaN
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(InvalidDetection::Confidence(self.confidence));
        }
        Ok(())
    }

    pub fn centroid(&self) -> Point {
        self.bbox.centroid()
    }
}

/// A persistent identity maintained by the tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub centroid: Point,
    pub last_box: BoundingBox,
    /// Consecutive frames without a matching detection.
    pub disappeared: u32,
    pub last_seen_frame: u64,
}

impl Track {
    pub(crate) fn new(id: u64, bbox: BoundingBox, frame_index: u64) -> Self {
        Self {
            id,
            centroid: bbox.centroid(),
            last_box: bbox,
            disappeared: 0,
            last_seen_frame: frame_index,
        }
    }
}

/// Crowd density level derived from the live person count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DensityLevel {
    #[serde(rename = "normal crowd")]
    Normal,
    #[serde(rename = "medium crowd")]
    Medium,
    #[serde(rename = "high crowd")]
    High,
}

impl DensityLevel {
    pub const ALL: [DensityLevel; 3] = [DensityLevel::Normal, DensityLevel::Medium, DensityLevel::High];

    /// Display label, e.g. `"medium crowd"`.
    pub fn label(self) -> &'static str {
        match self {
            DensityLevel::Normal => "normal crowd",
            DensityLevel::Medium => "medium crowd",
            DensityLevel::High => "high crowd",
        }
    }
}

impl fmt::Display for DensityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Per-frame output record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    #[serde(rename = "frame")]
    pub frame_index: u64,
    #[serde(rename = "live")]
    pub live_count: usize,
    #[serde(rename = "total")]
    pub total_count: u64,
    pub fps: f64,
    pub density: DensityLevel,
    #[serde(rename = "ids")]
    pub active_track_ids: Vec<u64>,
    /// Set when fps was requested before the clock advanced; `fps` is 0.0 then.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub warming_up: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("max_disappeared must be positive")]
    MaxDisappeared,
    #[error("max_distance must be positive and finite, got {0}")]
    MaxDistance(f64),
    #[error("density thresholds must be positive")]
    ZeroThreshold,
    #[error("medium threshold {medium} exceeds high threshold {high}")]
    ThresholdOrder { medium: u32, high: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Missed frames a track survives before it is retired.
    pub max_disappeared: u32,
    /// Largest centroid distance at which a detection can continue a track.
    pub max_distance: f64,
}

impl TrackerConfig {
    pub fn new(max_disappeared: u32, max_distance: f64) -> Result<Self, ConfigError> {
        let c = Self {
            max_disappeared,
            max_distance,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_disappeared == 0 {
            return Err(ConfigError::MaxDisappeared);
        }
        if !(self.max_distance.is_finite() && self.max_distance > 0.0) {
            return Err(ConfigError::MaxDistance(self.max_distance));
        }
        Ok(())
    }
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            max_disappeared: DEFAULT_MAX_DISAPPEARED,
            max_distance: DEFAULT_MAX_DISTANCE,
        }
    }
}

/// Thresholds splitting live counts into density levels:
/// `live < medium` is normal, `medium <= live <= high` is medium,
/// anything above `high` is high.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub medium_threshold: u32,
    pub high_threshold: u32,
}

impl DensityConfig {
    pub fn new(medium_threshold: u32, high_threshold: u32) -> Result<Self, ConfigError> {
        let c = Self {
            medium_threshold,
            high_threshold,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.medium_threshold == 0 || self.high_threshold == 0 {
            return Err(ConfigError::ZeroThreshold);
        }
        if self.medium_threshold > self.high_threshold {
            return Err(ConfigError::ThresholdOrder {
                medium: self.medium_threshold,
                high: self.high_threshold,
            });
        }
        Ok(())
    }
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            medium_threshold: DEFAULT_MEDIUM_THRESHOLD,
            high_threshold: DEFAULT_HIGH_THRESHOLD,
        }
    }
}
