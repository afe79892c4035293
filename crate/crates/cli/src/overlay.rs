//! Drawing instructions for annotating video frames.
//!
//! Rendering is left to the consumer: each frame yields one `box` record per
//! tracked person and one `label` record carrying the density text.

use crowd_core::{FrameStats, TrackerState};
use serde::{Deserialize, Serialize};

/// Where the density label is anchored, in pixels from the top-left corner.
pub const DEFAULT_LABEL_ANCHOR: (i64, i64) = (80, 300);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OverlayRecord {
    Box {
        frame: u64,
        id: u64,
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
    },
    Label {
        frame: u64,
        text: String,
        x: i64,
        y: i64,
    },
}

/// Overlay records for the frame described by `stats`, taking box
/// geometry from the tracker that produced it.
pub fn emit_overlay(stats: &FrameStats, tracker: &TrackerState, anchor: (i64, i64)) -> Vec<OverlayRecord> {
    let mut out: Vec<OverlayRecord> = stats
        .active_track_ids
        .iter()
        .filter_map(|id| tracker.track(*id))
        .map(|t| OverlayRecord::Box {
            frame: stats.frame_index,
            id: t.id,
            x1: t.last_box.x1,
            y1: t.last_box.y1,
            x2: t.last_box.x2,
            y2: t.last_box.y2,
        })
        .collect();
    out.push(OverlayRecord::Label {
        frame: stats.frame_index,
        text: stats.density.label().to_string(),
        x: anchor.0,
        y: anchor.1,
    });
    out
}
