//! Centroid tracker.
//!
//! Each update pairs existing tracks with the frame's detections by
//! Euclidean centroid distance. Candidate pairs are sorted ascending by
//! `(distance, track_id, detection_index)` and accepted greedily while both
//! sides are still free and the distance is within `max_distance`.
//! Unmatched detections start new tracks; unmatched tracks accumulate
//! missed frames and are retired once they exceed `max_disappeared`.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ConfigError, Detection, InvalidDetection, Track, TrackerConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("frame {frame} does not follow previously updated frame {previous}")]
    FrameOrder { frame: u64, previous: u64 },
    #[error("detection {index}: {source}")]
    InvalidDetection { index: usize, source: InvalidDetection },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub track_id: u64,
    pub detection_index: usize,
    pub distance: f64,
}

/// What one update did, in a form that can be logged or replayed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameUpdateResult {
    /// Accepted pairs in acceptance order.
    pub matches: Vec<Match>,
    /// Ids registered this frame, in ascending detection index order.
    pub new_ids: Vec<u64>,
    /// Ids retired this frame, ascending.
    pub retired_ids: Vec<u64>,
}

impl FrameUpdateResult {
    /// Track id assigned to each detection of the frame, indexed by
    /// detection position.
    pub fn assignments(&self, n_detections: usize) -> Vec<u64> {
        let mut out = vec![u64::MAX; n_detections];
        for m in &self.matches {
            out[m.detection_index] = m.track_id;
        }
        let mut fresh = self.new_ids.iter();
        for slot in out.iter_mut().filter(|s| **s == u64::MAX) {
            *slot = *fresh.next().expect("one new id per unmatched detection");
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    tracks: BTreeMap<u64, Track>,
    next_id: u64,
    config: TrackerConfig,
    last_frame: Option<u64>,
}

impl TrackerState {
    pub fn new(config: TrackerConfig) -> Result<Self, TrackerError> {
        config.validate()?;
        Ok(Self {
            tracks: BTreeMap::new(),
            next_id: 0,
            config,
            last_frame: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Tracks currently held, ascending by id. Includes tracks in their
    /// grace period.
    pub fn tracks(&self) -> impl Iterator<Item = &Track> {
        self.tracks.values()
    }

    pub fn track(&self, id: u64) -> Option<&Track> {
        self.tracks.get(&id)
    }

    pub fn active_track_ids(&self) -> Vec<u64> {
        self.tracks.keys().copied().collect()
    }

    /// Number of people currently tracked, occluded ones included.
    pub fn live_count(&self) -> usize {
        self.tracks.len()
    }

    /// Number of ids ever issued.
    pub fn total_count(&self) -> u64 {
        self.next_id
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.last_frame
    }

    /// Advances the tracker by one frame. On error the state is unchanged.
    pub fn update(&mut self, frame_index: u64, detections: &[Detection]) -> Result<FrameUpdateResult, TrackerError> {
        if let Some(previous) = self.last_frame {
            if frame_index <= previous {
                return Err(TrackerError::FrameOrder {
                    frame: frame_index,
                    previous,
                });
            }
        }
        for (index, d) in detections.iter().enumerate() {
            d.validate()
                .map_err(|source| TrackerError::InvalidDetection { index, source })?;
        }
        self.last_frame = Some(frame_index);

        let centroids: Vec<_> = detections.iter().map(Detection::centroid).collect();
        let mut pairs: Vec<Match> = Vec::with_capacity(self.tracks.len() * centroids.len());
        for track in self.tracks.values() {
            for (detection_index, c) in centroids.iter().enumerate() {
                pairs.push(Match {
                    track_id: track.id,
                    detection_index,
                    distance: track.centroid.distance(c),
                });
            }
        }
        pairs.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then(a.track_id.cmp(&b.track_id))
                .then(a.detection_index.cmp(&b.detection_index))
        });

        let mut result = FrameUpdateResult::default();
        let mut detection_used = vec![false; detections.len()];
        let mut track_used = HashSet::new();
        for pair in pairs {
            if pair.distance > self.config.max_distance {
                break;
            }
            if detection_used[pair.detection_index] || track_used.contains(&pair.track_id) {
                continue;
            }
            detection_used[pair.detection_index] = true;
            track_used.insert(pair.track_id);
            result.matches.push(pair);
        }

        for m in &result.matches {
            let det = &detections[m.detection_index];
            let track = self.tracks.get_mut(&m.track_id).expect("matched track exists");
            track.last_box = det.bbox;
            track.centroid = centroids[m.detection_index];
            track.last_seen_frame = frame_index;
            track.disappeared = 0;
        }

        let max_disappeared = self.config.max_disappeared;
        for track in self.tracks.values_mut() {
            if !track_used.contains(&track.id) {
                track.disappeared += 1;
                if track.disappeared > max_disappeared {
                    result.retired_ids.push(track.id);
                }
            }
        }
        for id in &result.retired_ids {
            self.tracks.remove(id);
        }

        // Registered after retirement so fresh tracks never count a miss in
        // the frame they appear.
        for (i, det) in detections.iter().enumerate() {
            if !detection_used[i] {
                let id = self.next_id;
                self.next_id += 1;
                self.tracks.insert(id, Track::new(id, det.bbox, frame_index));
                result.new_ids.push(id);
            }
        }
        Ok(result)
    }
}
