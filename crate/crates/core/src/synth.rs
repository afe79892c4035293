//! Synthetic crowd scenes with ground truth.
//!
//! A scene script lists actors, each walking a piecewise-linear path
//! between waypoints while it is on screen. Generation renders the script
//! into a detection stream (one box per visible actor per frame) and the
//! matching ground-truth tables. Output is a pure function of the script:
//! the only randomness comes from [`Xorshift64Star`] seeded by
//! `noise.seed`, and every real number is written with three decimals.
//!
//! Per frame, actors are visited in script order and each visible actor
//! draws, in this order: a miss uniform, a jitter normal pair, and a
//! confidence uniform. All four draws happen even when noise is disabled so
//! that changing one noise knob does not reshuffle the others.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{RawDetectionRecord, PERSON_LABEL};
use crate::pipeline::FrameOutput;
use crate::rng::Xorshift64Star;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("actor {actor_id}: {reason}")]
    InvalidActor { actor_id: u64, reason: String },
    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),
    #[error("scene script: {0}")]
    Json(#[from] serde_json::Error),
    #[error("frame range mismatch: {0}")]
    RangeMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: u64,
    pub x: f64,
    pub y: f64,
}

fn default_box_size() -> (f64, f64) {
    (40.0, 80.0)
}

/// One on-screen interval of an actor. An actor may appear in several
/// scripts as long as their intervals do not overlap; each script after the
/// first is a re-entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorScript {
    pub actor_id: u64,
    pub enter_frame: u64,
    pub exit_frame: u64,
    pub waypoints: Vec<Waypoint>,
    #[serde(default = "default_box_size")]
    pub box_size: (f64, f64),
}

impl ActorScript {
    fn invalid(&self, reason: impl Into<String>) -> SynthError {
        SynthError::InvalidActor {
            actor_id: self.actor_id,
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.enter_frame > self.exit_frame {
            return Err(self.invalid("enter_frame after exit_frame"));
        }
        if self.waypoints.is_empty() {
            return Err(self.invalid("no waypoints"));
        }
        for pair in self.waypoints.windows(2) {
            if pair[1].frame <= pair[0].frame {
                return Err(self.invalid(format!(
                    "waypoint frames must strictly increase ({} then {})",
                    pair[0].frame, pair[1].frame
                )));
            }
        }
        let (first, last) = (self.waypoints[0].frame, self.waypoints[self.waypoints.len() - 1].frame);
        if first < self.enter_frame || last > self.exit_frame {
            return Err(self.invalid("waypoint outside [enter_frame, exit_frame]"));
        }
        if self.waypoints.iter().any(|w| !(w.x.is_finite() && w.y.is_finite())) {
            return Err(self.invalid("non-finite waypoint"));
        }
        let (w, h) = self.box_size;
        if !(w.is_finite() && h.is_finite() && w >= 0.0 && h >= 0.0) {
            return Err(self.invalid("box size must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn is_active(&self, frame: u64) -> bool {
        (self.enter_frame..=self.exit_frame).contains(&frame)
    }

    /// Position at `frame`, linearly interpolated between the surrounding
    /// waypoints and held constant before the first and after the last.
    pub fn position(&self, frame: u64) -> (f64, f64) {
        let wp = &self.waypoints;
        let next = wp.partition_point(|w| w.frame <= frame);
        if next == 0 {
            return (wp[0].x, wp[0].y);
        }
        if next == wp.len() {
            let last = wp[wp.len() - 1];
            return (last.x, last.y);
        }
        let (a, b) = (wp[next - 1], wp[next]);
        let t = (frame - a.frame) as f64 / (b.frame - a.frame) as f64;
        (a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
    }
}

fn default_confidence_range() -> (f64, f64) {
    (0.9, 0.9)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub position_jitter_std: f64,
    #[serde(default)]
    pub miss_probability: f64,
    /// Generated confidences are uniform in this range; the lower end must
    /// exceed 0.5 so every emitted box survives the person filter.
    #[serde(default = "default_confidence_range")]
    pub confidence_range: (f64, f64),
    #[serde(default)]
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            position_jitter_std: 0.0,
            miss_probability: 0.0,
            confidence_range: default_confidence_range(),
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidNoise(m.to_string()));
        if !(self.position_jitter_std.is_finite() && self.position_jitter_std >= 0.0) {
            return bad("position_jitter_std must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.miss_probability) {
            return bad("miss_probability must lie in [0, 1)");
        }
        let (lo, hi) = self.confidence_range;
        if !(lo > 0.5 && lo <= hi && hi <= 1.0) {
            return bad("confidence_range must satisfy 0.5 < lo <= hi <= 1");
        }
        Ok(())
    }
}

/// Scene script file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScript {
    pub actors: Vec<ActorScript>,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub n_frames: u64,
}

impl SceneScript {
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let script: SceneScript = serde_json::from_str(text)?;
        script.validate()?;
        Ok(script)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.noise.validate()?;
        let mut by_actor: HashMap<u64, Vec<&ActorScript>> = HashMap::new();
        for a in &self.actors {
            a.validate()?;
            by_actor.entry(a.actor_id).or_default().push(a);
        }
        for (id, mut spans) in by_actor {
            spans.sort_by_key(|a| a.enter_frame);
            if spans.windows(2).any(|p| p[1].enter_frame <= p[0].exit_frame) {
                return Err(SynthError::InvalidActor {
                    actor_id: id,
                    reason: "overlapping on-screen intervals".into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub frame: u64,
    pub actor_id: u64,
    pub x: f64,
    pub y: f64,
}

/// Rendered scene. Reals are already rounded to three decimals.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub n_frames: u64,
    pub detections: Vec<RawDetectionRecord>,
    pub ground_truth: Vec<GroundTruthRow>,
    /// True number of visible actors for every frame in `0..n_frames`.
    pub true_counts: Vec<u64>,
}

fn round3(v: f64) -> f64 {
    let r: f64 = format!("{v:.3}").parse().expect("formatted float parses");
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Renders `script`. Actors are clipped to `0..n_frames`.
pub fn generate_scene(script: &SceneScript) -> Result<Scene, SynthError> {
    script.validate()?;
    let noise = &script.noise;
    let mut rng = Xorshift64Star::new(noise.seed);
    let mut scene = Scene {
        n_frames: script.n_frames,
        detections: Vec::new(),
        ground_truth: Vec::new(),
        true_counts: Vec::with_capacity(script.n_frames as usize),
    };
    for frame in 0..script.n_frames {
        let mut present = 0;
        for actor in script.actors.iter().filter(|a| a.is_active(frame)) {
            present += 1;
            let (x, y) = actor.position(frame);
            scene.ground_truth.push(GroundTruthRow {
                frame,
                actor_id: actor.actor_id,
                x: round3(x),
                y: round3(y),
            });

            let missed = rng.next_f64() < noise.miss_probability;
            let (jx, jy) = rng.normal_pair();
            let confidence = rng.uniform(noise.confidence_range.0, noise.confidence_range.1);
            if missed {
                continue;
            }
            let cx = x + jx * noise.position_jitter_std;
            let cy = y + jy * noise.position_jitter_std;
            let (w, h) = actor.box_size;
            scene.detections.push(RawDetectionRecord {
                frame,
                x1: round3(cx - w / 2.0),
                y1: round3(cy - h / 2.0),
                x2: round3(cx + w / 2.0),
                y2: round3(cy + h / 2.0),
                confidence: round3(confidence.min(1.0)),
                label: PERSON_LABEL.to_string(),
            });
        }
        scene.true_counts.push(present);
    }
    Ok(scene)
}

impl Scene {
    /// Detection stream as JSON Lines, three decimals per real.
    pub fn detections_jsonl(&self) -> String {
        let mut out = String::new();
        for d in &self.detections {
            writeln!(
                out,
                r#"{{"frame":{},"x1":{:.3},"y1":{:.3},"x2":{:.3},"y2":{:.3},"confidence":{:.3},"label":{}}}"#,
                d.frame,
                d.x1,
                d.y1,
                d.x2,
                d.y2,
                d.confidence,
                serde_json::to_string(&d.label).expect("string serializes")
            )
            .expect("write to String");
        }
        out
    }

    /// `frame,actor_id,x,y` table.
    pub fn ground_truth_csv(&self) -> String {
        let mut out = String::from("frame,actor_id,x,y\n");
        for r in &self.ground_truth {
            writeln!(out, "{},{},{:.3},{:.3}", r.frame, r.actor_id, r.x, r.y).expect("write to String");
        }
        out
    }

    /// `frame,true_count` table.
    pub fn true_counts_csv(&self) -> String {
        let mut out = String::from("frame,true_count\n");
        for (frame, c) in self.true_counts.iter().enumerate() {
            writeln!(out, "{frame},{c}").expect("write to String");
        }
        out
    }

    pub fn n_actors(&self) -> usize {
        self.ground_truth
            .iter()
            .map(|r| r.actor_id)
            .collect::<BTreeSet<_>>()
            .len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameCountError {
    pub frame: u64,
    pub live: usize,
    pub true_present: u64,
    pub error: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    /// Actors whose matched track id changed at least once.
    pub id_switches: usize,
    /// Total number of id changes over all actors.
    pub id_switch_events: usize,
    pub count_errors: Vec<FrameCountError>,
    pub total_count: u64,
    pub n_actors: usize,
    pub total_error: u64,
    pub uncovered_frames: u64,
}

impl Scorecard {
    pub fn max_count_error(&self) -> u64 {
        self.count_errors.iter().map(|e| e.error).max().unwrap_or(0)
    }
}

/// Compares a pipeline run against the scene it was generated from.
///
/// Ground-truth actors are paired with the frame's detections greedily by
/// centroid distance (at most `gate` pixels), and through the update result
/// with the track id that claimed each detection. Scene frames the run did
/// not cover (a stream starts at its first detection) are skipped and
/// counted in `uncovered_frames`.
pub fn score_tracking(scene: &Scene, frames: &[FrameOutput], gate: f64) -> Result<Scorecard, SynthError> {
    let mut previous = None;
    for f in frames {
        let frame = f.stats.frame_index;
        if frame >= scene.n_frames || previous.is_some_and(|p| frame <= p) {
            return Err(SynthError::RangeMismatch(format!(
                "run frame {frame} is out of order or outside the scene's {} frames",
                scene.n_frames
            )));
        }
        previous = Some(frame);
    }

    let mut truth_by_frame: BTreeMap<u64, Vec<&GroundTruthRow>> = BTreeMap::new();
    for row in &scene.ground_truth {
        truth_by_frame.entry(row.frame).or_default().push(row);
    }

    let mut last_track: HashMap<u64, u64> = HashMap::new();
    let mut switched: BTreeSet<u64> = BTreeSet::new();
    let mut id_switch_events = 0;
    let mut count_errors = Vec::with_capacity(frames.len());
    for out in frames {
        let frame = out.stats.frame_index;
        let truth = truth_by_frame.get(&frame).map(Vec::as_slice).unwrap_or(&[]);
        let assigned = out.update.assignments(out.detections.len());

        let mut pairs = Vec::new();
        for (ti, t) in truth.iter().enumerate() {
            for (di, d) in out.detections.iter().enumerate() {
                let c = d.centroid();
                let dist = (c.x - t.x).hypot(c.y - t.y);
                if dist <= gate {
                    pairs.push((dist, ti, di));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut truth_used = vec![false; truth.len()];
        let mut det_used = vec![false; out.detections.len()];
        for (_, ti, di) in pairs {
            if truth_used[ti] || det_used[di] {
                continue;
            }
            truth_used[ti] = true;
            det_used[di] = true;
            let actor = truth[ti].actor_id;
            let track = assigned[di];
            if let Some(prev) = last_track.insert(actor, track) {
                if prev != track {
                    id_switch_events += 1;
                    switched.insert(actor);
                }
            }
        }

        let true_present = scene.true_counts[frame as usize];
        let live = out.stats.live_count;
        count_errors.push(FrameCountError {
            frame,
            live,
            true_present,
            error: (live as u64).abs_diff(true_present),
        });
    }

    let total_count = frames.last().map_or(0, |f| f.stats.total_count);
    let n_actors = scene.n_actors();
    Ok(Scorecard {
        id_switches: switched.len(),
        id_switch_events,
        count_errors,
        total_count,
        n_actors,
        total_error: total_count.abs_diff(n_actors as u64),
        uncovered_frames: scene.n_frames - frames.len() as u64,
    })
}

/// Noiseless scene of `n_actors` people, one per cell of a square-ish grid
/// with `spacing` pixels between cell centres. Each actor enters at a random
/// frame in the first half of the scene, stays until the last frame, and
/// wanders within `wander` pixels of its cell centre, changing direction
/// every 10 frames, so it moves at most `wander / 5` pixels per frame.
/// Actors are always at least `spacing - 2 * wander` apart.
pub fn grid_scene(n_actors: usize, n_frames: u64, spacing: f64, wander: f64, seed: u64) -> SceneScript {
    let mut rng = Xorshift64Star::new(seed);
    let cols = (n_actors as f64).sqrt().ceil().max(1.0) as usize;
    let last = n_frames.saturating_sub(1);
    let actors = (0..n_actors)
        .map(|i| {
            let (cx, cy) = (spacing * (1 + i % cols) as f64, spacing * (1 + i / cols) as f64);
            let enter = rng.below(n_frames / 2 + 1).min(last);
            let mut waypoints = Vec::new();
            let mut frame = enter;
            loop {
                let (x, y) = match waypoints.last() {
                    // a clamped final leg holds still rather than sprinting
                    Some(&Waypoint { frame: prev, x, y }) if frame - prev < 10 => (x, y),
                    _ => (cx + rng.uniform(-wander, wander), cy + rng.uniform(-wander, wander)),
                };
                waypoints.push(Waypoint { frame, x, y });
                if frame >= last {
                    break;
                }
                frame = (frame + 10).min(last);
            }
            ActorScript {
                actor_id: i as u64,
                enter_frame: enter,
                exit_frame: last,
                waypoints,
                box_size: (40.0, 90.0),
            }
        })
        .collect();
    SceneScript {
        actors,
        noise: NoiseSpec::default(),
        n_frames,
    }
}

/// Count dataset CSV (`id,count`) where `count = round(slope * index + e)`
/// clamped at zero, with `e` normal with standard deviation
/// `noise_fraction * slope * (n_rows - 1)`, i.e. a fraction of the
/// noiseless range.
pub fn linear_count_dataset(n_rows: usize, slope: f64, noise_fraction: f64, seed: u64) -> String {
    let mut rng = Xorshift64Star::new(seed);
    let std = noise_fraction * slope * n_rows.saturating_sub(1) as f64;
    let mut out = String::from("id,count\n");
    for i in 0..n_rows {
        let e = rng.normal_pair().0 * std;
        let count = (slope * i as f64 + e).round().max(0.0) as u64;
        writeln!(out, "img_{i:04},{count}").expect("write to String");
    }
    out
}
