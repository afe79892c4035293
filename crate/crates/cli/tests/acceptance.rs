//! Acceptance checks. Runs without the libtest harness so every criterion
//! prints a PASS/FAIL line; exits non-zero if any criterion fails.

// `ensure!(err <= tol)` expands to `!(err <= tol)` on purpose: NaN fails
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use crowd_core::analytics::{classify_density, fps_from, FpsError};
use crowd_core::ingest::{filter_persons, parse_detection_stream, FrameGroup, RawDetectionRecord};
use crowd_core::regression::{fit, mae, r2_score};
use crowd_core::rng::Xorshift64Star;
use crowd_core::synth::{generate_scene, grid_scene, linear_count_dataset, score_tracking};
use crowd_core::synth::{ActorScript, NoiseSpec, SceneScript, Waypoint};
use crowd_core::{DensityConfig, FpsMeter, FrameStats, Pipeline, TrackerConfig};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    check: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "density boundary table",
            budget: secs(1),
            check: density_table,
        },
        Criterion {
            id: 2,
            name: "detection filter fidelity",
            budget: secs(1),
            check: filter_fidelity,
        },
        Criterion {
            id: 3,
            name: "tracker grace-period law",
            budget: secs(1),
            check: grace_period,
        },
        Criterion {
            id: 4,
            name: "tracker exactness on clean scenes",
            budget: secs(10),
            check: clean_scenes,
        },
        Criterion {
            id: 5,
            name: "translation invariance",
            budget: secs(5),
            check: translation,
        },
        Criterion {
            id: 6,
            name: "OLS correctness",
            budget: secs(5),
            check: ols,
        },
        Criterion {
            id: 7,
            name: "metric oracles",
            budget: secs(1),
            check: metrics,
        },
        Criterion {
            id: 8,
            name: "end-to-end determinism",
            budget: secs(10),
            check: end_to_end,
        },
        Criterion {
            id: 9,
            name: "r2 on low-noise linear counts",
            budget: secs(1),
            check: linear_r2,
        },
        Criterion {
            id: 10,
            name: "fps formula",
            budget: secs(1),
            check: fps_formula,
        },
    ];

    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.check))
            .unwrap_or_else(|e| Err(format!("panicked: {}", panic_text(&e))));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(_) if took > c.budget => Err(format!("took {took:?}, budget {:?}", c.budget)),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "criterion {:>2} {tag} {} ({:.1} ms): {detail}",
            c.id,
            c.name,
            took.as_secs_f64() * 1e3
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn panic_text(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn density_table() -> Outcome {
    // the three-branch rule with the default thresholds written out
    fn rule(n: u64) -> &'static str {
        if n < 15 {
            "normal crowd"
        } else if (15..=25).contains(&n) {
            "medium crowd"
        } else {
            "high crowd"
        }
    }
    let cfg = DensityConfig::default();
    for n in 0..=40u64 {
        let level = classify_density(n, &cfg);
        ensure!(
            level.label() == rule(n),
            "live={n}: got {:?}, expected {:?}",
            level.label(),
            rule(n)
        );
        ensure!(level.to_string() == rule(n), "live={n}: display {level}");
        let json = serde_json::to_string(&level).unwrap();
        ensure!(json == format!("\"{}\"", rule(n)), "live={n}: serialized as {json}");
    }
    Ok("41 counts, labels exact".into())
}

fn filter_fidelity() -> Outcome {
    const LABELS: [&str; 8] = [
        "person", "person", "person", "Person", "person ", "dog", "bicycle", "car",
    ];
    let boundary = [
        0.5,
        f64::from_bits(0.5f64.to_bits() + 1),
        f64::from_bits(0.5f64.to_bits() - 1),
        0.0,
        1.0,
    ];
    let mut rng = Xorshift64Star::new(1000);
    let records: Vec<RawDetectionRecord> = (0..1000u64)
        .map(|i| {
            let (x, y) = (rng.uniform(0.0, 1000.0), rng.uniform(0.0, 1000.0));
            let confidence = if rng.below(4) == 0 {
                boundary[rng.below(boundary.len() as u64) as usize]
            } else {
                rng.next_f64()
            };
            RawDetectionRecord {
                frame: i / 10,
                x1: x,
                y1: y,
                x2: x + rng.uniform(1.0, 80.0),
                y2: y + rng.uniform(1.0, 160.0),
                confidence,
                label: LABELS[rng.below(LABELS.len() as u64) as usize].to_string(),
            }
        })
        .collect();

    let mut expected = Vec::new();
    for r in &records {
        if r.confidence > 0.5 && r.label == "person" {
            expected.push(r);
        }
    }
    let kept = filter_persons(&records, 0.5, "person").map_err(|e| e.to_string())?;
    ensure!(
        kept.len() == expected.len(),
        "kept {} records, linear scan {}",
        kept.len(),
        expected.len()
    );
    for (k, (d, r)) in kept.iter().zip(&expected).enumerate() {
        let same = d.frame_index == r.frame
            && d.bbox.x1 == r.x1
            && d.bbox.y1 == r.y1
            && d.bbox.x2 == r.x2
            && d.bbox.y2 == r.y2
            && d.confidence == r.confidence
            && d.class_label == r.label;
        ensure!(same, "kept record {k} differs: {d:?} vs {r:?}");
    }
    Ok(format!("{} of 1000 kept, identical to linear scan", kept.len()))
}

fn total_after_gap(gap: u64) -> Result<u64, String> {
    let still = |enter: u64, exit: u64| ActorScript {
        actor_id: 0,
        enter_frame: enter,
        exit_frame: exit,
        waypoints: vec![Waypoint {
            frame: enter,
            x: 320.0,
            y: 240.0,
        }],
        box_size: (40.0, 90.0),
    };
    let back = 10 + gap;
    let script = SceneScript {
        actors: vec![still(0, 9), still(back, back + 9)],
        noise: NoiseSpec::default(),
        n_frames: back + 10,
    };
    let scene = generate_scene(&script).map_err(|e| e.to_string())?;
    let groups = parse_detection_stream(scene.detections_jsonl().lines()).map_err(|e| e.to_string())?;
    let mut p = Pipeline::new(TrackerConfig::default(), DensityConfig::default(), Some(25.0)).unwrap();
    let out = p.run(&groups).map_err(|e| e.to_string())?;
    ensure!(
        out.len() as u64 == back + 10,
        "processed {} frames, expected {}",
        out.len(),
        back + 10
    );
    Ok(p.tracker().total_count())
}

fn grace_period() -> Outcome {
    ensure!(
        TrackerConfig::default().max_disappeared == 40,
        "default max_disappeared changed"
    );
    let mut got = Vec::new();
    for (gap, expected) in [(1, 1), (40, 1), (41, 2)] {
        let total = total_after_gap(gap)?;
        ensure!(total == expected, "gap {gap}: total_count {total}, expected {expected}");
        got.push(format!("g={gap}->{total}"));
    }
    Ok(got.join(", "))
}

fn clean_scenes() -> Outcome {
    let cfg = TrackerConfig::default();
    let mut pick = Xorshift64Star::new(4);
    let mut sizes = Vec::new();
    for seed in 1..=10u64 {
        let n_actors = 5 + pick.below(26) as usize;
        let script = grid_scene(n_actors, 150, 200.0, 40.0, seed);
        let scene = generate_scene(&script).map_err(|e| e.to_string())?;

        // separation > 2 * max_distance among actors present together
        let mut by_frame = vec![Vec::new(); scene.n_frames as usize];
        for row in &scene.ground_truth {
            by_frame[row.frame as usize].push((row.x, row.y));
        }
        for (f, pts) in by_frame.iter().enumerate() {
            for (i, a) in pts.iter().enumerate() {
                for b in &pts[i + 1..] {
                    let d = (a.0 - b.0).hypot(a.1 - b.1);
                    ensure!(
                        d > 2.0 * cfg.max_distance,
                        "seed {seed} frame {f}: actors {d:.1} px apart"
                    );
                }
            }
        }

        let groups = parse_detection_stream(scene.detections_jsonl().lines()).map_err(|e| e.to_string())?;
        let mut p = Pipeline::new(cfg, DensityConfig::default(), Some(25.0)).unwrap();
        let out = p.run(&groups).map_err(|e| e.to_string())?;
        let card = score_tracking(&scene, &out, cfg.max_distance / 2.0).map_err(|e| e.to_string())?;
        // the stream starts at the first detection; frames before it are empty
        let first = out.first().map_or(scene.n_frames, |o| o.stats.frame_index);
        ensure!(
            scene.true_counts[..first as usize].iter().all(|&c| c == 0),
            "seed {seed}: stream skips frames with people present"
        );
        ensure!(
            card.uncovered_frames == first,
            "seed {seed}: {} frames not processed",
            card.uncovered_frames
        );
        ensure!(card.id_switches == 0, "seed {seed}: {} id switches", card.id_switches);
        ensure!(
            card.max_count_error() == 0,
            "seed {seed}: live count off by {}",
            card.max_count_error()
        );
        ensure!(
            card.total_count == n_actors as u64,
            "seed {seed}: total_count {} for {n_actors} actors",
            card.total_count
        );
        sizes.push(n_actors.to_string());
    }
    Ok(format!("10 scenes, actors [{}], all exact", sizes.join(", ")))
}

fn shift(groups: &[FrameGroup], dx: f64, dy: f64) -> Vec<FrameGroup> {
    let mut shifted = groups.to_vec();
    for r in shifted.iter_mut().flat_map(|g| g.records.iter_mut()) {
        r.x1 += dx;
        r.x2 += dx;
        r.y1 += dy;
        r.y2 += dy;
    }
    shifted
}

fn stats_without_fps(groups: &[FrameGroup]) -> Result<Vec<FrameStats>, String> {
    let mut p = Pipeline::new(TrackerConfig::default(), DensityConfig::default(), None).unwrap();
    let out = p.run(groups).map_err(|e| e.to_string())?;
    Ok(out
        .into_iter()
        .map(|o| FrameStats {
            fps: 0.0,
            warming_up: false,
            ..o.stats
        })
        .collect())
}

fn translation() -> Outcome {
    let mut fixtures = vec![(
        "scene-small".to_string(),
        fs::read_to_string(manifest_dir().join("tests/golden/scene-small.jsonl")).map_err(|e| e.to_string())?,
    )];
    for seed in 1..=3u64 {
        let mut script = grid_scene(25, 120, 130.0, 10.0, seed);
        script.noise = NoiseSpec {
            position_jitter_std: 3.0,
            miss_probability: 0.1,
            confidence_range: (0.55, 0.99),
            seed,
        };
        let scene = generate_scene(&script).map_err(|e| e.to_string())?;
        fixtures.push((format!("noisy-{seed}"), scene.detections_jsonl()));
    }
    let mut frames = 0;
    for (name, text) in &fixtures {
        let groups = parse_detection_stream(text.lines()).map_err(|e| e.to_string())?;
        let base = stats_without_fps(&groups)?;
        let moved = stats_without_fps(&shift(&groups, 1000.0, -500.0))?;
        ensure!(base.len() == moved.len(), "{name}: frame counts differ");
        for (a, b) in base.iter().zip(&moved) {
            ensure!(a == b, "{name} frame {}: {a:?} vs {b:?}", a.frame_index);
        }
        frames += base.len();
    }
    Ok(format!("{} streams, {frames} frames identical", fixtures.len()))
}

fn ols() -> Outcome {
    // raw-sum normal equations solved by Cramer's rule
    fn oracle(x: &[f64], y: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let det = n * sxx - sx * sx;
        ((n * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det)
    }
    let rel = |got: f64, want: f64| (got - want).abs() / want.abs();
    let mut rng = Xorshift64Star::new(6);
    let (mut worst_rel, mut worst_orth) = (0.0f64, 0.0f64);
    for k in 0..50 {
        let n = 10 + rng.below(191) as usize;
        let slope = rng.uniform(0.5, 5.0) * if rng.below(2) == 0 { 1.0 } else { -1.0 };
        let intercept = rng.uniform(10.0, 100.0) * if rng.below(2) == 0 { 1.0 } else { -1.0 };
        let noise = rng.uniform(0.1, 2.0);
        let x: Vec<f64> = (0..n).map(|_| rng.uniform(-100.0, 100.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| slope * v + intercept + noise * rng.normal_pair().0)
            .collect();

        let model = fit(&x, &y).map_err(|e| e.to_string())?;
        let (want_slope, want_intercept) = oracle(&x, &y);
        let r = rel(model.slope, want_slope).max(rel(model.intercept, want_intercept));
        ensure!(r <= 1e-6, "dataset {k}: relative error {r:e}");
        worst_rel = worst_rel.max(r);

        let resid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - model.predict(*a)).collect();
        let sum_r: f64 = resid.iter().sum();
        let sum_rx: f64 = resid.iter().zip(&x).map(|(r, a)| r * a).sum();
        ensure!(
            sum_r.abs() <= 1e-6 && sum_rx.abs() <= 1e-6,
            "dataset {k}: sum r = {sum_r:e}, sum r*x = {sum_rx:e}"
        );
        worst_orth = worst_orth.max(sum_r.abs()).max(sum_rx.abs());
    }
    Ok(format!(
        "50 datasets, max rel err {worst_rel:.1e}, max |orthogonality| {worst_orth:.1e}"
    ))
}

fn metrics() -> Outcome {
    let mut rng = Xorshift64Star::new(7);
    let mut worst = 0.0f64;
    for k in 0..200 {
        let n = 2 + rng.below(300) as usize;
        let actual: Vec<f64> = (0..n).map(|_| rng.uniform(-50.0, 50.0)).collect();
        let predicted: Vec<f64> = actual.iter().map(|a| a + rng.uniform(-20.0, 20.0)).collect();

        let mut abs_sum = 0.0;
        let mut mean = 0.0;
        for i in 0..n {
            abs_sum += (predicted[i] - actual[i]).abs();
            mean += actual[i];
        }
        let want_mae = abs_sum / n as f64;
        mean /= n as f64;
        let (mut ss_res, mut ss_tot) = (0.0, 0.0);
        for i in 0..n {
            ss_res += (actual[i] - predicted[i]).powi(2);
            ss_tot += (actual[i] - mean).powi(2);
        }
        let want_r2 = 1.0 - ss_res / ss_tot;

        let got_mae = mae(&predicted, &actual).map_err(|e| e.to_string())?;
        let got_r2 = r2_score(&predicted, &actual).map_err(|e| e.to_string())?;
        ensure!(
            (got_mae - want_mae).abs() <= 1e-9,
            "vector {k}: mae {got_mae} vs {want_mae}"
        );
        ensure!((got_r2 - want_r2).abs() <= 1e-9, "vector {k}: r2 {got_r2} vs {want_r2}");
        worst = worst.max((got_mae - want_mae).abs()).max((got_r2 - want_r2).abs());

        // in-sample OLS: r2 == pearson^2
        let x: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 10.0)).collect();
        let model = fit(&x, &actual).map_err(|e| e.to_string())?;
        let r2 = r2_score(&model.predict_all(&x), &actual).map_err(|e| e.to_string())?;
        let (mx, my) = (x.iter().sum::<f64>() / n as f64, mean);
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            sxy += (x[i] - mx) * (actual[i] - my);
            sxx += (x[i] - mx).powi(2);
            syy += (actual[i] - my).powi(2);
        }
        let pearson = sxy / (sxx * syy).sqrt();
        ensure!(
            (r2 - pearson * pearson).abs() <= 1e-9,
            "vector {k}: r2 {r2} vs pearson^2 {}",
            pearson * pearson
        );
        worst = worst.max((r2 - pearson * pearson).abs());
    }
    Ok(format!("200 vectors, max deviation {worst:.1e}"))
}

fn end_to_end() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_crowdcount");
    let scene = manifest_dir().join("scenes/scene-small.json");
    let golden = manifest_dir().join("tests/golden");
    let read = |p: PathBuf| fs::read(&p).map_err(|e| format!("{}: {e}", p.display()));
    let mut runs = Vec::new();
    for run in 1..=2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let prefix = dir.path().join("scene-small");
        let synth = Command::new(bin)
            .args(["synth", "--scene"])
            .arg(&scene)
            .arg("--out-prefix")
            .arg(&prefix)
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(
            synth.status.success(),
            "run {run}: synth failed: {}",
            String::from_utf8_lossy(&synth.stderr)
        );
        let stats = dir.path().join("scene-small.stats.jsonl");
        let overlay = dir.path().join("scene-small.overlay.jsonl");
        let track = Command::new(bin)
            .args(["track", "--replay-fps", "25", "--input"])
            .arg(dir.path().join("scene-small.jsonl"))
            .arg("--overlay")
            .arg(&overlay)
            .arg("--output")
            .arg(&stats)
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(
            track.status.success(),
            "run {run}: track failed: {}",
            String::from_utf8_lossy(&track.stderr)
        );
        let mut produced = Vec::new();
        for name in [
            "scene-small.jsonl",
            "scene-small.truth.csv",
            "scene-small.counts.csv",
            "scene-small.stats.jsonl",
            "scene-small.overlay.jsonl",
        ] {
            let got = read(dir.path().join(name))?;
            ensure!(got == read(golden.join(name))?, "run {run}: {name} differs from golden");
            produced.push(got);
        }
        runs.push(produced);
    }
    ensure!(runs[0] == runs[1], "the two runs differ");
    Ok("2 runs, 5 files byte-identical to golden".into())
}

fn linear_r2() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = dir.path().join("linear.csv");
    fs::write(&csv, linear_count_dataset(100, 3.0, 0.05, 42)).map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_crowdcount"))
        .arg("eval")
        .arg("--dataset")
        .arg(&csv)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "eval failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let r2 = report["r2"].as_f64().ok_or("no r2 in report")?;
    ensure!(r2 >= 0.97, "r2 = {r2:.4} < 0.97");
    Ok(format!(
        "r2 = {r2:.4}, mae = {:.3}",
        report["mae"].as_f64().unwrap_or(f64::NAN)
    ))
}

fn fps_formula() -> Outcome {
    let fps = fps_from(100, 4.0).map_err(|e| e.to_string())?;
    ensure!(fps == 25.0, "fps(100, 4.0) = {fps}");
    let meter = FpsMeter::with_elapsed(100, 4.0).fps(Instant::now());
    ensure!(meter == Ok(25.0), "meter reports {meter:?}");
    let zero = fps_from(100, 0.0);
    ensure!(zero == Err(FpsError::NotAdvanced), "elapsed 0 gave {zero:?}");
    let msg = FpsError::NotAdvanced.to_string();
    ensure!(msg == "fps undefined before time advances", "message {msg:?}");
    Ok(format!("25.0 exactly; elapsed 0 -> \"{msg}\""))
}
