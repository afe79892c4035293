//! `crowdcount` command implementations.
//!
//! Each subcommand is a function over explicit readers and writers so it
//! can be driven in-process; `main` only parses flags, opens files and maps
//! [`CliError`] onto the process exit code.

pub mod overlay;

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use crowd_core::ingest::{DatasetError, Feature, PersonFilter, DEFAULT_MIN_CONFIDENCE, PERSON_LABEL};
use crowd_core::model::{
    DensityLevel, FrameStats, DEFAULT_HIGH_THRESHOLD, DEFAULT_MAX_DISAPPEARED, DEFAULT_MAX_DISTANCE,
    DEFAULT_MEDIUM_THRESHOLD,
};
use crowd_core::pipeline::PipelineError;
use crowd_core::regression::{self, EvalError, EvaluationReport, RecordPrediction, RegressionError, Split};
use crowd_core::synth::{generate_scene, SceneScript};
use crowd_core::{load_count_dataset, DensityConfig, FrameGrouper, Pipeline, TrackerConfig};
use serde::Serialize;
use thiserror::Error;

use overlay::{emit_overlay, DEFAULT_LABEL_ANCHOR};

#[derive(Debug, Error)]
pub enum CliError {
    /// Flag values that parse but make no sense together.
    #[error("{0}")]
    Usage(String),
    /// Input that does not follow its format.
    #[error("{0}")]
    Input(String),
    /// A regression that cannot be fitted or scored.
    #[error("{0}")]
    Degenerate(String),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io { .. } => 1,
            CliError::Usage(_) | CliError::Degenerate(_) => 2,
        }
    }

    fn io(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "crowdcount",
    version,
    about = "Track people in detection streams and estimate crowd density"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track people through a detection stream and emit per-frame statistics.
    Track(TrackArgs),
    /// Fit and score a count regression on a CSV dataset.
    Eval(EvalArgs),
    /// Render a synthetic scene script into detections and ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TrackArgs {
    /// Detection JSONL file, or `-` for stdin.
    #[arg(long, default_value = "-")]
    pub input: String,
    /// Frames a person may go undetected before the track is dropped.
    #[arg(long, default_value_t = DEFAULT_MAX_DISAPPEARED)]
    pub max_disappeared: u32,
    /// Largest centroid jump (pixels) that continues a track.
    #[arg(long, default_value_t = DEFAULT_MAX_DISTANCE, allow_negative_numbers = true)]
    pub max_distance: f64,
    #[arg(long, default_value_t = DEFAULT_MEDIUM_THRESHOLD)]
    pub medium_threshold: u32,
    #[arg(long, default_value_t = DEFAULT_HIGH_THRESHOLD)]
    pub high_threshold: u32,
    /// Report this nominal frame rate instead of measuring wall-clock time.
    #[arg(long, allow_negative_numbers = true)]
    pub replay_fps: Option<f64>,
    /// Also write overlay drawing records (JSONL) to this path.
    #[arg(long)]
    pub overlay: Option<PathBuf>,
    /// Write per-frame tracker update results (JSONL) to this path.
    #[arg(long)]
    pub updates: Option<PathBuf>,
    /// FrameStats JSONL destination, or `-` for stdout.
    #[arg(long, default_value = "-")]
    pub output: String,
    /// Keep detections scoring strictly above this.
    #[arg(long, default_value_t = DEFAULT_MIN_CONFIDENCE)]
    pub min_confidence: f64,
    /// Class label to keep.
    #[arg(long, default_value = PERSON_LABEL)]
    pub label: String,
    /// Leave the fps field out of FrameStats records.
    #[arg(long, hide = true)]
    pub no_fps_field: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// CSV with `id` and `count` columns.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Numeric column to regress count on; defaults to the record index.
    #[arg(long)]
    pub feature: Option<String>,
    /// Hold out this fraction of rows and report metrics on them.
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Also predict the count of this record (0-based).
    #[arg(long)]
    pub predict_index: Option<usize>,
    /// Write the count histogram as CSV.
    #[arg(long)]
    pub histogram_csv: Option<PathBuf>,
    /// Write per-record feature, actual and predicted counts as CSV.
    #[arg(long)]
    pub series_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Scene script (JSON).
    #[arg(long)]
    pub scene: PathBuf,
    /// Outputs go to `<P>.jsonl`, `<P>.truth.csv` and `<P>.counts.csv`.
    #[arg(long)]
    pub out_prefix: String,
}

/// End-of-run figures for `track`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSummary {
    pub frames: u64,
    pub total_people: u64,
    pub mean_fps: f64,
}

impl std::fmt::Display for TrackSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} frames, {} people total, mean fps {:.2}",
            self.frames, self.total_people, self.mean_fps
        )
    }
}

/// FrameStats in the same field order, minus `fps`.
#[derive(Serialize)]
struct StatsWithoutFps<'a> {
    frame: u64,
    live: usize,
    total: u64,
    density: DensityLevel,
    ids: &'a [u64],
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    warming_up: bool,
}

impl<'a> From<&'a FrameStats> for StatsWithoutFps<'a> {
    fn from(s: &'a FrameStats) -> Self {
        Self {
            frame: s.frame_index,
            live: s.live_count,
            total: s.total_count,
            density: s.density,
            ids: &s.active_track_ids,
            warming_up: s.warming_up,
        }
    }
}

fn json_line<T: Serialize>(out: &mut impl Write, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}

impl TrackArgs {
    pub fn pipeline(&self) -> Result<Pipeline, CliError> {
        let tracker =
            TrackerConfig::new(self.max_disappeared, self.max_distance).map_err(|e| CliError::Usage(e.to_string()))?;
        let density = DensityConfig::new(self.medium_threshold, self.high_threshold)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(CliError::Usage(format!(
                "min confidence must lie in [0, 1], got {}",
                self.min_confidence
            )));
        }
        let filter = PersonFilter {
            min_confidence: self.min_confidence,
            target_label: self.label.clone(),
        };
        Pipeline::new(tracker, density, self.replay_fps)
            .map(|p| p.with_filter(filter))
            .map_err(|e| CliError::Usage(e.to_string()))
    }
}

/// Streams FrameStats for `input` to `output`, one flushed line per frame.
/// Output written before a mid-stream error is left in place.
pub fn run_track(
    args: &TrackArgs,
    input: impl BufRead,
    output: &mut impl Write,
    mut overlay: Option<&mut dyn Write>,
    mut updates: Option<&mut dyn Write>,
) -> Result<TrackSummary, CliError> {
    let mut pipeline = args.pipeline()?;
    let mut frames = 0;
    let mut last_fps = 0.0;
    for group in FrameGrouper::from_reader(input) {
        let group = group.map_err(|e| CliError::Input(e.to_string()))?;
        let out = pipeline.process(&group).map_err(|e| match e {
            PipelineError::Ingest(e) => CliError::Input(format!("frame {}: {e}", group.frame_index)),
            other => CliError::Input(other.to_string()),
        })?;
        frames += 1;
        last_fps = out.stats.fps;

        let write_err = CliError::io("writing output");
        let res = if args.no_fps_field {
            json_line(output, &StatsWithoutFps::from(&out.stats))
        } else {
            json_line(output, &out.stats)
        };
        res.and_then(|_| output.flush()).map_err(write_err)?;

        if let Some(w) = overlay.as_deref_mut() {
            let mut w = w;
            for rec in emit_overlay(&out.stats, pipeline.tracker(), DEFAULT_LABEL_ANCHOR) {
                json_line(&mut w, &rec).map_err(CliError::io("writing overlay"))?;
            }
            w.flush().map_err(CliError::io("writing overlay"))?;
        }
        if let Some(w) = updates.as_deref_mut() {
            let mut w = w;
            json_line(&mut w, &out.update).map_err(CliError::io("writing updates"))?;
        }
    }
    Ok(TrackSummary {
        frames,
        total_people: pipeline.tracker().total_count(),
        mean_fps: last_fps,
    })
}

#[derive(Debug, Serialize)]
struct EvalOutput<'a> {
    feature: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_fraction: Option<f64>,
    #[serde(flatten)]
    report: &'a EvaluationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    prediction: Option<RecordPrediction>,
}

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::Dataset(e) => CliError::Input(e.to_string()),
        EvalError::InvalidSplit(_) => CliError::Usage(e.to_string()),
        EvalError::Regression(RegressionError::IndexOutOfRange { .. }) => CliError::Usage(e.to_string()),
        EvalError::Regression(RegressionError::NoBins) => CliError::Usage(e.to_string()),
        EvalError::Regression(r) => CliError::Degenerate(r.to_string()),
    }
}

/// Evaluates the dataset in `csv` and writes the report JSON to `output`.
pub fn run_eval(args: &EvalArgs, csv: &str, output: &mut impl Write) -> Result<EvaluationReport, CliError> {
    let dataset = load_count_dataset(csv).map_err(|e: DatasetError| CliError::Input(e.to_string()))?;
    let feature = match &args.feature {
        Some(col) => Feature::Column(col.clone()),
        None => Feature::Index,
    };
    if args.bins == 0 {
        return Err(CliError::Usage("--bins must be at least 1".into()));
    }
    let split = args.split.map(|test_fraction| Split {
        test_fraction,
        seed: args.seed,
    });
    let report = regression::evaluate(&dataset, &feature, split, args.bins).map_err(eval_error)?;
    let prediction = args
        .predict_index
        .map(|i| regression::predict_count_for_record(&dataset, &report.model, &feature, i))
        .transpose()
        .map_err(eval_error)?;

    if let Some(path) = &args.histogram_csv {
        let mut text = String::from("lower,upper,frequency\n");
        for b in &report.count_histogram {
            text.push_str(&format!("{},{},{}\n", b.lower, b.upper, b.frequency));
        }
        fs::write(path, text).map_err(CliError::io(format!("writing {}", path.display())))?;
    }
    if let Some(path) = &args.series_csv {
        let xs = dataset.feature_values(&feature).map_err(|e| eval_error(e.into()))?;
        let mut text = String::from("index,id,feature,actual,predicted\n");
        for (i, (r, x)) in dataset.records.iter().zip(&xs).enumerate() {
            text.push_str(&format!(
                "{i},{},{x},{},{}\n",
                r.image_id,
                r.count,
                report.model.predict(*x)
            ));
        }
        fs::write(path, text).map_err(CliError::io(format!("writing {}", path.display())))?;
    }

    let feature_name = args.feature.as_deref().unwrap_or("index");
    let out = EvalOutput {
        feature: feature_name,
        test_fraction: args.split,
        report: &report,
        prediction,
    };
    json_line(output, &out)
        .and_then(|_| output.flush())
        .map_err(CliError::io("writing report"))?;
    Ok(report)
}

/// Paths written by `synth` for a given prefix.
pub fn synth_paths(prefix: &str) -> [PathBuf; 3] {
    [
        PathBuf::from(format!("{prefix}.jsonl")),
        PathBuf::from(format!("{prefix}.truth.csv")),
        PathBuf::from(format!("{prefix}.counts.csv")),
    ]
}

pub fn run_synth(script_text: &str, prefix: &str) -> Result<[PathBuf; 3], CliError> {
    let script = SceneScript::from_json(script_text).map_err(|e| CliError::Input(e.to_string()))?;
    let scene = generate_scene(&script).map_err(|e| CliError::Input(e.to_string()))?;
    let paths = synth_paths(prefix);
    let contents = [
        scene.detections_jsonl(),
        scene.ground_truth_csv(),
        scene.true_counts_csv(),
    ];
    for (path, text) in paths.iter().zip(contents) {
        fs::write(path, text).map_err(CliError::io(format!("writing {}", path.display())))?;
    }
    Ok(paths)
}

fn open_input(spec: &str) -> Result<Box<dyn BufRead>, CliError> {
    if spec == "-" {
        Ok(Box::new(BufReader::new(io::stdin())))
    } else {
        let f = fs::File::open(spec).map_err(CliError::io(format!("opening {spec}")))?;
        Ok(Box::new(BufReader::new(f)))
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(CliError::io(format!("creating {}", path.display())))
}

/// Runs a parsed command against the real process streams.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Track(args) => {
            // validate before touching any file
            args.pipeline()?;
            let input = open_input(&args.input)?;
            let mut overlay = args.overlay.as_deref().map(create).transpose()?;
            let mut updates = args.updates.as_deref().map(create).transpose()?;
            let overlay_w = overlay.as_mut().map(|w| w as &mut dyn Write);
            let updates_w = updates.as_mut().map(|w| w as &mut dyn Write);
            let summary = if args.output == "-" {
                let stdout = io::stdout();
                let mut lock = stdout.lock();
                run_track(&args, input, &mut lock, overlay_w, updates_w)?
            } else {
                let mut out = create(Path::new(&args.output))?;
                run_track(&args, input, &mut out, overlay_w, updates_w)?
            };
            if let Some(w) = updates.as_mut() {
                w.flush().map_err(CliError::io("writing updates"))?;
            }
            eprintln!("{summary}");
            Ok(())
        }
        Command::Eval(args) => {
            let csv = fs::read_to_string(&args.dataset)
                .map_err(CliError::io(format!("reading {}", args.dataset.display())))?;
            let stdout = io::stdout();
            run_eval(&args, &csv, &mut stdout.lock()).map(|_| ())
        }
        Command::Synth(args) => {
            let text =
                fs::read_to_string(&args.scene).map_err(CliError::io(format!("reading {}", args.scene.display())))?;
            let paths = run_synth(&text, &args.out_prefix)?;
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}
