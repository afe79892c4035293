//! Detection-stream and count-dataset ingestion.
//!
//! Detection streams are JSON Lines, one detector output per line:
//!
//! ```text
//! {"frame":0,"x1":10.0,"y1":20.0,"x2":50.0,"y2":120.0,"confidence":0.83,"label":"person"}
//! ```
//!
//! Lines must be sorted by `frame`. Frame indices missing between the first
//! and last frame of a stream are frames with zero detections, and
//! [`FrameGrouper`] yields an empty [`FrameGroup`] for each of them so that
//! downstream disappearance counters keep advancing.
//!
//! Count datasets are CSV files with at least an `id` and a `count` column.

use std::io;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{BoundingBox, Detection, InvalidDetection};

/// Label kept by the default person filter.
pub const PERSON_LABEL: &str = "person";
/// Detections must score strictly above this to be kept.
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.5;

const REQUIRED_FIELDS: [&str; 7] = ["frame", "x1", "y1", "x2", "y2", "confidence", "label"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed detection record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: frame {frame} follows frame {previous}; stream must be sorted by frame")]
    FrameOrder { line: usize, frame: u64, previous: u64 },
    #[error("line {line}: read failed: {source}")]
    Io { line: usize, source: io::Error },
    #[error("record {position}: {source}")]
    InvalidRecord { position: usize, source: InvalidDetection },
}

impl IngestError {
    /// Input line the error refers to, when there is one.
    pub fn line(&self) -> Option<usize> {
        match self {
            IngestError::Malformed { line, .. }
            | IngestError::MissingField { line, .. }
            | IngestError::FrameOrder { line, .. }
            | IngestError::Io { line, .. } => Some(*line),
            IngestError::InvalidRecord { .. } => None,
        }
    }
}

/// A detection record as it appears on the wire, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDetectionRecord {
    pub frame: u64,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub confidence: f64,
    pub label: String,
}

impl RawDetectionRecord {
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox {
            x1: self.x1,
            y1: self.y1,
            x2: self.x2,
            y2: self.y2,
        }
    }

    /// Serializes the record as one JSONL line (without the trailing newline).
    pub fn to_jsonl(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }

    fn to_detection(&self) -> Result<Detection, InvalidDetection> {
        Detection::new(self.frame, self.bbox(), self.confidence, self.label.clone())
    }
}

/// Parses a single non-empty JSONL line. `line` is the 1-based line number
/// used in errors.
pub fn parse_detection_line(text: &str, line: usize) -> Result<RawDetectionRecord, IngestError> {
    let value: Value = serde_json::from_str(text).map_err(|e| IngestError::Malformed {
        line,
        message: e.to_string(),
    })?;
    let Value::Object(map) = &value else {
        return Err(IngestError::Malformed {
            line,
            message: "expected a JSON object".into(),
        });
    };
    if let Some(field) = REQUIRED_FIELDS.iter().find(|f| !map.contains_key(**f)) {
        return Err(IngestError::MissingField { line, field });
    }
    serde_json::from_value(value).map_err(|e| IngestError::Malformed {
        line,
        message: e.to_string(),
    })
}

/// All records of one frame, in stream order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGroup {
    pub frame_index: u64,
    pub records: Vec<RawDetectionRecord>,
}

impl FrameGroup {
    fn empty(frame_index: u64) -> Self {
        Self {
            frame_index,
            records: Vec::new(),
        }
    }
}

/// Groups a line stream into per-frame batches.
///
/// A group is emitted once the first line of a later frame (or end of
/// input) is seen. Blank lines are skipped but still counted for line
/// numbers. The iterator is fused after the first error.
pub struct FrameGrouper<I> {
    lines: I,
    line_no: usize,
    current: Option<FrameGroup>,
    gap: Range<u64>,
    finished: bool,
}

impl<I> FrameGrouper<I>
where
    I: Iterator<Item = io::Result<String>>,
{
    pub fn new(lines: I) -> Self {
        Self {
            lines,
            line_no: 0,
            current: None,
            gap: 0..0,
            finished: false,
        }
    }

    fn fail(&mut self, err: IngestError) -> Option<Result<FrameGroup, IngestError>> {
        self.finished = true;
        self.gap = 0..0;
        Some(Err(err))
    }
}

impl<R: io::BufRead> FrameGrouper<io::Lines<R>> {
    pub fn from_reader(reader: R) -> Self {
        Self::new(reader.lines())
    }
}

impl<I> Iterator for FrameGrouper<I>
where
    I: Iterator<Item = io::Result<String>>,
{
    type Item = Result<FrameGroup, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(frame) = self.gap.next() {
            return Some(Ok(FrameGroup::empty(frame)));
        }
        if self.finished {
            return None;
        }
        loop {
            let line = match self.lines.next() {
                None => {
                    self.finished = true;
                    return self.current.take().map(Ok);
                }
                Some(Err(source)) => {
                    let line = self.line_no + 1;
                    return self.fail(IngestError::Io { line, source });
                }
                Some(Ok(line)) => line,
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let record = match parse_detection_line(&line, self.line_no) {
                Ok(r) => r,
                Err(e) => return self.fail(e),
            };
            match self.current.as_mut() {
                None => {
                    self.current = Some(FrameGroup {
                        frame_index: record.frame,
                        records: vec![record],
                    })
                }
                Some(group) if record.frame == group.frame_index => group.records.push(record),
                Some(group) if record.frame > group.frame_index => {
                    let next_frame = record.frame;
                    let done = std::mem::replace(
                        group,
                        FrameGroup {
                            frame_index: next_frame,
                            records: vec![record],
                        },
                    );
                    self.gap = done.frame_index + 1..next_frame;
                    return Some(Ok(done));
                }
                Some(group) => {
                    let err = IngestError::FrameOrder {
                        line: self.line_no,
                        frame: record.frame,
                        previous: group.frame_index,
                    };
                    return self.fail(err);
                }
            }
        }
    }
}

/// Parses a whole detection stream into dense, ascending frame groups.
pub fn parse_detection_stream<I, S>(lines: I) -> Result<Vec<FrameGroup>, IngestError>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    FrameGrouper::new(lines.into_iter().map(|l| Ok(l.into()))).collect()
}

/// Confidence/label filter applied to raw detector output.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonFilter {
    pub min_confidence: f64,
    pub target_label: String,
}

impl Default for PersonFilter {
    fn default() -> Self {
        Self {
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            target_label: PERSON_LABEL.to_string(),
        }
    }
}

impl PersonFilter {
    pub fn keeps(&self, record: &RawDetectionRecord) -> bool {
        record.confidence > self.min_confidence && record.label == self.target_label
    }

    pub fn apply(&self, records: &[RawDetectionRecord]) -> Result<Vec<Detection>, IngestError> {
        records
            .iter()
            .enumerate()
            .filter(|(_, r)| self.keeps(r))
            .map(|(position, r)| {
                r.to_detection()
                    .map_err(|source| IngestError::InvalidRecord { position, source })
            })
            .collect()
    }
}

/// Keeps records scoring strictly above `min_confidence` whose label equals
/// `target_label`, converted to validated detections in input order.
pub fn filter_persons(
    records: &[RawDetectionRecord],
    min_confidence: f64,
    target_label: &str,
) -> Result<Vec<Detection>, IngestError> {
    PersonFilter {
        min_confidence,
        target_label: target_label.to_string(),
    }
    .apply(records)
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: count {value:?} is not a non-negative integer")]
    InvalidCount { row: usize, value: String },
    #[error("row {row}: column `{column}` value {value:?} is not numeric")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One dataset row: an image identifier and its ground-truth people count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub image_id: String,
    pub count: u64,
}

/// Regression input feature drawn from a [`CountDataset`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Feature {
    /// Position of the record in the file, starting at 0.
    #[default]
    Index,
    /// A numeric column of the source CSV.
    Column(String),
}

/// Ordered `(image id, count)` records plus the raw table they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDataset {
    pub records: Vec<CountRecord>,
    /// Number of columns in the source header.
    pub n_cols: usize,
    pub columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CountDataset {
    pub fn n_rows(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn counts(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.count as f64).collect()
    }

    /// Values of `feature` for every record, in record order.
    pub fn feature_values(&self, feature: &Feature) -> Result<Vec<f64>, DatasetError> {
        match feature {
            Feature::Index => Ok((0..self.n_rows()).map(|i| i as f64).collect()),
            Feature::Column(name) => {
                let col = self
                    .columns
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| DatasetError::MissingColumn(name.clone()))?;
                self.rows
                    .iter()
                    .enumerate()
                    .map(|(i, row)| {
                        let cell = &row[col];
                        cell.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| DatasetError::NonNumeric {
                                row: i + 1,
                                column: name.clone(),
                                value: cell.clone(),
                            })
                    })
                    .collect()
            }
        }
    }
}

/// Parses a count dataset. Rows are numbered from 1, header excluded.
pub fn load_count_dataset(text: &str) -> Result<CountDataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let columns: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let id_col = find("id")?;
    let count_col = find("count")?;

    let mut records = Vec::new();
    let mut rows = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let raw_count = &row[count_col];
        let count = raw_count.parse::<u64>().map_err(|_| DatasetError::InvalidCount {
            row: i + 1,
            value: raw_count.to_string(),
        })?;
        records.push(CountRecord {
            image_id: row[id_col].to_string(),
            count,
        });
        rows.push(row.iter().map(str::to_string).collect());
    }
    Ok(CountDataset {
        records,
        n_cols: columns.len(),
        columns,
        rows,
    })
}
