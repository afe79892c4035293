//! Simple linear regression over count datasets, plus the metrics used to
//! evaluate it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CountDataset, DatasetError, Feature};
use crate::rng::Xorshift64Star;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegressionError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("non-finite input value")]
    NonFinite,
    #[error("degenerate design, slope undefined")]
    DegenerateDesign,
    #[error("r2 undefined for constant target")]
    ConstantTarget,
    #[error("record index {index} out of range for {n_rows} rows")]
    IndexOutOfRange { index: usize, n_rows: usize },
    #[error("bin count must be at least 1")]
    NoBins,
}

/// A fitted line `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub slope: f64,
    pub intercept: f64,
    pub n_samples: usize,
}

fn check_pair(a: &[f64], b: &[f64], needed: usize) -> Result<(), RegressionError> {
    if a.len() != b.len() {
        return Err(RegressionError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < needed {
        return Err(RegressionError::TooFewSamples { needed, got: a.len() });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite);
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Ordinary least squares fit of `y` on `x`, computed from centred sums.
pub fn fit(x: &[f64], y: &[f64]) -> Result<RegressionModel, RegressionError> {
    check_pair(x, y, 2)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mx;
        sxy += dx * (yi - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 || x.iter().all(|v| *v == x[0]) {
        return Err(RegressionError::DegenerateDesign);
    }
    let slope = sxy / sxx;
    Ok(RegressionModel {
        slope,
        intercept: my - slope * mx,
        n_samples: x.len(),
    })
}

impl RegressionModel {
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    pub fn predict_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.predict(x)).collect()
    }
}

/// Mean absolute error.
pub fn mae(predicted: &[f64], actual: &[f64]) -> Result<f64, RegressionError> {
    check_pair(predicted, actual, 1)?;
    let sum: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum();
    Ok(sum / predicted.len() as f64)
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r2_score(predicted: &[f64], actual: &[f64]) -> Result<f64, RegressionError> {
    check_pair(predicted, actual, 2)?;
    let m = mean(actual);
    let ss_tot: f64 = actual.iter().map(|a| (a - m).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(RegressionError::ConstantTarget);
    }
    let ss_res: f64 = predicted.iter().zip(actual).map(|(p, a)| (a - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordPrediction {
    pub image_id: String,
    pub predicted: f64,
    pub actual: u64,
}

/// Predicts the count of the record at `record_index` from its feature
/// value.
pub fn predict_count_for_record(
    dataset: &CountDataset,
    model: &RegressionModel,
    feature: &Feature,
    record_index: usize,
) -> Result<RecordPrediction, EvalError> {
    let record = dataset
        .records
        .get(record_index)
        .ok_or(RegressionError::IndexOutOfRange {
            index: record_index,
            n_rows: dataset.n_rows(),
        })?;
    let x = dataset.feature_values(feature)?[record_index];
    Ok(RecordPrediction {
        image_id: record.image_id.clone(),
        predicted: model.predict(x),
        actual: record.count,
    })
}

/// Histogram bin covering `[lower, upper)`, or `[lower, upper]` for the
/// last bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub frequency: usize,
}

/// Equal-width histogram over `[min, max]` of integer counts. A constant
/// input collapses to a single bin.
pub fn count_histogram(counts: &[u64], n_bins: usize) -> Result<Vec<HistogramBin>, RegressionError> {
    if n_bins == 0 {
        return Err(RegressionError::NoBins);
    }
    let (Some(&min), Some(&max)) = (counts.iter().min(), counts.iter().max()) else {
        return Err(RegressionError::TooFewSamples { needed: 1, got: 0 });
    };
    if min == max {
        return Ok(vec![HistogramBin {
            lower: min as f64,
            upper: max as f64,
            frequency: counts.len(),
        }]);
    }
    let span = (max - min) as f64;
    let mut bins: Vec<HistogramBin> = (0..n_bins)
        .map(|i| HistogramBin {
            lower: min as f64 + span * i as f64 / n_bins as f64,
            upper: min as f64 + span * (i + 1) as f64 / n_bins as f64,
            frequency: 0,
        })
        .collect();
    bins[n_bins - 1].upper = max as f64;
    for &c in counts {
        // (c - min) * n / span is an exact integer quotient at bin edges
        let slot = (((c - min) as f64 * n_bins as f64) / span).floor() as usize;
        bins[slot.min(n_bins - 1)].frequency += 1;
    }
    Ok(bins)
}

/// Model-free description of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub mean_count: f64,
    pub n_rows: usize,
    pub n_cols: usize,
    pub count_histogram: Vec<HistogramBin>,
}

pub fn summarize(dataset: &CountDataset, n_bins: usize) -> Result<DatasetSummary, RegressionError> {
    if dataset.is_empty() {
        return Err(RegressionError::TooFewSamples { needed: 1, got: 0 });
    }
    let counts: Vec<u64> = dataset.records.iter().map(|r| r.count).collect();
    Ok(DatasetSummary {
        mean_count: mean(&dataset.counts()),
        n_rows: dataset.n_rows(),
        n_cols: dataset.n_cols,
        count_histogram: count_histogram(&counts, n_bins)?,
    })
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    InvalidSplit(f64),
}

/// Seeded hold-out split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for Split {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl Split {
    /// Returns `(train, test)` row indices, each ascending. The test part
    /// holds `round(n * test_fraction)` rows, at least one.
    pub fn partition(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(EvalError::InvalidSplit(self.test_fraction));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        Xorshift64Star::new(self.seed).shuffle(&mut idx);
        let n_test = ((n as f64 * self.test_fraction).round() as usize).clamp(1.min(n), n);
        let mut test = idx[..n_test].to_vec();
        let mut train = idx[n_test..].to_vec();
        test.sort_unstable();
        train.sort_unstable();
        Ok((train, test))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mae: f64,
    pub r2: f64,
    pub mean_count: f64,
    pub n_rows: usize,
    pub n_cols: usize,
    pub count_histogram: Vec<HistogramBin>,
    pub model: RegressionModel,
    /// Rows the metrics were computed on.
    pub n_eval: usize,
}

/// Fits count on `feature` and scores the fit, in-sample or on the held-out
/// part of `split`.
pub fn evaluate(
    dataset: &CountDataset,
    feature: &Feature,
    split: Option<Split>,
    n_bins: usize,
) -> Result<EvaluationReport, EvalError> {
    let summary = summarize(dataset, n_bins)?;
    let x = dataset.feature_values(feature)?;
    let y = dataset.counts();
    let (train, eval) = match split {
        Some(s) => s.partition(dataset.n_rows())?,
        None => ((0..x.len()).collect(), (0..x.len()).collect()),
    };
    let pick = |v: &[f64], idx: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let model = fit(&pick(&x, &train), &pick(&y, &train))?;
    let predicted = model.predict_all(&pick(&x, &eval));
    let actual = pick(&y, &eval);
    Ok(EvaluationReport {
        mae: mae(&predicted, &actual)?,
        r2: r2_score(&predicted, &actual)?,
        mean_count: summary.mean_count,
        n_rows: summary.n_rows,
        n_cols: summary.n_cols,
        count_histogram: summary.count_histogram,
        model,
        n_eval: eval.len(),
    })
}
