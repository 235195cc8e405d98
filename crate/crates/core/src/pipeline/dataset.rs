use serde::{Deserialize, Serialize};

use super::preprocess::PreprocessedStream;
use super::window::{aggregate_window, WindowSpec};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::par;
use crate::rng::RandomStream;
use crate::synth::LabelSource;
use crate::types::{LabeledSample, MaskSet, MultiStationSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Split::Train),
            1 => Ok(Split::Val),
            2 => Ok(Split::Test),
            _ => Err(Error::Format(format!("unknown split code {c}"))),
        }
    }
}

/// Relative sizes of the time-contiguous train/val/test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios(pub [f64; 3]);

impl Default for SplitRatios {
    fn default() -> Self {
        Self([7.0, 1.5, 1.5])
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|r| !(*r >= 0.0)) || self.0.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config(format!("invalid split ratios {:?}", self.0)));
        }
        Ok(())
    }

    /// `(n_train, n_val, n_test)` for `n` samples; the test split takes the
    /// remainder.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let total: f64 = self.0.iter().sum();
        let train = ((n as f64 * self.0[0] / total) + 1e-9).floor() as usize;
        let val = (((n as f64 * self.0[1] / total) + 1e-9).floor() as usize).min(n - train);
        (train, val, n - train - val)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario_hash: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub split: Split,
    pub n_stations: usize,
    pub k: usize,
    pub provenance: Provenance,
    pub split_ratios: SplitRatios,
}

/// Samples of one split. Labeled datasets carry one label per sample.
///
/// `times` holds the reference timestamps; it is kept in memory only and is
/// empty after loading from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub samples: Vec<MultiStationSample>,
    pub labels: Option<Vec<f32>>,
    pub times: Vec<f64>,
}

impl Dataset {
    pub fn new(meta: DatasetMeta, samples: Vec<MultiStationSample>, labels: Option<Vec<f32>>, times: Vec<f64>) -> Result<Self> {
        let d = Self { meta, samples, labels, times };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self.samples.iter().find(|s| s.n_stations() != self.meta.n_stations || s.k() != self.meta.k) {
            return Err(Error::Shape(format!(
                "sample shape {}x{} does not match dataset {}x{}",
                bad.n_stations(),
                bad.k(),
                self.meta.n_stations,
                self.meta.k
            )));
        }
        if let Some(l) = &self.labels {
            if l.len() != self.samples.len() {
                return Err(Error::Shape("label count differs from sample count".into()));
            }
            if l.iter().any(|v| !(v.is_finite() && (0.0..=1.0).contains(v))) {
                return Err(Error::Config("labels must lie in [0, 1]".into()));
            }
        }
        if !self.times.is_empty() && self.times.len() != self.samples.len() {
            return Err(Error::Shape("timestamp count differs from sample count".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    pub fn labels_f64(&self) -> Vec<f64> {
        self.labels.as_ref().map_or_else(Vec::new, |l| l.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn labeled_sample(&self, i: usize) -> Option<LabeledSample> {
        let label = *self.labels.as_ref()?.get(i)?;
        Some(LabeledSample { input: self.samples.get(i)?.clone(), label })
    }

    /// The subset at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            meta: self.meta.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            times: if self.times.is_empty() { Vec::new() } else { indices.iter().map(|&i| self.times[i]).collect() },
        }
    }

    /// `n` distinct samples drawn uniformly, kept in time order.
    pub fn subsample(&self, n: usize, rng: &mut RandomStream) -> Self {
        if n >= self.len() {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        rng.shuffle(&mut idx);
        idx.truncate(n);
        idx.sort_unstable();
        self.select(&idx)
    }

    /// Fraction of station slots that are missing.
    pub fn missing_rate(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let missing: usize = self.samples.iter().map(|s| s.observed_missing().len()).sum();
        missing as f64 / (self.samples.len() * self.meta.n_stations) as f64
    }

    /// Inputs as an `n x (N_d * K)` matrix, one flattened sample per row.
    pub fn features(&self) -> Matrix {
        let width = self.meta.n_stations * self.meta.k;
        let mut data = Vec::with_capacity(self.len() * width);
        for s in &self.samples {
            data.extend(s.values().iter().map(|&v| f64::from(v)));
        }
        Matrix::from_vec(self.len(), width, data).expect("samples match dataset metadata")
    }
}

pub fn detect_missing(x: &MultiStationSample) -> MaskSet {
    x.observed_missing()
}

/// Reference timestamps `t0 + w/2 + i / rate` whose windows fit inside
/// `[t0, t1]`.
pub fn reference_grid(t0: f64, t1: f64, spec: &WindowSpec) -> Vec<f64> {
    let span = t1 - t0 - spec.width_s;
    if span < 0.0 {
        return Vec::new();
    }
    let n = (span * spec.rate_hz + 1e-9).floor() as usize + 1;
    (0..n).map(|i| t0 + spec.half() + i as f64 / spec.rate_hz).collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildStats {
    pub samples: usize,
    pub missing_slots: usize,
    pub degenerate_frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub stats: BuildStats,
}

fn check_streams(streams: &[PreprocessedStream]) -> Result<usize> {
    let k = streams.first().map(|s| s.k).ok_or_else(|| Error::Empty("no station streams".into()))?;
    if streams.iter().any(|s| s.k != k) {
        return Err(Error::Shape("streams disagree on subcarrier count".into()));
    }
    Ok(k)
}

fn stack_at(streams: &[PreprocessedStream], center: f64, spec: &WindowSpec, k: usize) -> Result<MultiStationSample> {
    let stations: Vec<_> = streams.iter().map(|s| aggregate_window(s, center, spec)).collect();
    MultiStationSample::from_station_samples(&stations, k)
}

/// Builds time-ordered labeled samples over `[0, duration]` and splits them
/// into contiguous train/val/test blocks.
pub fn build_labeled_dataset(
    streams: &[PreprocessedStream],
    labels: &(dyn LabelSource + Sync),
    spec: &WindowSpec,
    duration_s: f64,
    ratios: SplitRatios,
    provenance: Provenance,
) -> Result<LabeledSplits> {
    spec.validate()?;
    ratios.validate()?;
    let k = check_streams(streams)?;
    let times = reference_grid(0.0, duration_s, spec);
    if times.is_empty() {
        return Err(Error::Empty(format!("a {duration_s} s run holds no {} s window", spec.width_s)));
    }
    let samples = par::try_map_slice(&times, |&t| stack_at(streams, t, spec, k))?;
    let label_values: Vec<f32> = times.iter().map(|&t| labels.label_at(t) as f32).collect();

    let stats = BuildStats {
        samples: samples.len(),
        missing_slots: samples.iter().map(|s| s.observed_missing().len()).sum(),
        degenerate_frames: streams.iter().map(|s| s.degenerate_frames).sum(),
    };
    let (n_train, n_val, _) = ratios.counts(samples.len());
    let meta = |split| DatasetMeta { split, n_stations: streams.len(), k, provenance, split_ratios: ratios };
    let part = |split, range: std::ops::Range<usize>| {
        Dataset::new(
            meta(split),
            samples[range.clone()].to_vec(),
            Some(label_values[range.clone()].to_vec()),
            times[range].to_vec(),
        )
    };
    let n = samples.len();
    Ok(LabeledSplits {
        train: part(Split::Train, 0..n_train)?,
        val: part(Split::Val, n_train..n_train + n_val)?,
        test: part(Split::Test, n_train + n_val..n)?,
        stats,
    })
}

/// Builds unlabeled samples at the (higher) self-supervised rate, restricted
/// to `[0, train_end]` so no window is centered in validation or test time.
pub fn build_unlabeled_dataset(
    streams: &[PreprocessedStream],
    ssl: &WindowSpec,
    label_rate_hz: f64,
    train_end: f64,
    provenance: Provenance,
) -> Result<Dataset> {
    ssl.validate()?;
    if !(ssl.rate_hz > label_rate_hz) {
        return Err(Error::Config(format!(
            "unlabeled rate {} Hz must exceed the label rate {label_rate_hz} Hz",
            ssl.rate_hz
        )));
    }
    let k = check_streams(streams)?;
    let times = reference_grid(0.0, train_end + ssl.half(), ssl);
    if times.is_empty() {
        return Err(Error::Empty("training span holds no window".into()));
    }
    let samples = par::try_map_slice(&times, |&t| stack_at(streams, t, ssl, k))?;
    Dataset::new(
        DatasetMeta {
            split: Split::Train,
            n_stations: streams.len(),
            k,
            provenance,
            split_ratios: SplitRatios::default(),
        },
        samples,
        None,
        times,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_count_matches_closed_form() {
        let spec = WindowSpec::new(2.0, 30.0).unwrap();
        let g = reference_grid(0.0, 600.0, &spec);
        assert_eq!(g.len(), ((600.0 - 2.0) * 30.0f64).floor() as usize + 1);
        assert_eq!(g.len(), 17_941);
        assert!(g.first().unwrap() - 1.0 >= 0.0);
        assert!(g.last().unwrap() + 1.0 <= 600.0 + 1e-9);
    }

    #[test]
    fn split_counts() {
        assert_eq!(SplitRatios::default().counts(10_000), (7000, 1500, 1500));
        let (a, b, c) = SplitRatios::default().counts(17_941);
        assert_eq!(a + b + c, 17_941);
    }
}
