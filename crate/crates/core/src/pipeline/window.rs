use serde::{Deserialize, Serialize};

use super::preprocess::{normalize_power, PreprocessOrder, PreprocessedStream};
use crate::error::{Error, Result};
use crate::types::{AmplitudeVector, StationSample};

/// Centered aggregation window of `width_s` seconds, with reference
/// timestamps placed at `rate_hz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub width_s: f64,
    pub rate_hz: f64,
}

impl WindowSpec {
    pub fn new(width_s: f64, rate_hz: f64) -> Result<Self> {
        let spec = Self { width_s, rate_hz };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_s > 0.0 && self.rate_hz > 0.0) {
            return Err(Error::Config(format!("window width {} and rate {} must be positive", self.width_s, self.rate_hz)));
        }
        Ok(())
    }

    pub fn half(&self) -> f64 {
        self.width_s / 2.0
    }
}

/// Frame index range inside `[center - w/2, center + w/2]` (both ends
/// inclusive).
pub(crate) fn window_range(times: &[f64], center: f64, spec: &WindowSpec) -> (usize, usize) {
    let lo = times.partition_point(|&t| t < center - spec.half());
    let hi = times.partition_point(|&t| t <= center + spec.half());
    (lo, hi.max(lo))
}

/// Mean of the preprocessed frames inside the window, or `Missing` when the
/// window holds no frame.
pub fn aggregate_window(stream: &PreprocessedStream, center: f64, spec: &WindowSpec) -> StationSample {
    let (lo, hi) = window_range(&stream.times, center, spec);
    if lo == hi {
        return StationSample::Missing;
    }
    let mut acc = vec![0.0; stream.k];
    for i in lo..hi {
        acc.iter_mut().zip(stream.vector(i)).for_each(|(a, v)| *a += v);
    }
    let n = (hi - lo) as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    let mean = AmplitudeVector(acc);
    match stream.order {
        PreprocessOrder::NormalizeThenAverage => StationSample::Observed(mean),
        PreprocessOrder::AverageThenNormalize => StationSample::Observed(normalize_power(&mean).vector),
    }
}
