use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::Scenario;
use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub period_s: f64,
    pub phase: f64,
}

impl Sinusoid {
    fn eval(&self, t: f64) -> f64 {
        self.amplitude * (TAU * t / self.period_s + self.phase).sin()
    }
}

/// A smooth back-and-forth walk: the center of the room plus a few
/// low-frequency sinusoids per axis. The amplitudes are bounded so the walker
/// never leaves the room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub center: [f64; 2],
    pub x_terms: Vec<Sinusoid>,
    pub y_terms: Vec<Sinusoid>,
    pub x_max: f64,
    pub duration_s: f64,
}

impl Trajectory {
    pub fn position(&self, t: f64) -> [f64; 2] {
        let x = self.center[0] + self.x_terms.iter().map(|s| s.eval(t)).sum::<f64>();
        let y = self.center[1] + self.y_terms.iter().map(|s| s.eval(t)).sum::<f64>();
        [x, y]
    }

    /// Normalized horizontal position `x / x_max`.
    pub fn label(&self, t: f64) -> f64 {
        (self.position(t)[0] / self.x_max).clamp(0.0, 1.0)
    }

    /// Long-run time average of `(label(t) - c)^2`.
    ///
    /// Cross terms between sinusoids of different periods average out, and
    /// each term contributes `amplitude^2 / 2`.
    pub fn label_mean_square_deviation(&self, c: f64) -> f64 {
        let offset = self.center[0] / self.x_max - c;
        offset * offset
            + self
                .x_terms
                .iter()
                .map(|s| (s.amplitude / self.x_max).powi(2) / 2.0)
                .sum::<f64>()
    }
}

/// Source of the continuous supervision signal.
pub trait LabelSource {
    fn label_at(&self, t: f64) -> f64;
}

impl LabelSource for Trajectory {
    fn label_at(&self, t: f64) -> f64 {
        self.label(t)
    }
}

/// Discretely sampled labels, e.g. from a camera-based labeler. Lookups take
/// the temporally nearest sample, ties going to the earlier one.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledLabels {
    times: Vec<f64>,
    labels: Vec<f64>,
}

impl SampledLabels {
    pub fn new(times: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != labels.len() {
            return Err(Error::Shape("label stream must be non-empty with matching lengths".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("label timestamps must be strictly increasing".into()));
        }
        Ok(Self { times, labels })
    }
}

impl LabelSource for SampledLabels {
    fn label_at(&self, t: f64) -> f64 {
        let i = self.times.partition_point(|&s| s < t);
        if i == 0 {
            return self.labels[0];
        }
        if i == self.times.len() {
            return self.labels[i - 1];
        }
        if t - self.times[i - 1] <= self.times[i] - t {
            self.labels[i - 1]
        } else {
            self.labels[i]
        }
    }
}

pub fn gen_trajectory(scenario: &Scenario, rng: &mut RandomStream) -> Trajectory {
    let [w, h] = scenario.room_extent;
    let half_span = w * (0.5 - scenario.walk_margin);
    let x_terms = [(0.65, 16.0, 28.0), (0.25, 6.0, 11.0), (0.10, 45.0, 90.0)]
        .iter()
        .map(|&(frac, lo, hi)| Sinusoid {
            amplitude: frac * half_span,
            period_s: rng.uniform_range(lo, hi),
            phase: rng.uniform_range(0.0, TAU),
        })
        .collect();
    let y_terms = [(0.12, 20.0, 40.0), (0.05, 7.0, 13.0)]
        .iter()
        .map(|&(frac, lo, hi)| Sinusoid {
            amplitude: frac * h,
            period_s: rng.uniform_range(lo, hi),
            phase: rng.uniform_range(0.0, TAU),
        })
        .collect();
    Trajectory {
        center: [w / 2.0, h / 2.0],
        x_terms,
        y_terms,
        x_max: w,
        duration_s: scenario.duration_s,
    }
}
