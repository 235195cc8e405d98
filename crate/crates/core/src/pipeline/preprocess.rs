use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::CsiStream;
use crate::types::{AmplitudeVector, CsiFrame, StationId};

/// Frames whose mean power falls below this are treated as degenerate.
pub const MIN_MEAN_POWER: f64 = 1e-12;

/// Data subcarriers of a `k_raw`-point OFDM grid. For 64 subcarriers this
/// drops the guard bands (0-5, 59-63) and DC (32), leaving 52. Other sizes
/// only drop DC.
pub fn default_keep_list(k_raw: usize) -> Vec<usize> {
    if k_raw == 64 {
        (6..59).filter(|&k| k != 32).collect()
    } else {
        (0..k_raw).filter(|&k| k != k_raw / 2).collect()
    }
}

pub fn select_subcarriers(frame: &CsiFrame, keep: &[usize]) -> Result<AmplitudeVector> {
    keep.iter()
        .map(|&k| {
            frame
                .values
                .get(k)
                .map(|c| c.norm())
                .ok_or(Error::OutOfRange { index: k, limit: frame.values.len() })
        })
        .collect::<Result<Vec<_>>>()
        .map(AmplitudeVector)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub vector: AmplitudeVector,
    /// Mean power was below [`MIN_MEAN_POWER`]; `vector` is all zeros.
    pub degenerate: bool,
}

/// Scales amplitudes to unit mean power, removing per-frame gain.
pub fn normalize_power(a: &AmplitudeVector) -> Normalized {
    let p = a.mean_power();
    if !(p >= MIN_MEAN_POWER) {
        return Normalized { vector: AmplitudeVector(vec![0.0; a.len()]), degenerate: true };
    }
    let s = p.sqrt();
    Normalized { vector: AmplitudeVector(a.0.iter().map(|v| v / s).collect()), degenerate: false }
}

/// Whether power normalization happens per frame before window averaging
/// (default) or once on the window average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessOrder {
    #[default]
    NormalizeThenAverage,
    AverageThenNormalize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    pub keep: Vec<usize>,
    pub order: PreprocessOrder,
}

impl Preprocessor {
    pub fn new(k_raw: usize) -> Self {
        Self { keep: default_keep_list(k_raw), order: PreprocessOrder::default() }
    }

    pub fn k(&self) -> usize {
        self.keep.len()
    }
}

/// A station's frames reduced to the vectors that window averaging consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedStream {
    pub station: StationId,
    pub k: usize,
    pub order: PreprocessOrder,
    pub times: Vec<f64>,
    /// `times.len() * k` values, frame-major.
    pub vectors: Vec<f64>,
    pub degenerate_frames: usize,
}

impl PreprocessedStream {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.k..(i + 1) * self.k]
    }
}

pub fn preprocess_stream(stream: &CsiStream, pre: &Preprocessor) -> Result<PreprocessedStream> {
    let k = pre.k();
    let mut times = Vec::with_capacity(stream.frames.len());
    let mut vectors = Vec::with_capacity(stream.frames.len() * k);
    let mut degenerate_frames = 0;
    for f in &stream.frames {
        let a = select_subcarriers(f, &pre.keep)?;
        match pre.order {
            PreprocessOrder::NormalizeThenAverage => {
                let n = normalize_power(&a);
                degenerate_frames += usize::from(n.degenerate);
                vectors.extend_from_slice(&n.vector.0);
            }
            PreprocessOrder::AverageThenNormalize => vectors.extend_from_slice(&a.0),
        }
        times.push(f.timestamp);
    }
    Ok(PreprocessedStream { station: stream.station, k, order: pre.order, times, vectors, degenerate_frames })
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;

    use super::*;

    fn frame(values: Vec<Complex64>) -> CsiFrame {
        CsiFrame { station: StationId::new(0, 1).unwrap(), timestamp: 0.0, values }
    }

    #[test]
    fn unit_magnitudes() {
        let f = frame(vec![Complex64::new(1.0, 0.0); 64]);
        let a = select_subcarriers(&f, &default_keep_list(64)).unwrap();
        assert!(a.0.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn magnitude_of_three_minus_four_i() {
        let mut v = vec![Complex64::new(1.0, 0.0); 64];
        v[10] = Complex64::new(3.0, -4.0);
        let a = select_subcarriers(&frame(v), &[10, 11]).unwrap();
        assert_eq!(a.0, vec![5.0, 1.0]);
    }

    #[test]
    fn default_keep_list_has_52_data_subcarriers() {
        let keep = default_keep_list(64);
        assert_eq!(keep.len(), 52);
        assert!(!keep.contains(&32));
        assert!(keep.iter().all(|&k| (6..59).contains(&k)));
        let f = frame(vec![Complex64::new(0.5, 0.5); 64]);
        assert_eq!(select_subcarriers(&f, &keep).unwrap().len(), 52);
    }

    #[test]
    fn out_of_range_index_rejected() {
        let f = frame(vec![Complex64::new(1.0, 0.0); 4]);
        assert!(matches!(select_subcarriers(&f, &[4]), Err(Error::OutOfRange { index: 4, limit: 4 })));
    }

    #[test]
    fn constant_amplitude_normalizes_to_ones() {
        let n = normalize_power(&AmplitudeVector(vec![2.5; 52]));
        assert!(!n.degenerate);
        assert!(n.vector.0.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn hand_evaluated_pair() {
        let n = normalize_power(&AmplitudeVector(vec![3.0, 4.0]));
        let s = 12.5f64.sqrt();
        assert_eq!(n.vector.0, vec![3.0 / s, 4.0 / s]);
        assert!((n.vector.0[0] - 0.848_528_137_423_857).abs() < 1e-12);
        assert!((n.vector.0[1] - 1.131_370_849_898_476).abs() < 1e-12);
    }

    #[test]
    fn scale_invariant() {
        let a = AmplitudeVector(vec![0.3, 1.7, 2.2, 0.9]);
        let b = AmplitudeVector(a.0.iter().map(|v| v * 7.0).collect());
        let (na, nb) = (normalize_power(&a), normalize_power(&b));
        for (x, y) in na.vector.0.iter().zip(&nb.vector.0) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_frames_become_zero() {
        let n = normalize_power(&AmplitudeVector(vec![1e-9; 8]));
        assert!(n.degenerate);
        assert!(n.vector.0.iter().all(|&v| v == 0.0));
    }
}
