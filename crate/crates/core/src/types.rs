//! Domain types shared by every stage.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Largest supported station count; [`MaskSet`] is a 64-bit set.
pub const MAX_STATIONS: usize = 64;

/// Zero-based station index. Reports print it one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StationId(usize);

impl StationId {
    pub fn new(index: usize, n_stations: usize) -> Result<Self> {
        if index < n_stations && index < MAX_STATIONS {
            Ok(Self(index))
        } else {
            Err(Error::OutOfRange {
                index,
                limit: n_stations.min(MAX_STATIONS),
            })
        }
    }

    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for StationId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "STA{}", self.0 + 1)
    }
}

/// One timestamped channel snapshot from one station.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiFrame {
    pub station: StationId,
    pub timestamp: f64,
    pub values: Vec<Complex64>,
}

/// Non-negative per-subcarrier amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeVector(pub Vec<f64>);

impl AmplitudeVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn mean_power(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().map(|a| a * a).sum::<f64>() / self.0.len() as f64
    }
}

/// A set of stations, used both for masks and for observed missingness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MaskSet(u64);

impl MaskSet {
    pub fn empty() -> Self {
        Self(0)
    }

    /// All of `0..n_stations`.
    pub fn full(n_stations: usize) -> Self {
        assert!(n_stations <= MAX_STATIONS);
        if n_stations == MAX_STATIONS {
            Self(u64::MAX)
        } else {
            Self((1u64 << n_stations) - 1)
        }
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I, n_stations: usize) -> Result<Self> {
        let mut set = Self::empty();
        for i in indices {
            set.insert(StationId::new(i, n_stations)?);
        }
        Ok(set)
    }

    pub fn from_bits(bits: u64) -> Self {
        Self(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn insert(&mut self, station: StationId) {
        self.0 |= 1 << station.index();
    }

    pub fn contains(self, index: usize) -> bool {
        index < MAX_STATIONS && self.0 & (1 << index) != 0
    }

    pub fn union(self, other: Self) -> Self {
        Self(self.0 | other.0)
    }

    pub fn difference(self, other: Self) -> Self {
        Self(self.0 & !other.0)
    }

    pub fn is_subset(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Largest member index plus one (0 for the empty set).
    pub fn span(self) -> usize {
        MAX_STATIONS - self.0.leading_zeros() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..MAX_STATIONS).filter(move |&i| self.contains(i))
    }
}

impl std::fmt::Display for MaskSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<String> = self.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

/// One station's aggregated input: observed amplitudes, or the missing
/// placeholder (materialized as zeros inside a [`MultiStationSample`]).
#[derive(Debug, Clone, PartialEq)]
pub enum StationSample {
    Observed(AmplitudeVector),
    Missing,
}

impl StationSample {
    pub fn is_missing(&self) -> bool {
        matches!(self, StationSample::Missing)
    }
}

/// Stacked per-station amplitude blocks with explicit missingness.
///
/// Values are stored flat (`n_stations * k`, station-major) as `f32`, which is
/// also the on-disk precision. Missing stations hold zeros and are flagged in
/// `missing`; the flag is authoritative, so an observed block that happens to
/// be all zeros is never mistaken for a missing one.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStationSample {
    n_stations: usize,
    k: usize,
    values: Vec<f32>,
    missing: MaskSet,
}

impl MultiStationSample {
    /// Builds a sample from per-station blocks (`None` = missing).
    pub fn from_stations(blocks: &[Option<Vec<f32>>], k: usize) -> Result<Self> {
        let n_stations = blocks.len();
        if n_stations == 0 || n_stations > MAX_STATIONS {
            return Err(Error::Shape(format!("station count {n_stations} not in 1..={MAX_STATIONS}")));
        }
        let mut values = vec![0.0f32; n_stations * k];
        let mut missing = MaskSet::empty();
        for (d, block) in blocks.iter().enumerate() {
            match block {
                Some(v) => {
                    if v.len() != k {
                        return Err(Error::Shape(format!("station {d} has {} values, expected {k}", v.len())));
                    }
                    values[d * k..(d + 1) * k].copy_from_slice(v);
                }
                None => missing.insert(StationId(d)),
            }
        }
        Ok(Self { n_stations, k, values, missing })
    }

    /// Builds a sample from a flat buffer and a missing set. Missing blocks are
    /// forced to zero.
    pub fn from_flat(n_stations: usize, k: usize, mut values: Vec<f32>, missing: MaskSet) -> Result<Self> {
        if n_stations == 0 || n_stations > MAX_STATIONS {
            return Err(Error::Shape(format!("station count {n_stations} not in 1..={MAX_STATIONS}")));
        }
        if values.len() != n_stations * k {
            return Err(Error::Shape(format!(
                "flat buffer has {} values, expected {}",
                values.len(),
                n_stations * k
            )));
        }
        if missing.span() > n_stations {
            return Err(Error::OutOfRange { index: missing.span() - 1, limit: n_stations });
        }
        for d in missing.iter() {
            values[d * k..(d + 1) * k].fill(0.0);
        }
        Ok(Self { n_stations, k, values, missing })
    }

    pub fn n_stations(&self) -> usize {
        self.n_stations
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Flat station-major values; missing blocks are zero.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn observed_missing(&self) -> MaskSet {
        self.missing
    }

    pub fn station(&self, d: usize) -> StationSample {
        if self.missing.contains(d) {
            StationSample::Missing
        } else {
            StationSample::Observed(AmplitudeVector(self.block(d).iter().map(|&v| f64::from(v)).collect()))
        }
    }

    /// Stacks per-station aggregates; observed blocks are stored as `f32`.
    pub fn from_station_samples(stations: &[StationSample], k: usize) -> Result<Self> {
        let blocks: Vec<Option<Vec<f32>>> = stations
            .iter()
            .map(|s| match s {
                StationSample::Observed(a) => Some(a.0.iter().map(|&v| v as f32).collect()),
                StationSample::Missing => None,
            })
            .collect();
        Self::from_stations(&blocks, k)
    }

    /// The block as the network sees it (zeros when missing).
    pub fn block(&self, d: usize) -> &[f32] {
        &self.values[d * self.k..(d + 1) * self.k]
    }

    pub(crate) fn mark_missing(&mut self, d: usize) {
        let k = self.k;
        self.values[d * k..(d + 1) * k].fill(0.0);
        self.missing.insert(StationId(d));
    }
}

/// A multi-station input with its normalized position label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub input: MultiStationSample,
    pub label: f32,
}

impl LabeledSample {
    pub fn new(input: MultiStationSample, label: f32) -> Result<Self> {
        if !(label.is_finite() && (0.0..=1.0).contains(&label)) {
            return Err(Error::Config(format!("label {label} outside [0, 1]")));
        }
        Ok(Self { input, label })
    }
}

/// Batch of global embeddings, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch(Matrix);

impl EmbeddingBatch {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if matrix.rows() < 2 {
            return Err(Error::Shape(format!("embedding batch needs n >= 2 rows, got {}", matrix.rows())));
        }
        if matrix.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("embedding batch contains non-finite values".into()));
        }
        Ok(Self(matrix))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn station_id_bounds() {
        assert!(StationId::new(7, 8).is_ok());
        assert!(StationId::new(8, 8).is_err());
        assert_eq!(StationId::new(0, 8).unwrap().to_string(), "STA1");
    }

    #[test]
    fn mask_set_ops() {
        let a = MaskSet::from_indices([1, 7], 8).unwrap();
        let b = MaskSet::from_indices([3], 8).unwrap();
        assert_eq!(a.union(b).iter().collect::<Vec<_>>(), vec![1, 3, 7]);
        assert_eq!(a.len(), 2);
        assert!(a.is_subset(MaskSet::full(8)));
        assert_eq!(MaskSet::full(8).len(), 8);
        assert_eq!(MaskSet::full(64).len(), 64);
        assert_eq!(a.span(), 8);
        assert_eq!(a.to_string(), "{2,8}");
        assert!(MaskSet::from_indices([8], 8).is_err());
    }

    #[test]
    fn all_zero_observed_block_is_not_missing() {
        let s = MultiStationSample::from_stations(&[Some(vec![0.0; 3]), None], 3).unwrap();
        assert_eq!(s.station(0), StationSample::Observed(AmplitudeVector(vec![0.0; 3])));
        assert_eq!(s.station(1), StationSample::Missing);
        assert_eq!(s.observed_missing(), MaskSet::from_indices([1], 2).unwrap());
    }

    #[test]
    fn from_flat_zeroes_missing_blocks() {
        let s = MultiStationSample::from_flat(2, 2, vec![1.0, 2.0, 3.0, 4.0], MaskSet::from_bits(0b10)).unwrap();
        assert_eq!(s.values(), &[1.0, 2.0, 0.0, 0.0]);
        assert!(MultiStationSample::from_flat(2, 2, vec![0.0; 4], MaskSet::from_bits(0b100)).is_err());
    }

    #[test]
    fn label_range_enforced() {
        let x = MultiStationSample::from_stations(&[None], 1).unwrap();
        assert!(LabeledSample::new(x.clone(), 0.5).is_ok());
        assert!(LabeledSample::new(x.clone(), 1.5).is_err());
        assert!(LabeledSample::new(x, f32::NAN).is_err());
    }

    #[test]
    fn embedding_batch_needs_two_rows() {
        assert!(EmbeddingBatch::new(Matrix::zeros(1, 3)).is_err());
        assert!(EmbeddingBatch::new(Matrix::zeros(2, 3)).is_ok());
    }
}
