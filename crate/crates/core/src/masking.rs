//! Station-wise masking at the input level and at the embedding level.

use crate::error::{check_probability, Error, Result};
use crate::rng::RandomStream;
use crate::types::{MaskSet, MultiStationSample, MAX_STATIONS};

/// Validated Bernoulli mask sampler: each station is masked independently
/// with probability `p_mask`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSampler {
    p_mask: f64,
    n_stations: usize,
}

impl MaskSampler {
    pub fn new(p_mask: f64, n_stations: usize) -> Result<Self> {
        check_probability("p_mask", p_mask)?;
        if n_stations == 0 || n_stations > MAX_STATIONS {
            return Err(Error::Config(format!("station count {n_stations} not in 1..={MAX_STATIONS}")));
        }
        Ok(Self { p_mask, n_stations })
    }

    pub fn p_mask(&self) -> f64 {
        self.p_mask
    }

    /// Consumes exactly `n_stations` uniform draws.
    pub fn sample(&self, rng: &mut RandomStream) -> MaskSet {
        let mut bits = 0u64;
        for d in 0..self.n_stations {
            if rng.bernoulli(self.p_mask) {
                bits |= 1 << d;
            }
        }
        MaskSet::from_bits(bits)
    }
}

pub fn sample_mask_set(p_mask: f64, n_stations: usize, rng: &mut RandomStream) -> Result<MaskSet> {
    Ok(MaskSampler::new(p_mask, n_stations)?.sample(rng))
}

/// Replaces the blocks of stations in `mask` with the zero placeholder and
/// marks them missing. Already-missing stations stay missing.
pub fn apply_input_mask(x: &MultiStationSample, mask: MaskSet) -> MultiStationSample {
    let mut out = x.clone();
    for d in mask.iter().take_while(|&d| d < x.n_stations()) {
        out.mark_missing(d);
    }
    out
}

/// Replaces the embeddings of masked stations by zero vectors; the others are
/// returned unchanged.
pub fn apply_embedding_mask(q: &[Vec<f64>], mask: MaskSet) -> Vec<Vec<f64>> {
    q.iter()
        .enumerate()
        .map(|(d, v)| if mask.contains(d) { vec![0.0; v.len()] } else { v.clone() })
        .collect()
}
