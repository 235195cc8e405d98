use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::masking::{apply_input_mask, MaskSampler};
use crate::rng::RandomStream;
use crate::types::{MaskSet, MultiStationSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentKind {
    None,
    /// Station-wise masking: whole stations zeroed with probability `p_mask`.
    Sma,
    /// A contiguous run of subcarriers zeroed in every observed station.
    RandomErase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugStrategy {
    /// Every training sample is augmented once and appended to the set.
    OfflineDouble,
    /// Each sample in each batch is augmented with probability `p_aug`.
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub kind: AugmentKind,
    pub p_mask: f64,
    pub erase_range: (f64, f64),
    pub p_aug: f64,
    pub strategy: AugStrategy,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self::none()
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self { kind: AugmentKind::None, p_mask: 0.5, erase_range: (0.4, 0.6), p_aug: 0.5, strategy: AugStrategy::OfflineDouble }
    }

    pub fn sma(p_mask: f64, strategy: AugStrategy) -> Self {
        Self { kind: AugmentKind::Sma, p_mask, strategy, ..Self::none() }
    }

    pub fn random_erase(s_l: f64, s_h: f64, strategy: AugStrategy) -> Self {
        Self { kind: AugmentKind::RandomErase, erase_range: (s_l, s_h), strategy, ..Self::none() }
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("p_mask", self.p_mask)?;
        check_probability("p_aug", self.p_aug)?;
        let (lo, hi) = self.erase_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!("erase range ({lo}, {hi}) must satisfy 0 <= s_l <= s_h <= 1")));
        }
        Ok(())
    }

    pub fn is_none(&self) -> bool {
        self.kind == AugmentKind::None
    }

    /// Augments one flattened sample in place. `observed_missing` lists the
    /// stations that carried no data to begin with.
    pub(crate) fn apply_row(
        &self,
        row: &mut [f64],
        n_stations: usize,
        k: usize,
        observed_missing: MaskSet,
        rng: &mut RandomStream,
    ) -> Result<()> {
        match self.kind {
            AugmentKind::None => {}
            AugmentKind::Sma => {
                let mask = MaskSampler::new(self.p_mask, n_stations)?.sample(rng);
                for d in mask.iter() {
                    row[d * k..(d + 1) * k].iter_mut().for_each(|v| *v = 0.0);
                }
            }
            AugmentKind::RandomErase => {
                let (lo, hi) = self.erase_range;
                for d in (0..n_stations).filter(|&d| !observed_missing.contains(d)) {
                    let (start, len) = erase_run(k, lo, hi, rng);
                    row[d * k + start..d * k + start + len].iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
        Ok(())
    }
}

/// Start and length of one erased run over `k` subcarriers.
fn erase_run(k: usize, lo: f64, hi: f64, rng: &mut RandomStream) -> (usize, usize) {
    let f = rng.uniform_range(lo, hi);
    let len = ((f * k as f64 - 1e-9).ceil().max(0.0) as usize).min(k);
    let start = rng.below(k - len + 1);
    (start, len)
}

/// Input-level station masking of one sample.
pub fn sma_augment(x: &MultiStationSample, p_mask: f64, rng: &mut RandomStream) -> Result<MultiStationSample> {
    let mask = MaskSampler::new(p_mask, x.n_stations())?.sample(rng);
    Ok(apply_input_mask(x, mask))
}

/// Zeroes an independently placed contiguous subcarrier run in each observed
/// station. The run covers `ceil(f K)` subcarriers with `f ~ U[s_l, s_h]`.
pub fn random_erase(x: &MultiStationSample, s_l: f64, s_h: f64, rng: &mut RandomStream) -> Result<MultiStationSample> {
    AugmentConfig::random_erase(s_l, s_h, AugStrategy::Online).validate()?;
    let (n, k) = (x.n_stations(), x.k());
    let mut values = x.values().to_vec();
    for d in (0..n).filter(|&d| !x.observed_missing().contains(d)) {
        let (start, len) = erase_run(k, s_l, s_h, rng);
        values[d * k + start..d * k + start + len].iter_mut().for_each(|v| *v = 0.0);
    }
    MultiStationSample::from_flat(n, k, values, x.observed_missing())
}
