use serde::{Deserialize, Serialize};

use crate::downstream::Predictor;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::par;
use crate::rng::RandomStream;
use crate::types::MaskSet;

pub fn rmse(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::Empty("rmse of nothing".into()));
    }
    let sq: f64 = predictions.iter().zip(labels).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok((sq / labels.len() as f64).sqrt())
}

/// Largest combination count evaluated exhaustively by [`CombinationPolicy::Auto`].
pub const EXHAUSTIVE_LIMIT: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CombinationPolicy {
    Exhaustive,
    MonteCarlo { draws: usize },
    /// Exhaustive up to [`EXHAUSTIVE_LIMIT`] combinations, else Monte Carlo.
    Auto { draws: usize },
}

impl Default for CombinationPolicy {
    fn default() -> Self {
        Self::Auto { draws: 500 }
    }
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<MaskSet> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(MaskSet::from_bits(idx.iter().fold(0u64, |b, &i| b | 1 << i)));
        let Some(pos) = (0..k).rev().find(|&p| idx[p] < n - k + p) else { break };
        idx[pos] += 1;
        for q in pos + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
    out
}

/// Uniformly random `k`-subset of `0..n` (partial Fisher-Yates).
fn random_subset(n: usize, k: usize, rng: &mut RandomStream) -> MaskSet {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut bits = 0u64;
    for i in 0..k {
        let j = i + rng.below(n - i);
        pool.swap(i, j);
        bits |= 1 << pool[i];
    }
    MaskSet::from_bits(bits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityResult {
    pub rmse: f64,
    /// Number of masking patterns evaluated.
    pub combinations: usize,
}

/// Zeroes the station blocks in `mask` for every row.
pub fn mask_rows(x: &Matrix, mask: MaskSet, k: usize) -> Matrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        for d in mask.iter() {
            row[d * k..(d + 1) * k].iter_mut().for_each(|v| *v = 0.0);
        }
    }
    out
}

/// Test RMSE when only `available` of `n_stations` stations deliver data.
/// Each pattern of `n_stations - available` masked stations is applied to
/// the whole test set; the per-pattern RMSEs are averaged uniformly, or, with
/// `pooled`, squared errors are pooled over all patterns before the root.
#[allow(clippy::too_many_arguments)]
pub fn eval_at_availability(
    model: &dyn Predictor,
    x: &Matrix,
    labels: &[f64],
    n_stations: usize,
    available: usize,
    policy: CombinationPolicy,
    pooled: bool,
    rng: &mut RandomStream,
) -> Result<AvailabilityResult> {
    if available == 0 || available > n_stations {
        return Err(Error::OutOfRange { index: available, limit: n_stations });
    }
    if !x.cols().is_multiple_of(n_stations) {
        return Err(Error::Shape(format!("{} columns do not split into {n_stations} stations", x.cols())));
    }
    let k = x.cols() / n_stations;
    let n_masked = n_stations - available;
    let total = binomial(n_stations, n_masked);
    let exhaustive = match policy {
        CombinationPolicy::Exhaustive => true,
        CombinationPolicy::MonteCarlo { .. } => false,
        CombinationPolicy::Auto { .. } => total <= EXHAUSTIVE_LIMIT,
    };
    let masks = if exhaustive {
        combinations(n_stations, n_masked)
    } else {
        let draws = match policy {
            CombinationPolicy::MonteCarlo { draws } | CombinationPolicy::Auto { draws } => draws,
            CombinationPolicy::Exhaustive => unreachable!(),
        };
        (0..draws).map(|_| random_subset(n_stations, n_masked, rng)).collect()
    };
    if masks.is_empty() {
        return Err(Error::Empty("no masking pattern to evaluate".into()));
    }
    let per_mask = par::try_map_slice(&masks, |&m| {
        let preds = model.predict_rows(&mask_rows(x, m, k))?;
        let sq: f64 = preds.iter().zip(labels).map(|(p, y)| (p - y) * (p - y)).sum();
        Ok::<_, Error>((rmse(&preds, labels)?, sq))
    })?;
    let rmse_value = if pooled {
        (per_mask.iter().map(|p| p.1).sum::<f64>() / (labels.len() * masks.len()) as f64).sqrt()
    } else {
        per_mask.iter().map(|p| p.0).sum::<f64>() / masks.len() as f64
    };
    Ok(AvailabilityResult { rmse: rmse_value, combinations: masks.len() })
}
