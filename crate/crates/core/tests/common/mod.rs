//! Oracles shared by the integration test targets. Each one recomputes a
//! quantity the slow, obvious way so the library's version can be checked.
#![allow(dead_code)]

use csi_fusion::pipeline::{normalize_power, select_subcarriers};
use csi_fusion::rng::RandomStream;
use csi_fusion::synth::{outage_intervals, CsiStream, Scenario};

/// Window mean over a linear scan of every raw frame of the stream, or `None`
/// when no frame falls inside `[center - w/2, center + w/2]`.
pub fn brute_window(stream: &CsiStream, keep: &[usize], center: f64, width: f64) -> Option<Vec<f64>> {
    let half = width / 2.0;
    let mut acc = vec![0.0; keep.len()];
    let mut n = 0usize;
    for f in &stream.frames {
        if f.timestamp >= center - half && f.timestamp <= center + half {
            let a = select_subcarriers(f, keep).unwrap();
            for (s, v) in acc.iter_mut().zip(normalize_power(&a).vector.0) {
                *s += v;
            }
            n += 1;
        }
    }
    (n > 0).then(|| acc.into_iter().map(|s| s / n as f64).collect())
}

/// Whether any frame timestamp (a point interval) overlaps the window.
pub fn window_has_frame(times: &[f64], center: f64, width: f64) -> bool {
    let (lo, hi) = (center - width / 2.0, center + width / 2.0);
    times.iter().any(|&t| t <= hi && t >= lo)
}

/// The silent intervals of station `d` in the run simulated from `seed`,
/// regenerated from the same random sub-streams the simulator uses.
pub fn station_outages(scenario: &Scenario, seed: u64, d: usize) -> Vec<(f64, f64)> {
    let mut rng =
        RandomStream::new(seed, "experiment").derive("streams").derive(&format!("station-{d}")).derive("outage");
    outage_intervals(&scenario.outage, scenario.duration_s, &mut rng)
}

/// Whether one silent interval covers the whole window.
pub fn covered_by_outage(outages: &[(f64, f64)], center: f64, width: f64) -> bool {
    let (lo, hi) = (center - width / 2.0, center + width / 2.0);
    outages.iter().any(|&(s, e)| s <= lo && hi < e)
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Per-column unbiased variance hinge, mean of squared off-diagonal
/// covariances, and mean squared row distance, written out with loops.
pub fn naive_variance(z: &[Vec<f64>], gamma: f64, eps: f64) -> f64 {
    let (n, l) = (z.len(), z[0].len());
    let mut total = 0.0;
    for j in 0..l {
        let mean = z.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = z.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / (n as f64 - 1.0);
        let std = (var + eps).sqrt();
        total += if gamma - std > 0.0 { gamma - std } else { 0.0 };
    }
    total / l as f64
}

pub fn naive_invariance(z: &[Vec<f64>], z2: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (a, b) in z.iter().zip(z2) {
        for (x, y) in a.iter().zip(b) {
            total += (x - y) * (x - y);
        }
    }
    total / z.len() as f64
}

pub fn naive_covariance(z: &[Vec<f64>]) -> f64 {
    let (n, l) = (z.len(), z[0].len());
    let means: Vec<f64> = (0..l).map(|j| z.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut total = 0.0;
    for a in 0..l {
        for b in 0..l {
            if a == b {
                continue;
            }
            let c = z.iter().map(|r| (r[a] - means[a]) * (r[b] - means[b])).sum::<f64>() / (n as f64 - 1.0);
            total += c * c;
        }
    }
    total / l as f64
}
