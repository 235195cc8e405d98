use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::pipeline::{
    build_labeled_dataset, build_unlabeled_dataset, preprocess_stream, BuildStats, Dataset, PreprocessOrder, Preprocessor,
    Provenance, SplitRatios, WindowSpec,
};
use crate::rng::RandomStream;
use crate::synth::{gen_csi_streams, gen_trajectory, CsiStream, Scenario, Trajectory};

/// Optional caps on split sizes; each split is uniformly subsampled (time
/// order kept) down to its cap.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SizeCaps {
    pub unlabeled: Option<usize>,
    pub train: Option<usize>,
    pub val: Option<usize>,
    pub test: Option<usize>,
}

impl SizeCaps {
    /// 2,000 unlabeled, 1,000 labeled training and 300 test samples.
    pub fn desk() -> Self {
        Self { unlabeled: Some(2000), train: Some(1000), val: Some(300), test: Some(300) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub scenario: Scenario,
    /// Window and reference rate of labeled samples.
    pub window: WindowSpec,
    /// Reference rate of unlabeled samples (same window width).
    pub ssl_rate_hz: f64,
    pub split_ratios: SplitRatios,
    pub preprocess_order: PreprocessOrder,
    pub caps: SizeCaps,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            window: WindowSpec { width_s: 2.0, rate_hz: 30.0 },
            ssl_rate_hz: 160.0,
            split_ratios: SplitRatios::default(),
            preprocess_order: PreprocessOrder::default(),
            caps: SizeCaps::default(),
        }
    }
}

/// Every split of one simulated run.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub unlabeled: Dataset,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub trajectory: Trajectory,
    pub stats: BuildStats,
}

/// Trajectory and raw frame streams of one simulated run.
pub fn simulate(scenario: &Scenario, seed: u64) -> Result<(Trajectory, Vec<CsiStream>)> {
    scenario.validate()?;
    let rng = RandomStream::new(seed, "experiment");
    let trajectory = gen_trajectory(scenario, &mut rng.derive("trajectory"));
    let streams = gen_csi_streams(scenario, &trajectory, &rng.derive("streams"))?;
    Ok((trajectory, streams))
}

/// Preprocesses `streams`, windows them into labeled splits and an
/// unlabeled set confined to training time, then applies the size caps.
pub fn build_from_streams(cfg: &DataConfig, trajectory: Trajectory, streams: &[CsiStream], seed: u64) -> Result<ExperimentData> {
    let pre = Preprocessor { order: cfg.preprocess_order, ..Preprocessor::new(cfg.scenario.k_raw) };
    let processed = par::try_map_slice(streams, |s| preprocess_stream(s, &pre))?;
    let provenance = Provenance { scenario_hash: cfg.scenario.content_hash(), seed };
    let splits = build_labeled_dataset(
        &processed,
        &trajectory,
        &cfg.window,
        cfg.scenario.duration_s,
        cfg.split_ratios,
        provenance,
    )?;
    let train_end = *splits.train.times.last().ok_or_else(|| Error::Empty("training split is empty".into()))?;
    let ssl = WindowSpec::new(cfg.window.width_s, cfg.ssl_rate_hz)?;
    let unlabeled = build_unlabeled_dataset(&processed, &ssl, cfg.window.rate_hz, train_end, provenance)?;

    let rng = RandomStream::new(seed, "experiment").derive("caps");
    let cap = |d: Dataset, c: Option<usize>, name: &str| match c {
        Some(n) => d.subsample(n, &mut rng.derive(name)),
        None => d,
    };
    Ok(ExperimentData {
        unlabeled: cap(unlabeled, cfg.caps.unlabeled, "unlabeled"),
        train: cap(splits.train, cfg.caps.train, "train"),
        val: cap(splits.val, cfg.caps.val, "val"),
        test: cap(splits.test, cfg.caps.test, "test"),
        trajectory,
        stats: splits.stats,
    })
}

pub fn build_experiment_data(cfg: &DataConfig, seed: u64) -> Result<ExperimentData> {
    let (trajectory, streams) = simulate(&cfg.scenario, seed)?;
    build_from_streams(cfg, trajectory, &streams, seed)
}
