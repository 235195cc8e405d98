use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::data::ExperimentData;
use super::methods::{train_method, Method, MethodConfig, PretrainCache, TrainInputs};
use super::metrics::{eval_at_availability, CombinationPolicy};
use crate::downstream::Predictor;
use crate::error::{Error, Result};
use crate::pipeline::Dataset;
use crate::rng::RandomStream;

/// Uniformly random subset of `ceil(ratio * N)` training samples, kept in
/// time order. Deterministic in `seed`.
pub fn label_ratio_subset(train: &Dataset, ratio: f64, seed: u64) -> Result<Dataset> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!("label ratio must lie in (0, 1], got {ratio}")));
    }
    let n = label_count(train.len(), ratio);
    let mut rng = RandomStream::new(seed, &format!("labels/ratio={ratio}"));
    Ok(train.subsample(n, &mut rng))
}

/// `ceil(ratio * n)`, guarding against the product landing a hair above an
/// integer.
pub fn label_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64 - 1e-9).ceil().max(1.0) as usize).min(n)
}

/// Axes of an experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub available_station_counts: Vec<usize>,
    pub label_ratios: Vec<f64>,
    /// (pre-training p_mask, SMA p_mask) pairs. Methods that use either rate
    /// get one cell per pair; the rest ignore the grid.
    pub p_mask_grid: Vec<(f64, f64)>,
    pub seeds: Vec<u64>,
    pub policy: CombinationPolicy,
    /// Pool squared errors over masking patterns instead of averaging the
    /// per-pattern RMSEs.
    pub pooled: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            available_station_counts: (1..=8).collect(),
            label_ratios: vec![1.0],
            p_mask_grid: Vec::new(),
            seeds: vec![0],
            policy: CombinationPolicy::default(),
            pooled: false,
        }
    }
}

impl SweepSpec {
    /// Label ratios of the office preset, as fractions.
    pub fn office(n_stations: usize) -> Self {
        Self { available_station_counts: (1..=n_stations).collect(), label_ratios: vec![0.001, 0.1, 1.0], ..Self::default() }
    }

    pub fn factory(n_stations: usize) -> Self {
        Self { available_station_counts: (1..=n_stations).collect(), label_ratios: vec![0.3, 0.5, 1.0], ..Self::default() }
    }

    /// Full square grid over `rates` for both masking stages.
    pub fn square_grid(rates: &[f64]) -> Vec<(f64, f64)> {
        rates.iter().flat_map(|&a| rates.iter().map(move |&b| (a, b))).collect()
    }

    pub fn validate(&self, n_stations: usize) -> Result<()> {
        if let Some(&k) = self.available_station_counts.iter().find(|&&k| k == 0 || k > n_stations) {
            return Err(Error::Config(format!("available count {k} outside [1, {n_stations}]")));
        }
        if let Some(r) = self.label_ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return Err(Error::Config(format!("label ratio {r} outside (0, 1]")));
        }
        if self.p_mask_grid.iter().any(|&(a, b)| !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b)) {
            return Err(Error::Config("p_mask grid values must lie in [0, 1]".into()));
        }
        if self.seeds.is_empty() || self.available_station_counts.is_empty() || self.label_ratios.is_empty() {
            return Err(Error::Config("sweep needs at least one seed, k and label ratio".into()));
        }
        Ok(())
    }
}

/// One evaluated grid cell. `rmse` is empty when the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub available: usize,
    pub label_ratio: f64,
    pub seed: u64,
    pub pretrain_p_mask: Option<f64>,
    pub sma_p_mask: Option<f64>,
    pub rmse: Option<f64>,
    pub combinations: usize,
    pub error: Option<String>,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub available: usize,
    pub label_ratio: f64,
    pub pretrain_p_mask: Option<f64>,
    pub sma_p_mask: Option<f64>,
    pub n_seeds: usize,
    pub n_failed: usize,
    pub rmse_mean: Option<f64>,
    pub rmse_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub method: String,
    pub available: usize,
    pub label_ratio: f64,
    pub pretrain_p_mask: f64,
    pub sma_p_mask: f64,
    pub rmse_mean: Option<f64>,
    pub rmse_std: Option<f64>,
}

/// Cache key of a trained model: evaluation conditions never enter it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct ModelKey {
    method: Method,
    config: u64,
    ratio: u64,
    seed: u64,
    pretrain_p: Option<u64>,
    sma_p: Option<u64>,
}

/// Models trained by [`run_grid`], reusable across calls.
#[derive(Default)]
pub struct ModelCache {
    models: BTreeMap<ModelKey, std::result::Result<Arc<dyn Predictor>, String>>,
    pub pretrained: PretrainCache,
    trainings: usize,
}

impl ModelCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of downstream trainings performed so far (cache misses).
    pub fn trainings(&self) -> usize {
        self.trainings
    }
}

fn uses_pretrain_rate(m: Method) -> bool {
    matches!(m, Method::CrossL | Method::Proposed)
}

fn uses_sma_rate(m: Method) -> bool {
    matches!(m, Method::Sma | Method::Proposed)
}

/// Runs methods x ratios x seeds (x masking-rate cells), training each model
/// once and evaluating it at every available-station count. `data_for_seed`
/// supplies the experiment data of a seed; failures of a seed or a cell are
/// recorded in the rows and the grid carries on.
pub fn run_grid(
    spec: &SweepSpec,
    methods: &[Method],
    cfg: &MethodConfig,
    data_for_seed: &mut dyn FnMut(u64) -> Result<Arc<ExperimentData>>,
    cache: &mut ModelCache,
) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for &seed in &spec.seeds {
        let data = data_for_seed(seed);
        if let Ok(d) = &data {
            spec.validate(d.test.meta.n_stations)?;
        }
        for &method in methods {
            let cells: Vec<(Option<f64>, Option<f64>)> =
                if spec.p_mask_grid.is_empty() || !(uses_pretrain_rate(method) || uses_sma_rate(method)) {
                    vec![(None, None)]
                } else {
                    spec.p_mask_grid
                        .iter()
                        .map(|&(a, b)| (uses_pretrain_rate(method).then_some(a), uses_sma_rate(method).then_some(b)))
                        .collect()
                };
            for &ratio in &spec.label_ratios {
                for &(pre_p, sma_p) in &cells {
                    let row = |available, rmse, combinations, error, runtime_s| MetricsRow {
                        method: method.name().to_string(),
                        available,
                        label_ratio: ratio,
                        seed,
                        pretrain_p_mask: pre_p,
                        sma_p_mask: sma_p,
                        rmse,
                        combinations,
                        error,
                        runtime_s,
                    };
                    let data = match &data {
                        Ok(d) => d,
                        Err(e) => {
                            let msg = format!("data: {e}");
                            rows.extend(spec.available_station_counts.iter().map(|&k| row(k, None, 0, Some(msg.clone()), 0.0)));
                            continue;
                        }
                    };
                    let key = ModelKey {
                        method,
                        config: cfg.content_hash(),
                        ratio: ratio.to_bits(),
                        seed,
                        pretrain_p: pre_p.map(f64::to_bits),
                        sma_p: sma_p.map(f64::to_bits),
                    };
                    let started = Instant::now();
                    if !cache.models.contains_key(&key) {
                        let trained = label_ratio_subset(&data.train, ratio, seed).and_then(|labeled| {
                            let inputs = TrainInputs {
                                labeled: &labeled,
                                unlabeled: &data.unlabeled,
                                seed,
                                pretrain_p_mask: pre_p,
                                sma_p_mask: sma_p,
                            };
                            train_method(method, cfg, &inputs, &cache.pretrained)
                        });
                        if let Err(e) = &trained {
                            log::warn!("training {method} (ratio {ratio}, seed {seed}) failed: {e}");
                        }
                        cache.trainings += 1;
                        cache.models.insert(key.clone(), trained.map_err(|e| e.to_string()));
                    }
                    let train_time = started.elapsed().as_secs_f64();
                    let x = data.test.features();
                    let labels = data.test.labels_f64();
                    let n_st = data.test.meta.n_stations;
                    for &k in &spec.available_station_counts {
                        let t = Instant::now();
                        let model = match &cache.models[&key] {
                            Ok(m) => Arc::clone(m),
                            Err(e) => {
                                rows.push(row(k, None, 0, Some(e.clone()), train_time));
                                continue;
                            }
                        };
                        let mut rng = RandomStream::new(seed, &format!("eval/{method}/k={k}"));
                        let out = eval_at_availability(model.as_ref(), &x, &labels, n_st, k, spec.policy, spec.pooled, &mut rng);
                        let runtime = train_time + t.elapsed().as_secs_f64();
                        rows.push(match out {
                            Ok(r) => row(k, Some(r.rmse), r.combinations, None, runtime),
                            Err(e) => row(k, None, 0, Some(e.to_string()), runtime),
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

type SummaryKey = (String, usize, u64, Option<u64>, Option<u64>);

/// Mean and sample standard deviation over seeds of every (method, k,
/// ratio, masking-rate) cell, in first-appearance order.
pub fn summarize(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    let mut order: Vec<SummaryKey> = Vec::new();
    let mut groups: BTreeMap<SummaryKey, Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        let key = (
            r.method.clone(),
            r.available,
            r.label_ratio.to_bits(),
            r.pretrain_p_mask.map(f64::to_bits),
            r.sma_p_mask.map(f64::to_bits),
        );
        groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Vec::new()
        }).push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let members = &groups[&key];
            let ok: Vec<f64> = members.iter().filter_map(|r| r.rmse).collect();
            let mean = (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64);
            let first = members[0];
            SummaryRow {
                method: first.method.clone(),
                available: first.available,
                label_ratio: first.label_ratio,
                pretrain_p_mask: first.pretrain_p_mask,
                sma_p_mask: first.sma_p_mask,
                n_seeds: members.len(),
                n_failed: members.len() - ok.len(),
                rmse_mean: mean,
                rmse_std: mean.map(|m| sample_std(&ok, m)),
            }
        })
        .collect()
}

/// Summary cells that carry both masking rates.
pub fn heatmap(summary: &[SummaryRow]) -> Vec<HeatmapCell> {
    summary
        .iter()
        .filter_map(|s| {
            Some(HeatmapCell {
                method: s.method.clone(),
                available: s.available,
                label_ratio: s.label_ratio,
                pretrain_p_mask: s.pretrain_p_mask?,
                sma_p_mask: s.sma_p_mask?,
                rmse_mean: s.rmse_mean,
                rmse_std: s.rmse_std,
            })
        })
        .collect()
}

pub fn write_csv<T: Serialize, W: Write>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(reader: R) -> Result<Vec<MetricsRow>> {
    csv::Reader::from_reader(reader).deserialize().map(|r| r.map_err(Error::from)).collect()
}
