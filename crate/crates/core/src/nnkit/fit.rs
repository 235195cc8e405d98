use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a strict improvement of the epoch loss before stopping.
    pub patience: usize,
    /// A trailing batch smaller than this is merged into the one before it.
    #[serde(default = "default_min_last_batch")]
    pub min_last_batch: usize,
}

fn default_min_last_batch() -> usize {
    1
}

impl TrainConfig {
    pub fn new(learning_rate: f64, batch_size: usize) -> Self {
        Self { learning_rate, batch_size, max_epochs: 1000, patience: 10, min_last_batch: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and max epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Sample-weighted mean training loss per epoch.
    pub history: Vec<f64>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub stopped_early: bool,
}

/// Shuffled mini-batch partition of `0..n`.
pub(crate) fn batches(n: usize, batch_size: usize, min_last: usize, rng: &mut RandomStream) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < min_last) {
        let tail = out.pop().unwrap_or_default();
        if let Some(prev) = out.last_mut() {
            prev.extend(tail);
        }
    }
    out
}

/// Runs epochs of `step` over shuffled mini-batches of `0..n` until the epoch
/// loss has not improved for `patience` epochs, then restores the model from
/// the best epoch. `step` updates the model in place and returns the batch
/// loss; a non-finite loss or an [`Error::NonFinite`] from `step` ends the
/// run with [`Error::Divergence`].
pub fn fit<M: Clone>(
    model: &mut M,
    n: usize,
    cfg: &TrainConfig,
    rng: &mut RandomStream,
    mut step: impl FnMut(&mut M, &[usize]) -> Result<f64>,
) -> Result<FitReport> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::Empty("no training samples".into()));
    }
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, M)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 0..cfg.max_epochs {
        let mut total = 0.0;
        for batch in batches(n, cfg.batch_size, cfg.min_last_batch, rng) {
            let loss = step(model, &batch).map_err(|e| match e {
                Error::NonFinite(detail) => Error::Divergence { epoch, detail },
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, detail: format!("batch loss {loss}") });
            }
            total += loss * batch.len() as f64;
        }
        let epoch_loss = total / n as f64;
        history.push(epoch_loss);
        log::debug!("epoch {epoch}: loss {epoch_loss:.6}");
        match &best {
            Some((_, b, _)) if epoch_loss >= *b => {
                since_best += 1;
                if since_best >= cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
            _ => {
                best = Some((epoch, epoch_loss, model.clone()));
                since_best = 0;
            }
        }
    }
    let (best_epoch, best_loss, best_model) = best.ok_or_else(|| Error::Empty("no epochs ran".into()))?;
    *model = best_model;
    Ok(FitReport { history, best_epoch, best_loss, stopped_early })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::nnkit::{loss_and_grads, AdamConfig, AdamState, MlpStack, Mode, Mse};

    #[test]
    fn batches_cover_every_index_once() {
        let mut rng = RandomStream::new(1, "b");
        let b = batches(10, 4, 3, &mut rng);
        assert_eq!(b.len(), 2);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(batches(9, 4, 1, &mut rng).last().unwrap().len(), 1);
    }

    fn fit_line(seed: u64) -> (MlpStack, FitReport) {
        let mut rng = RandomStream::new(seed, "line");
        let mut model = MlpStack::linear(1, 1, &mut rng).unwrap();
        let x = Matrix::from_fn(64, 1, |i, _| i as f64 / 32.0 - 1.0);
        let y = x.map(|v| 2.0 * v);
        let cfg = TrainConfig { max_epochs: 2000, patience: 20, ..TrainConfig::new(0.05, 16) };
        let mut opt = AdamState::new(&model);
        let adam = AdamConfig::new(cfg.learning_rate);
        let mut step_rng = rng.derive("step");
        let report = fit(&mut model, 64, &cfg, &mut rng, |m, idx| {
            let xb = x.select_rows(idx);
            let yb = y.select_rows(idx);
            let (loss, g) = loss_and_grads(m, &Mse::new(&yb), &xb, Mode::Train, &mut step_rng)?;
            opt.step(&adam, m, &g)?;
            Ok(loss)
        })
        .unwrap();
        (model, report)
    }

    #[test]
    fn learns_a_line() {
        let (model, report) = fit_line(3);
        let w = model.infer(&Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap()).unwrap();
        assert!((w.get(0, 0) - w.get(1, 0) - 2.0).abs() < 1e-3, "{w:?} {report:?}");
        assert!(w.get(1, 0).abs() < 1e-3);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let (a, ra) = fit_line(9);
        let (b, rb) = fit_line(9);
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn plateau_stops_after_patience() {
        let cfg = TrainConfig { patience: 10, ..TrainConfig::new(0.1, 4) };
        let mut rng = RandomStream::new(0, "plateau");
        let mut calls = 0usize;
        let mut model = 0u32;
        let report = fit(&mut model, 8, &cfg, &mut rng, |_, _| {
            calls += 1;
            // Improves for the first 4 epochs (2 batches each), then flat.
            Ok(if calls <= 6 { 10.0 - calls as f64 } else { 1.0 })
        })
        .unwrap();
        assert!(report.stopped_early);
        assert!(report.history.len() <= 15);
        assert_eq!(report.best_epoch, 3);
    }

    #[test]
    fn non_finite_loss_is_divergence() {
        let cfg = TrainConfig::new(0.1, 4);
        let mut rng = RandomStream::new(0, "nan");
        let err = fit(&mut (), 8, &cfg, &mut rng, |_, _| Ok(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 0, .. }));
    }
}
