use serde::{Deserialize, Serialize};
use std::path::Path;

use super::extractor::{EncoderKind, FeatureExtractor};
use super::vicreg::{vicreg_loss_with_grad, VicregWeights};
use crate::error::{Error, Result};
use crate::masking::MaskSampler;
use crate::matrix::Matrix;
use crate::nnkit::{fit, AdamConfig, AdamState, Checkpoint, Evaluation, FitReport, Mode, TrainConfig};
use crate::pipeline::Dataset;
use crate::rng::RandomStream;
use crate::types::{EmbeddingBatch, MaskSet};

fn embedding_batch(z: Matrix) -> Result<EmbeddingBatch> {
    if !z.is_finite() {
        return Err(Error::NonFinite("embedding batch".into()));
    }
    EmbeddingBatch::new(z)
}

/// Self-supervised pre-training: each sample yields two views whose station
/// embeddings are masked with independent draws, and the VICReg loss between
/// the aggregated views is minimized over encoder and aggregator parameters.
pub fn pretrain(
    fx: FeatureExtractor,
    unlabeled: &Dataset,
    p_mask: f64,
    w: &VicregWeights,
    tc: &TrainConfig,
    rng: &RandomStream,
) -> Result<(FeatureExtractor, FitReport)> {
    w.validate()?;
    let sampler = MaskSampler::new(p_mask, fx.n_stations())?;
    if unlabeled.meta.n_stations != fx.n_stations() || unlabeled.meta.k != fx.k() {
        return Err(Error::Shape("dataset layout does not match the extractor".into()));
    }
    let n = unlabeled.len();
    if n < 2 {
        return Err(Error::Empty(format!("pre-training needs at least 2 samples, got {n}")));
    }
    let x = unlabeled.features();
    let tc = TrainConfig { batch_size: tc.batch_size.min(n), min_last_batch: tc.min_last_batch.max(2), ..tc.clone() };
    let adam = AdamConfig::new(tc.learning_rate);
    let mut opt = AdamState::new(&fx);
    let mut mask_rng = rng.derive("masks");
    let mut drop_rng = rng.derive("dropout");
    let mut batch_rng = rng.derive("batches");
    let mut model = fx;
    let report = fit(&mut model, n, &tc, &mut batch_rng, |fx, idx| {
        let xb = x.select_rows(idx);
        let mut m1 = Vec::with_capacity(idx.len());
        let mut m2 = Vec::with_capacity(idx.len());
        for _ in idx {
            m1.push(sampler.sample(&mut mask_rng));
            m2.push(sampler.sample(&mut mask_rng));
        }
        let q = fx.encode_batch(&xb, Mode::Train, &mut drop_rng)?;
        let (z1, t1) = fx.aggregate_batch(&q, Some(&m1), Mode::Train, &mut drop_rng)?;
        let (z2, t2) = fx.aggregate_batch(&q, Some(&m2), Mode::Train, &mut drop_rng)?;
        let eval = vicreg_loss_with_grad(&embedding_batch(z1)?, &embedding_batch(z2)?, w)?;
        let (mut dq, mut g) = fx.aggregator_backward(&t1, Some(&m1), &eval.grad_z)?;
        let (dq2, g2) = fx.aggregator_backward(&t2, Some(&m2), &eval.grad_z2)?;
        for (a, b) in dq.iter_mut().zip(&dq2) {
            a.add_assign(b);
        }
        g.accumulate(&g2);
        let grads = fx.encoders_backward(&q, &dq, g)?;
        if !grads.is_finite() {
            return Err(Error::NonFinite("pre-training gradient".into()));
        }
        opt.step(&adam, fx, &grads)?;
        fx.commit_encoder_stats(&q);
        fx.commit_aggregator_stats(&t1);
        fx.commit_aggregator_stats(&t2);
        Ok(eval.terms.total)
    })?;
    Ok((model, report))
}

/// VICReg loss of two fixed embedding-masked views of `x`, with gradients
/// with respect to all extractor parameters. Dropout masks are redrawn from
/// `seed` on every call so repeated evaluations are comparable.
pub fn vicreg_evaluation(
    fx: &FeatureExtractor,
    x: &Matrix,
    masks: (&[MaskSet], &[MaskSet]),
    w: &VicregWeights,
    mode: Mode,
    seed: u64,
) -> Result<Evaluation> {
    let mut rng = RandomStream::new(seed, "vicreg-eval");
    let q = fx.encode_batch(x, mode, &mut rng)?;
    let (z1, t1) = fx.aggregate_batch(&q, Some(masks.0), mode, &mut rng)?;
    let (z2, t2) = fx.aggregate_batch(&q, Some(masks.1), mode, &mut rng)?;
    let sig = q.kink_signature() ^ t1.kink_signature().rotate_left(17) ^ t2.kink_signature().rotate_left(29);
    let eval = vicreg_loss_with_grad(&embedding_batch(z1)?, &embedding_batch(z2)?, w)?;
    let (mut dq, mut g) = fx.aggregator_backward(&t1, Some(masks.0), &eval.grad_z)?;
    let (dq2, g2) = fx.aggregator_backward(&t2, Some(masks.1), &eval.grad_z2)?;
    for (a, b) in dq.iter_mut().zip(&dq2) {
        a.add_assign(b);
    }
    g.accumulate(&g2);
    let grads = fx.encoders_backward(&q, &dq, g)?;
    let hinge = eval.hinge_active.iter().fold(0u64, |h, &a| h.rotate_left(1) ^ u64::from(a));
    Ok(Evaluation { loss: eval.terms.total, grads: grads.flat(), kink_signature: sig ^ hinge.rotate_left(41) })
}

/// Metadata stored alongside extractor weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorManifest {
    pub encoder: String,
    pub n_stations: usize,
    pub k: usize,
    pub embedding_dim: usize,
    /// Embedding masking probability used in pre-training, if pre-trained.
    pub p_mask: Option<f64>,
    pub weights: Option<VicregWeights>,
    /// Estimator used for the per-dimension variance in the VICReg terms.
    pub variance_estimator: String,
    pub seed: Option<u64>,
}

impl ExtractorManifest {
    pub fn describe(fx: &FeatureExtractor) -> Self {
        Self {
            encoder: if fx.has_identity_encoders() { "identity".into() } else { "mlp".into() },
            n_stations: fx.n_stations(),
            k: fx.k(),
            embedding_dim: fx.embedding_dim(),
            p_mask: None,
            weights: None,
            variance_estimator: "unbiased".into(),
            seed: None,
        }
    }
}

pub fn extractor_checkpoint(fx: &FeatureExtractor, manifest: &ExtractorManifest) -> Result<Checkpoint> {
    let mut stacks = fx.encoders().to_vec();
    stacks.push(fx.aggregator().clone());
    Ok(Checkpoint { manifest: serde_json::to_value(manifest)?, stacks, adam: None })
}

pub fn extractor_from_checkpoint(ckpt: &Checkpoint) -> Result<(FeatureExtractor, ExtractorManifest)> {
    let manifest: ExtractorManifest = serde_json::from_value(ckpt.manifest.clone())?;
    let mut stacks = ckpt.stacks.clone();
    let aggregator = stacks.pop().ok_or_else(|| Error::Format("checkpoint holds no stacks".into()))?;
    let fx = FeatureExtractor::from_parts(manifest.n_stations, manifest.k, stacks, aggregator)?;
    if fx.embedding_dim() != manifest.embedding_dim {
        return Err(Error::Format("manifest embedding size disagrees with the weights".into()));
    }
    Ok((fx, manifest))
}

pub fn save_extractor(path: &Path, fx: &FeatureExtractor, manifest: &ExtractorManifest) -> Result<()> {
    extractor_checkpoint(fx, manifest)?.save(path)
}

pub fn load_extractor(path: &Path) -> Result<(FeatureExtractor, ExtractorManifest)> {
    extractor_from_checkpoint(&Checkpoint::load(path)?)
}

/// Encoder kind recorded in a manifest.
pub fn encoder_kind_name(kind: &EncoderKind) -> &'static str {
    match kind {
        EncoderKind::Identity => "identity",
        EncoderKind::Mlp { .. } => "mlp",
    }
}
