use serde::{Deserialize, Serialize};

use super::augment::{AugStrategy, AugmentConfig};
use std::path::Path;

use crate::crossl::{extractor_checkpoint, extractor_from_checkpoint, sample_row, ExtractorManifest, ExtractorSpec, FeatureExtractor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nnkit::{fit, Checkpoint, AdamConfig, AdamState, FitReport, Mode, MlpStack, Mse, LossFn, Parameterized, TrainConfig};
use crate::pipeline::Dataset;
use crate::rng::RandomStream;
use crate::types::{MaskSet, MultiStationSample};

/// Hidden width of the regression head.
pub const HEAD_HIDDEN: usize = 64;

/// Anything that maps flattened multi-station samples to scalar predictions.
pub trait Predictor: Send + Sync {
    /// One prediction per row; rows are flattened `N_d x K` samples with
    /// missing stations as zero blocks.
    fn predict_rows(&self, x: &Matrix) -> Result<Vec<f64>>;

    fn predict(&self, x: &MultiStationSample) -> Result<f64> {
        Ok(self.predict_rows(&sample_row(x))?[0])
    }
}

/// Always predicts the same value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPredictor {
    pub value: f64,
}

impl Default for ConstantPredictor {
    fn default() -> Self {
        Self { value: 0.5 }
    }
}

impl Predictor for ConstantPredictor {
    fn predict_rows(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(vec![self.value; x.rows()])
    }
}

pub fn constant_baseline() -> ConstantPredictor {
    ConstantPredictor::default()
}

/// RMSE of the constant `c` against labels uniform on `[lo, hi]`.
pub fn constant_rmse_uniform(lo: f64, hi: f64, c: f64) -> f64 {
    (((hi - c).powi(3) - (lo - c).powi(3)) / (3.0 * (hi - lo))).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Only the head is trained; the extractor runs in inference mode.
    Frozen,
    /// Extractor and head are trained end to end.
    Joint,
}

/// Feature extractor plus regression head.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingModel {
    pub extractor: FeatureExtractor,
    pub head: MlpStack,
    pub mode: TrainMode,
}

impl SensingModel {
    /// Attaches a fresh `dense -> ReLU -> dense` head.
    pub fn new(extractor: FeatureExtractor, mode: TrainMode, rng: &mut RandomStream) -> Result<Self> {
        let head = MlpStack::mlp_head(extractor.embedding_dim(), HEAD_HIDDEN, 1, rng)?;
        Ok(Self { extractor, head, mode })
    }

    /// Head directly on the concatenated raw input (no learnable extractor).
    pub fn raw_input(n_stations: usize, k: usize, rng: &mut RandomStream) -> Result<Self> {
        let fx = FeatureExtractor::from_parts(
            n_stations,
            k,
            vec![MlpStack::identity(k); n_stations],
            MlpStack::identity(n_stations * k),
        )?;
        Self::new(fx, TrainMode::Joint, rng)
    }

    pub fn input_width(&self) -> usize {
        self.extractor.input_width()
    }
}

/// Metadata stored with a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub extractor: ExtractorManifest,
    pub mode: TrainMode,
    pub augmentation: Option<AugmentConfig>,
    pub label_ratio: Option<f64>,
    pub seed: Option<u64>,
}

/// Stacks are the extractor's encoders, its aggregator, then the head.
pub fn model_checkpoint(model: &SensingModel, manifest: &ModelManifest) -> Result<Checkpoint> {
    let mut ckpt = extractor_checkpoint(&model.extractor, &manifest.extractor)?;
    ckpt.stacks.push(model.head.clone());
    ckpt.manifest = serde_json::to_value(manifest)?;
    Ok(ckpt)
}

pub fn model_from_checkpoint(ckpt: &Checkpoint) -> Result<(SensingModel, ModelManifest)> {
    let manifest: ModelManifest = serde_json::from_value(ckpt.manifest.clone())?;
    let mut stacks = ckpt.stacks.clone();
    let head = stacks.pop().ok_or_else(|| Error::Format("checkpoint holds no head".into()))?;
    let inner = Checkpoint { manifest: serde_json::to_value(&manifest.extractor)?, stacks, adam: None };
    let (extractor, _) = extractor_from_checkpoint(&inner)?;
    if head.input_width() != extractor.embedding_dim() {
        return Err(Error::Format("head width disagrees with the extractor".into()));
    }
    Ok((SensingModel { extractor, head, mode: manifest.mode }, manifest))
}

pub fn save_model(path: &Path, model: &SensingModel, manifest: &ModelManifest) -> Result<()> {
    model_checkpoint(model, manifest)?.save(path)
}

pub fn load_model(path: &Path) -> Result<(SensingModel, ModelManifest)> {
    model_from_checkpoint(&Checkpoint::load(path)?)
}

impl Predictor for SensingModel {
    fn predict_rows(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.head.infer(&self.extractor.embed(x)?)?.into_vec())
    }
}

impl Parameterized for SensingModel {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a [f64])) {
        self.extractor.visit_params(f);
        self.head.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.extractor.visit_params_mut(f);
        self.head.visit_params_mut(f);
    }
}

/// Training rows with the bookkeeping augmentation needs.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub observed_missing: Vec<MaskSet>,
    pub n_stations: usize,
    pub k: usize,
}

impl TrainingSet {
    pub fn from_dataset(d: &Dataset) -> Result<Self> {
        let labels = d.labels.as_ref().ok_or_else(|| Error::Config("downstream training needs labels".into()))?;
        if d.is_empty() {
            return Err(Error::Empty("empty labeled dataset".into()));
        }
        Ok(Self {
            x: d.features(),
            y: labels.iter().map(|&v| f64::from(v)).collect(),
            observed_missing: d.samples.iter().map(MultiStationSample::observed_missing).collect(),
            n_stations: d.meta.n_stations,
            k: d.meta.k,
        })
    }

    /// The block of a single station, as a one-station training set.
    pub fn station(&self, d: usize) -> Self {
        Self {
            x: self.x.columns(d * self.k, self.k),
            y: self.y.clone(),
            observed_missing: self
                .observed_missing
                .iter()
                .map(|m| if m.contains(d) { MaskSet::from_bits(1) } else { MaskSet::empty() })
                .collect(),
            n_stations: 1,
            k: self.k,
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    #[cfg(test)]
    pub(crate) fn doubled_for_test(&self, aug: &AugmentConfig, rng: &mut RandomStream) -> Result<Self> {
        self.doubled(aug, rng)
    }

    /// Appends one augmented copy of every sample.
    fn doubled(&self, aug: &AugmentConfig, rng: &mut RandomStream) -> Result<Self> {
        let n = self.len();
        let w = self.x.cols();
        let mut data = self.x.as_slice().to_vec();
        data.reserve(n * w);
        for i in 0..n {
            let mut row = self.x.row(i).to_vec();
            aug.apply_row(&mut row, self.n_stations, self.k, self.observed_missing[i], rng)?;
            data.extend(row);
        }
        let mut y = self.y.clone();
        y.extend_from_slice(&self.y);
        let mut om = self.observed_missing.clone();
        om.extend_from_slice(&self.observed_missing);
        Ok(Self { x: Matrix::from_vec(2 * n, w, data)?, y, observed_missing: om, n_stations: self.n_stations, k: self.k })
    }
}

/// Supervised MSE training of `model` on `labeled` with optional
/// augmentation. Random streams: `batches` (shuffling), `dropout`, and `aug`
/// (only consumed when augmenting), all derived from `rng`.
pub fn train_downstream(
    model: SensingModel,
    labeled: &Dataset,
    aug: &AugmentConfig,
    tc: &TrainConfig,
    rng: &RandomStream,
) -> Result<(SensingModel, FitReport)> {
    train_on_set(model, &TrainingSet::from_dataset(labeled)?, aug, tc, rng)
}

pub fn train_on_set(
    model: SensingModel,
    set: &TrainingSet,
    aug: &AugmentConfig,
    tc: &TrainConfig,
    rng: &RandomStream,
) -> Result<(SensingModel, FitReport)> {
    aug.validate()?;
    if set.is_empty() {
        return Err(Error::Empty("no training samples".into()));
    }
    if set.n_stations != model.extractor.n_stations() || set.k != model.extractor.k() {
        return Err(Error::Shape(format!(
            "data is {}x{}, model expects {}x{}",
            set.n_stations,
            set.k,
            model.extractor.n_stations(),
            model.extractor.k()
        )));
    }
    let mut aug_rng = rng.derive("aug");
    let mut drop_rng = rng.derive("dropout");
    let mut batch_rng = rng.derive("batches");
    let online = !aug.is_none() && aug.strategy == AugStrategy::Online;
    let expanded;
    let data = if !aug.is_none() && aug.strategy == AugStrategy::OfflineDouble {
        expanded = set.doubled(aug, &mut aug_rng)?;
        &expanded
    } else {
        set
    };
    let n = data.len();
    let tc = TrainConfig { batch_size: tc.batch_size.min(n), min_last_batch: tc.min_last_batch.max(2), ..tc.clone() };
    let adam = AdamConfig::new(tc.learning_rate);
    let y = Matrix::from_vec(n, 1, data.y.clone())?;
    let mut model = model;

    match model.mode {
        TrainMode::Frozen => {
            let fixed_embeddings = if online { None } else { Some(model.extractor.embed(&data.x)?) };
            let mut opt = AdamState::new(&model.head);
            let report = fit(&mut model, n, &tc, &mut batch_rng, |m, idx| {
                let e = match &fixed_embeddings {
                    Some(e) => e.select_rows(idx),
                    None => m.extractor.embed(&augment_batch(data, idx, aug, &mut aug_rng)?)?,
                };
                let (out, tape) = m.head.forward(&e, Mode::Train, &mut drop_rng)?;
                let (loss, g) = Mse::new(&y.select_rows(idx)).evaluate(&out)?;
                let (_, grads) = m.head.backward(&tape, &g)?;
                opt.step(&adam, &mut m.head, &grads)?;
                m.head.commit_batch_stats(&tape);
                Ok(loss)
            })?;
            Ok((model, report))
        }
        TrainMode::Joint => {
            let mut opt = AdamState::new(&model);
            let report = fit(&mut model, n, &tc, &mut batch_rng, |m, idx| {
                let xb = if online { augment_batch(data, idx, aug, &mut aug_rng)? } else { data.x.select_rows(idx) };
                let (z, fx_tape) = m.extractor.forward(&xb, None, Mode::Train, &mut drop_rng)?;
                let (out, head_tape) = m.head.forward(&z, Mode::Train, &mut drop_rng)?;
                let (loss, g) = Mse::new(&y.select_rows(idx)).evaluate(&out)?;
                let (dz, head_grads) = m.head.backward(&head_tape, &g)?;
                let mut grads = m.extractor.backward(&fx_tape, &dz)?;
                grads.extend(head_grads);
                opt.step(&adam, m, &grads)?;
                m.extractor.commit_batch_stats(&fx_tape);
                m.head.commit_batch_stats(&head_tape);
                Ok(loss)
            })?;
            Ok((model, report))
        }
    }
}

/// Rows `idx` of the set, each augmented with probability `p_aug`.
fn augment_batch(set: &TrainingSet, idx: &[usize], aug: &AugmentConfig, rng: &mut RandomStream) -> Result<Matrix> {
    let mut xb = set.x.select_rows(idx);
    for (r, &i) in idx.iter().enumerate() {
        if rng.bernoulli(aug.p_aug) {
            aug.apply_row(xb.row_mut(r), set.n_stations, set.k, set.observed_missing[i], rng)?;
        }
    }
    Ok(xb)
}

/// How the supervised-only baseline consumes its input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NaiveVariant {
    /// Head on the concatenated raw input.
    RawConcat,
    /// Randomly initialized extractor trained jointly with the head.
    FreshExtractor { spec: ExtractorSpec },
}

pub fn train_naive(
    labeled: &Dataset,
    variant: &NaiveVariant,
    aug: &AugmentConfig,
    tc: &TrainConfig,
    rng: &RandomStream,
) -> Result<(SensingModel, FitReport)> {
    let mut init = rng.derive("init");
    let model = match variant {
        NaiveVariant::RawConcat => SensingModel::raw_input(labeled.meta.n_stations, labeled.meta.k, &mut init)?,
        NaiveVariant::FreshExtractor { spec } => {
            let fx = FeatureExtractor::new(spec, &mut init)?;
            SensingModel::new(fx, TrainMode::Joint, &mut init)?
        }
    };
    train_downstream(model, labeled, aug, tc, &rng.derive("train"))
}
